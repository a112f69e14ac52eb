#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace usersim;
using testing_support::multiwoz;
using testing_support::templates;

namespace {

Transcript with_counts(std::vector<std::size_t> ms, Outcome o) {
  Transcript t;
  for (auto m : ms) {
    TurnRecord r;
    r.user_action.assign(m, SemanticAction{"inform", "hotel", "area", "north"});
    t.turns.push_back(r);
  }
  t.outcome = o;
  return t;
}

/// Random decisions over a small feature space; old log-probs come from `old_w`.
std::vector<StepSample> random_steps(std::size_t dim, const std::vector<double>& old_w, Rng& rng, std::size_t n = 12) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<StepSample> steps;
  for (std::size_t i = 0; i < n; ++i) {
    StepSample s;
    const auto decisions = 1 + detail::uniform_index(rng, 3);
    for (std::size_t d = 0; d < decisions; ++d) {
      ChoiceRecord c;
      const auto k = 2 + detail::uniform_index(rng, 4);
      for (std::size_t j = 0; j < k; ++j) {
        FeatureRow f(dim);
        for (auto& x : f) x = z(rng);
        c.options.push_back(f);
      }
      c.chosen = detail::uniform_index(rng, k);
      c.log_prob = choice_log_prob(old_w, 1.0, c);
      s.choices.push_back(c);
    }
    s.advantage = z(rng);
    steps.push_back(s);
  }
  return steps;
}

Environment small_env() {
  DialogueConfig dc;
  dc.max_turns = 20;
  return {multiwoz(), templates(), {}, dc, {}};
}

}  // namespace

TEST(Returns, StepRewardsFoldTerminal) {
  auto t = with_counts({1, 2, 1}, Outcome::success);
  EXPECT_EQ(step_rewards(t, reward_r2()), (std::vector<double>{10, 30, 90}));
  EXPECT_EQ(discounted_returns(step_rewards(t, reward_r2()), 1.0), (std::vector<double>{130, 120, 90}));
  auto f = with_counts({1}, Outcome::turn_limit);
  EXPECT_EQ(step_rewards(f, reward_r1()), (std::vector<double>{-45}));
}

TEST(Returns, Discounting) {
  auto g = discounted_returns({1, 1, 1}, 0.5);
  EXPECT_DOUBLE_EQ(g[0], 1.75);
  EXPECT_DOUBLE_EQ(g[1], 1.5);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
}

TEST(Returns, RunningBaseline) {
  RunningBaseline b;
  b.update({2, 4});
  EXPECT_DOUBLE_EQ(b.value(), 3);
  b.update({9});
  EXPECT_DOUBLE_EQ(b.value(), 5);
  Batch batch;
  batch.steps.resize(2);
  batch.steps[0].ret = 7;
  batch.steps[1].ret = 3;
  compute_advantages(batch, b, false);
  EXPECT_DOUBLE_EQ(batch.steps[0].advantage, 2);
  EXPECT_DOUBLE_EQ(batch.steps[1].advantage, -2);
}

TEST(PPO, GradientMatchesFiniteDifferences) {
  Rng rng(42);
  const std::size_t dim = 5;
  std::normal_distribution<double> z(0.0, 0.3);
  std::vector<double> old_w(dim);
  for (auto& x : old_w) x = z(rng);
  for (int trial = 0; trial < 20; ++trial) {
    auto steps = random_steps(dim, old_w, rng);
    auto w = old_w;
    for (auto& x : w) x += z(rng) * 0.2;
    for (double clip : {0.2, 0.5, std::numeric_limits<double>::infinity()}) {
      for (double ent : {0.0, 0.05}) {
        auto ev = evaluate_surrogate(w, 1.0, steps, clip, ent);
        for (std::size_t k = 0; k < dim; ++k) {
          const double h = 1e-6;
          auto wp = w, wm = w;
          wp[k] += h;
          wm[k] -= h;
          const double fd = (evaluate_surrogate(wp, 1.0, steps, clip, ent).objective -
                             evaluate_surrogate(wm, 1.0, steps, clip, ent).objective) / (2 * h);
          const double scale = std::max(1.0, std::abs(fd));
          EXPECT_LT(std::abs(ev.gradient[k] - fd) / scale, 1e-4) << "trial " << trial << " k " << k << " clip " << clip;
        }
      }
    }
  }
}

TEST(PPO, ZeroAdvantageLeavesParametersUnchanged) {
  Rng rng(3);
  auto p = PolicyParameters::zeros(5);
  p.weights = {0.1, -0.2, 0.3, 0.0, 0.5};
  Batch b;
  b.steps = random_steps(5, p.weights, rng);
  for (auto& s : b.steps) s.advantage = 0;
  PPOConfig cfg;
  auto [next, diag] = ppo_update(p, b, cfg);
  EXPECT_EQ(next.weights, p.weights);
  EXPECT_EQ(diag.grad_norm, 0);
}

TEST(PPO, InfiniteClipIsVanillaSurrogate) {
  Rng rng(8);
  std::vector<double> old_w{0.3, -0.1, 0.2, 0.7, -0.4};
  auto steps = random_steps(5, old_w, rng, 40);
  std::vector<double> w{1.0, -1.0, 0.5, 0.0, 2.0};
  auto ev = evaluate_surrogate(w, 1.0, steps, std::numeric_limits<double>::infinity(), 0.0);
  double vanilla = 0;
  for (const auto& s : steps) {
    double logp = 0;
    for (const auto& c : s.choices) logp += choice_log_prob(w, 1.0, c);
    vanilla += std::exp(logp - s.old_log_prob()) * s.advantage;
  }
  vanilla /= static_cast<double>(steps.size());
  EXPECT_NEAR(ev.surrogate, vanilla, 1e-9);
  EXPECT_EQ(ev.clip_fraction, 0);
}

TEST(PPO, ClippingFlattensFarRatios) {
  Rng rng(9);
  std::vector<double> old_w(5, 0.0);
  auto steps = random_steps(5, old_w, rng, 30);
  for (auto& s : steps) s.advantage = std::abs(s.advantage) + 0.1;
  std::vector<double> far(5, 4.0);
  auto ev = evaluate_surrogate(far, 1.0, steps, 0.2, 0.0);
  EXPECT_GT(ev.clip_fraction, 0);
  EXPECT_LE(ev.surrogate, 1.2 * [&] {
    double m = 0;
    for (const auto& s : steps) m += s.advantage;
    return m / static_cast<double>(steps.size());
  }() + 1e-12);
}

TEST(PPO, PositiveAdvantageRaisesChosenProbability) {
  ChoiceRecord c;
  c.options = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  c.chosen = 1;
  PolicyParameters p = PolicyParameters::zeros(3);
  c.log_prob = choice_log_prob(p.weights, 1.0, c);
  Batch b;
  b.steps.push_back({{c}, 1, 0, 0, 1.0});
  PPOConfig cfg;
  cfg.epochs = 1;
  auto next = ppo_update(p, b, cfg).first;
  EXPECT_GT(choice_log_prob(next.weights, 1.0, c), c.log_prob);
  b.steps[0].advantage = -1.0;
  next = ppo_update(p, b, cfg).first;
  EXPECT_LT(choice_log_prob(next.weights, 1.0, c), c.log_prob);
}

TEST(PPO, NonFiniteGradientAborts) {
  ChoiceRecord c;
  c.options = {{1.0}, {0.0}};
  c.log_prob = std::log(0.5);
  Batch b;
  b.steps.push_back({{c}, 1, 0, 0, std::numeric_limits<double>::infinity()});
  EXPECT_THROW(ppo_update(PolicyParameters::zeros(1), b, {}), NumericError);
}

TEST(PPO, ConfigValidation) {
  PPOConfig c;
  c.clip = 0;
  EXPECT_THROW(c.check(), ValidationError);
  c = {};
  c.gamma = 1.5;
  EXPECT_THROW(c.check(), ValidationError);
}

TEST(Training, ZeroEpochsReturnsInitialPolicy) {
  auto init = PolicyParameters::initial();
  auto r = train(init, small_env(), reward_r1(), {}, 0, 1);
  EXPECT_EQ(r.last.weights, init.weights);
  EXPECT_EQ(r.best.weights, init.weights);
  EXPECT_TRUE(r.curve.empty());
}

TEST(Training, CurveHasOneRowPerEpoch) {
  PPOConfig cfg;
  cfg.episodes = 8;
  auto r = train(PolicyParameters::initial(), small_env(), reward_r2(), cfg, 3, 1);
  ASSERT_EQ(r.curve.size(), 3u);
  EXPECT_NE(r.last.weights, PolicyParameters::initial().weights);
  auto tsv = curve_to_tsv(r.curve);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 4);
  EXPECT_EQ(curve_to_json(r.curve).size(), 3u);
}

TEST(Training, Deterministic) {
  PPOConfig cfg;
  cfg.episodes = 6;
  auto a = train(PolicyParameters::initial(), small_env(), reward_r1(), cfg, 2, 5);
  auto b = train(PolicyParameters::initial(), small_env(), reward_r1(), cfg, 2, 5);
  EXPECT_EQ(a.last.weights, b.last.weights);
}

TEST(CrossReward, TableAndBest) {
  auto env = small_env();
  auto make = [](PolicyParameters p) {
    return [p] { return std::unique_ptr<Generator>(std::make_unique<StochasticGenerator>(multiwoz(), templates(), p)); };
  };
  auto terse = PolicyParameters::initial();
  terse.weights[14] = 10;  // stop after the first action
  std::vector<PolicyGroup> rows{{"initial", {make(PolicyParameters::initial())}}, {"terse", {make(terse)}}};
  auto t = cross_reward_eval(rows, default_rewards(), env, 20, {1});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_LT(t.rows[1].actions.mean, t.rows[0].actions.mean);
  EXPECT_FALSE(t.best_under("r1").empty());
  EXPECT_EQ(t.best_under("r2", {"terse"}), "terse");
  EXPECT_THROW(cross_reward_eval(rows, default_rewards(), env, 0, {1}), ValidationError);
}
