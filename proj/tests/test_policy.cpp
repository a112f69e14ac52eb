#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace usersim;
using testing_support::entry;
using testing_support::multiwoz;

namespace {

UserGoal table6_goal() {
  return UserGoal::from_entries({
      entry("attraction", Kind::info, "type", "college"),
      entry("attraction", Kind::reqt, "postcode", "?"),
      entry("attraction", Kind::reqt, "entrance fee", "?"),
      entry("hotel", Kind::info, "area", "north"),
      entry("hotel", Kind::info, "stars", "0"),
      entry("hotel", Kind::reqt, "parking", "?"),
      entry("taxi", Kind::info, "arrive", "13:00"),
      entry("taxi", Kind::reqt, "phone", "?"),
      entry("taxi", Kind::reqt, "car type", "?"),
  });
}

const ActionList kWelcome{{"welcome", "general", "none", "none"}};

}  // namespace

TEST(RulePolicy, OpensWithFirstGoalConstraint) {
  Rng rng(1);
  auto g = table6_goal();
  auto cg = build_graph(multiwoz(), g, kWelcome);
  auto out = rule_policy_step(multiwoz(), g, kWelcome, cg, rng, {{1, 1.0}});
  EXPECT_EQ(out, (ActionList{{"inform", "attraction", "type", "college"}}));
}

TEST(RulePolicy, FillsUpToSampledCount) {
  Rng rng(1);
  auto g = table6_goal();
  auto cg = build_graph(multiwoz(), g, kWelcome);
  auto out = rule_policy_step(multiwoz(), g, kWelcome, cg, rng, {{3, 1.0}});
  EXPECT_EQ(out, (ActionList{{"inform", "attraction", "type", "college"},
                             {"request", "attraction", "postcode", "?"},
                             {"request", "attraction", "entrance fee", "?"}}));
}

TEST(RulePolicy, AnswersSystemRequestFirst) {
  Rng rng(1);
  auto g = table6_goal();
  ActionList sys{{"request", "hotel", "stars", "?"}, {"request", "hotel", "price", "?"}};
  auto cg = build_graph(multiwoz(), g, sys);
  auto out = rule_policy_step(multiwoz(), g, sys, cg, rng, {{1, 1.0}});
  ASSERT_GE(out.size(), 2u);
  EXPECT_EQ(out[0], (SemanticAction{"inform", "hotel", "stars", "0"}));
  EXPECT_EQ(out[1], (SemanticAction{"inform", "hotel", "price", "dontcare"}));
}

TEST(RulePolicy, ReinformsAfterNoOffer) {
  Rng rng(4);
  auto g = UserGoal::from_entries({entry("hotel", Kind::info, "area", "north", Status::fulfilled),
                                   entry("hotel", Kind::reqt, "addr", "?", Status::requested)});
  ActionList sys{{"nooffer", "hotel", "none", "none"}};
  auto g2 = update_on_system(g, sys, multiwoz(), rng).first;
  ASSERT_NE(g2[0].value, "north");
  auto cg = build_graph(multiwoz(), g2, sys);
  auto out = rule_policy_step(multiwoz(), g2, sys, cg, rng, {{1, 1.0}});
  EXPECT_EQ(out, (ActionList{{"inform", "hotel", "area", g2[0].value}}));
}

TEST(RulePolicy, ByeWhenNothingPending) {
  Rng rng(1);
  auto g = UserGoal::from_entries({entry("hotel", Kind::info, "area", "north", Status::fulfilled)});
  auto cg = build_graph(multiwoz(), g, kWelcome);
  EXPECT_EQ(rule_policy_step(multiwoz(), g, kWelcome, cg, rng), (ActionList{{"bye", "general", "none", "none"}}));
}

TEST(RulePolicy, RejectsBadCountDistribution) {
  Rng rng(1);
  EXPECT_THROW(sample_action_count({}, rng), ValidationError);
  EXPECT_THROW(sample_action_count({{1, -1.0}}, rng), ValidationError);
}

TEST(StochasticPolicy, ZeroWeightsSampleUniformly) {
  auto g = testing_support::hotel_taxi_goal();
  auto cg = build_graph(multiwoz(), g, {});
  const std::size_t k = cg.paths().size() + 1;
  auto p = PolicyParameters::zeros();
  Rng rng(1);
  std::vector<int> counts(k, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto step = stochastic_policy_step(p, multiwoz(), g, {}, cg, 0, rng);
    ++counts[step.trace.front().chosen];
  }
  const double q = 1.0 / static_cast<double>(k);
  const double sigma = std::sqrt(n * q * (1 - q));
  for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(counts[i], n * q, 3 * sigma) << i;
}

TEST(StochasticPolicy, GreedyAtZeroTemperature) {
  auto g = table6_goal();
  auto cg = build_graph(multiwoz(), g, kWelcome);
  auto p = PolicyParameters::initial();
  p.temperature = 0;
  Rng a(1), b(2);
  auto s1 = stochastic_policy_step(p, multiwoz(), g, kWelcome, cg, 0, a);
  auto s2 = stochastic_policy_step(p, multiwoz(), g, kWelcome, cg, 0, b);
  EXPECT_EQ(s1.action, s2.action);
  EXPECT_DOUBLE_EQ(s1.log_prob, 0.0);
  ASSERT_FALSE(s1.action.empty());
  EXPECT_EQ(s1.action[0], (SemanticAction{"inform", "attraction", "type", "college"}));
}

TEST(StochasticPolicy, StaysInsideGraph) {
  Rng rng(5);
  auto p = PolicyParameters::initial();
  for (int i = 0; i < 300; ++i) {
    auto t = testing_support::random_triple(multiwoz(), rng);
    auto cg = build_graph(multiwoz(), t.goal, t.system);
    auto step = stochastic_policy_step(p, multiwoz(), t.goal, t.system, cg, i % 10, rng);
    EXPECT_TRUE(validate_action_list(cg, step.action).empty()) << to_string(step.action);
  }
}

TEST(StochasticPolicy, LogProbRecomputes) {
  Rng rng(7);
  auto p = PolicyParameters::initial();
  for (int i = 0; i < 100; ++i) {
    auto t = testing_support::random_triple(multiwoz(), rng);
    auto cg = build_graph(multiwoz(), t.goal, t.system);
    auto step = stochastic_policy_step(p, multiwoz(), t.goal, t.system, cg, 1, rng);
    double total = 0;
    for (const auto& c : step.trace) {
      EXPECT_NEAR(choice_log_prob(p.weights, p.temperature, c), c.log_prob, 1e-12);
      total += c.log_prob;
    }
    EXPECT_NEAR(total, step.log_prob, 1e-9);
    // STOP is always the last option and only the last decision may pick it.
    for (std::size_t k = 0; k + 1 < step.trace.size(); ++k)
      EXPECT_NE(step.trace[k].chosen + 1, step.trace[k].options.size());
  }
}

TEST(StochasticPolicy, RaisingAWeightRaisesItsOption) {
  auto g = testing_support::hotel_taxi_goal();
  FeatureBuilder fb(multiwoz(), g, {}, 0);
  std::vector<FeatureRow> rows;
  auto cg = build_graph(multiwoz(), g, {});
  for (const auto& path : cg.paths()) rows.push_back(fb.candidate(path.action));
  rows.push_back(fb.stop({}));
  auto w = PolicyParameters::initial().weights;
  const std::size_t stop = rows.size() - 1;
  double prev = detail::softmax(w, rows, 1.0)[stop];
  for (int i = 0; i < 10; ++i) {
    w[13] += 0.5;
    double cur = detail::softmax(w, rows, 1.0)[stop];
    EXPECT_GT(cur, prev);
    prev = cur;
  }
}

TEST(StochasticPolicy, CheckpointRoundTrip) {
  auto p = PolicyParameters::initial();
  p.temperature = 0.7;
  auto back = policy_from_json(Json::parse(policy_to_json(p).dump()));
  EXPECT_EQ(back.weights, p.weights);
  EXPECT_EQ(back.temperature, p.temperature);
  auto j = policy_to_json(p);
  j["features"][0] = "renamed";
  EXPECT_THROW(policy_from_json(j), ValidationError);
  j = policy_to_json(p);
  j["weights"].erase(0);
  EXPECT_THROW(policy_from_json(j), ValidationError);
}
