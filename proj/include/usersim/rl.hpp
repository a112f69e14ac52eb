#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "usersim/harness.hpp"
#include "usersim/policy.hpp"
#include "usersim/stats.hpp"

namespace usersim {

struct PPOConfig {
  double clip = 0.2;
  double gamma = 0.99;
  int epochs = 4;            // gradient steps per update
  int episodes = 64;         // dialogues per batch
  double learning_rate = 0.2;
  double entropy_coef = 0.0;
  double max_grad_norm = 5.0;
  bool normalize_advantages = true;  // divide by the advantage spread (no re-centering)

  void check() const {
    if (!(clip > 0 && (clip < 1 || std::isinf(clip)))) throw ValidationError("ppo: clip must be in (0,1) or infinite");
    if (!(gamma > 0 && gamma <= 1)) throw ValidationError("ppo: gamma must be in (0,1]");
    if (epochs < 0 || episodes < 1) throw ValidationError("ppo: need epochs >= 0 and episodes >= 1");
    if (!(learning_rate >= 0) || !(max_grad_norm > 0) || !std::isfinite(entropy_coef))
      throw ValidationError("ppo: invalid learning rate, gradient cap or entropy coefficient");
  }
};

/// Everything needed to run training episodes.
struct Environment {
  const Ontology& ontology;
  const TemplateTable& templates;
  GoalSamplerConfig goals;
  DialogueConfig dialogue;
  ScriptedSystemConfig system;
};

/// One user turn as a PPO sample.
struct StepSample {
  std::vector<ChoiceRecord> choices;
  std::size_t m = 0;
  double reward = 0;
  double ret = 0;
  double advantage = 0;

  double old_log_prob() const {
    double s = 0;
    for (const auto& c : choices) s += c.log_prob;
    return s;
  }
};

struct Batch {
  std::vector<StepSample> steps;
  std::vector<Transcript> transcripts;
  std::vector<double> episode_returns;  // discounted return of each episode's first step
};

/// Per-turn rewards r = -rho_eff + rho_act * m, with the terminal success/failure reward folded
/// into the last turn; returns discounted by gamma.
inline std::vector<double> step_rewards(const Transcript& t, const RewardConfig& rc) {
  std::vector<double> r;
  for (const auto& turn : t.turns) r.push_back(user_turn_reward(turn.m(), rc));
  if (!r.empty()) r.back() += t.outcome == Outcome::success ? rc.success_reward : rc.fail_penalty;
  return r;
}

inline std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  std::vector<double> g(rewards.size());
  double acc = 0;
  for (std::size_t i = rewards.size(); i-- > 0;) g[i] = acc = rewards[i] + gamma * acc;
  return g;
}

inline Batch collect_batch(StochasticGenerator& policy, const Environment& env, const RewardConfig& rc,
                           const PPOConfig& cfg, std::size_t n, std::uint64_t seed, std::uint64_t first_index = 0) {
  rc.check();
  ScriptedSystem ds(env.ontology, env.system);
  auto dcfg = env.dialogue;
  dcfg.keep_traces = true;
  Batch b;
  b.transcripts = run_batch(policy, ds, env.ontology, env.templates, env.goals, dcfg, n, seed, first_index);
  for (const auto& t : b.transcripts) {
    auto rewards = step_rewards(t, rc);
    auto returns = discounted_returns(rewards, cfg.gamma);
    if (!returns.empty()) b.episode_returns.push_back(returns.front());
    for (std::size_t i = 0; i < t.turns.size(); ++i) {
      if (!t.turns[i].step) continue;
      b.steps.push_back({t.turns[i].step->trace, t.turns[i].m(), rewards[i], returns[i], 0});
    }
  }
  return b;
}

/// Running mean of every return seen so far.
class RunningBaseline {
 public:
  double value() const { return mean_; }
  std::size_t count() const { return n_; }
  void update(const std::vector<double>& xs) {
    for (double x : xs) {
      ++n_;
      mean_ += (x - mean_) / static_cast<double>(n_);
    }
  }

 private:
  double mean_ = 0;
  std::size_t n_ = 0;
};

/// A = G - b, with the baseline first absorbing this batch. Optional scaling by the spread of A.
inline void compute_advantages(Batch& b, RunningBaseline& baseline, bool normalize) {
  std::vector<double> rets;
  for (const auto& s : b.steps) rets.push_back(s.ret);
  baseline.update(rets);
  for (auto& s : b.steps) s.advantage = s.ret - baseline.value();
  if (normalize && b.steps.size() > 1) {
    std::vector<double> a;
    for (const auto& s : b.steps) a.push_back(s.advantage);
    const double m = mean(a);
    double var = 0;
    for (double x : a) var += (x - m) * (x - m);
    const double sd = std::sqrt(var / static_cast<double>(a.size()));
    if (sd > 1e-12)
      for (auto& s : b.steps) s.advantage /= sd;
  }
}

struct SurrogateEval {
  double objective = 0;  // clipped surrogate + entropy bonus
  double surrogate = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double kl = 0;  // mean(old log prob - new log prob)
  std::vector<double> gradient;
};

/// Objective mean(min(rho A, clip(rho, 1-eps, 1+eps) A)) + c * mean(H) and its analytic gradient.
/// Works for any feature dimension.
inline SurrogateEval evaluate_surrogate(const std::vector<double>& w, double temperature, const std::vector<StepSample>& steps,
                                        double clip, double entropy_coef) {
  if (steps.empty()) throw ValidationError("ppo: empty batch");
  if (temperature <= 0) throw ValidationError("ppo: training needs a positive temperature");
  const std::size_t dim = w.size();
  SurrogateEval ev;
  ev.gradient.assign(dim, 0.0);
  std::size_t clipped = 0;
  for (const auto& s : steps) {
    double logp = 0, ent = 0;
    std::vector<double> grad_logp(dim, 0.0), grad_ent(dim, 0.0);
    for (const auto& c : s.choices) {
      auto p = detail::softmax(w, c.options, temperature);
      logp += std::log(p[c.chosen]);
      std::vector<double> expect(dim, 0.0);
      double h = 0;
      for (std::size_t j = 0; j < p.size(); ++j) {
        for (std::size_t k = 0; k < dim; ++k) expect[k] += p[j] * c.options[j][k];
        if (p[j] > 0) h -= p[j] * std::log(p[j]);
      }
      ent += h;
      for (std::size_t k = 0; k < dim; ++k) grad_logp[k] += (c.options[c.chosen][k] - expect[k]) / temperature;
      // dH/ds_j = -p_j (log p_j + H), ds_j/dw = phi_j / T
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] <= 0) continue;
        const double coef = -p[j] * (std::log(p[j]) + h) / temperature;
        for (std::size_t k = 0; k < dim; ++k) grad_ent[k] += coef * c.options[j][k];
      }
    }
    const double old = s.old_log_prob();
    const double rho = std::exp(logp - old);
    const double unclipped = rho * s.advantage;
    const double clipped_value = std::clamp(rho, 1 - clip, 1 + clip) * s.advantage;
    if (std::abs(rho - 1) > clip) ++clipped;
    ev.surrogate += std::min(unclipped, clipped_value);
    ev.entropy += ent;
    ev.kl += old - logp;
    const bool unclipped_active = unclipped <= clipped_value;
    for (std::size_t k = 0; k < dim; ++k) {
      if (unclipped_active) ev.gradient[k] += rho * s.advantage * grad_logp[k];
      ev.gradient[k] += entropy_coef * grad_ent[k];
    }
  }
  const double n = static_cast<double>(steps.size());
  ev.surrogate /= n;
  ev.entropy /= n;
  ev.kl /= n;
  ev.clip_fraction = static_cast<double>(clipped) / n;
  ev.objective = ev.surrogate + entropy_coef * ev.entropy;
  for (auto& g : ev.gradient) g /= n;
  return ev;
}

struct UpdateDiagnostics {
  double surrogate = 0;
  double clip_fraction = 0;
  double kl = 0;
  double entropy = 0;
  double grad_norm = 0;  // before capping, last gradient step
};

inline Json to_json(const UpdateDiagnostics& d) {
  return Json{{"surrogate", d.surrogate}, {"clip_fraction", d.clip_fraction}, {"kl", d.kl}, {"entropy", d.entropy},
              {"grad_norm", d.grad_norm}};
}

/// Full-batch gradient ascent for cfg.epochs steps. Diagnostics are measured after the last step.
inline std::pair<PolicyParameters, UpdateDiagnostics> ppo_update(const PolicyParameters& policy, const Batch& batch,
                                                                 const PPOConfig& cfg) {
  cfg.check();
  if (batch.steps.empty()) throw ValidationError("ppo: empty batch");
  PolicyParameters p = policy;
  UpdateDiagnostics d;
  for (int e = 0; e < cfg.epochs; ++e) {
    auto ev = evaluate_surrogate(p.weights, p.temperature, batch.steps, cfg.clip, cfg.entropy_coef);
    double norm = 0;
    for (double g : ev.gradient) norm += g * g;
    norm = std::sqrt(norm);
    if (!std::isfinite(norm)) throw NumericError("ppo: non-finite gradient; update aborted");
    d.grad_norm = norm;
    const double scale = norm > cfg.max_grad_norm ? cfg.max_grad_norm / norm : 1.0;
    for (std::size_t k = 0; k < p.weights.size(); ++k) p.weights[k] += cfg.learning_rate * scale * ev.gradient[k];
  }
  auto ev = evaluate_surrogate(p.weights, p.temperature, batch.steps, cfg.clip, cfg.entropy_coef);
  d.surrogate = ev.surrogate;
  d.clip_fraction = ev.clip_fraction;
  d.kl = ev.kl;
  d.entropy = ev.entropy;
  p.check();
  return {std::move(p), d};
}

struct EpochStats {
  int epoch = 0;
  double mean_return = 0;
  double success_rate = 0;
  double mean_actions = 0;
  double mean_turns = 0;
  UpdateDiagnostics update;
};

struct TrainResult {
  PolicyParameters best;
  PolicyParameters last;
  double best_return = -std::numeric_limits<double>::infinity();
  std::vector<EpochStats> curve;
};

/// Collect / update loop. Batch e uses dialogue indices [e * episodes, (e + 1) * episodes) of
/// `seed`. The returned `best` is the policy whose own batch had the highest mean return.
inline TrainResult train(const PolicyParameters& init, const Environment& env, const RewardConfig& rc,
                         const PPOConfig& cfg, int epochs, std::uint64_t seed) {
  cfg.check();
  rc.check();
  TrainResult r;
  r.best = r.last = init;
  StochasticGenerator gen(env.ontology, env.templates, init);
  RunningBaseline baseline;
  for (int e = 0; e < epochs; ++e) {
    gen.set_parameters(r.last);
    const auto n = static_cast<std::size_t>(cfg.episodes);
    auto batch = collect_batch(gen, env, rc, cfg, n, seed, static_cast<std::uint64_t>(e) * n);
    EpochStats st;
    st.epoch = e;
    st.mean_return = mean(batch.episode_returns);
    auto sum = summarize(batch.transcripts, {});
    st.success_rate = sum.success_rate();
    st.mean_actions = sum.avg_actions;
    st.mean_turns = sum.avg_turns;
    if (st.mean_return > r.best_return) {
      r.best_return = st.mean_return;
      r.best = r.last;
    }
    if (!batch.steps.empty()) {
      compute_advantages(batch, baseline, cfg.normalize_advantages);
      auto [next, diag] = ppo_update(r.last, batch, cfg);
      r.last = std::move(next);
      st.update = diag;
    }
    r.curve.push_back(st);
  }
  return r;
}

inline std::string curve_to_tsv(const std::vector<EpochStats>& curve) {
  std::string out = "epoch\tmean_return\tsuccess_rate\tmean_actions\tmean_turns\tsurrogate\tclip_fraction\tkl\n";
  for (const auto& s : curve)
    out += std::to_string(s.epoch) + "\t" + format_fixed(s.mean_return, 4) + "\t" + format_fixed(s.success_rate, 4) + "\t" +
           format_fixed(s.mean_actions, 4) + "\t" + format_fixed(s.mean_turns, 4) + "\t" + format_fixed(s.update.surrogate, 6) +
           "\t" + format_fixed(s.update.clip_fraction, 4) + "\t" + format_fixed(s.update.kl, 6) + "\n";
  return out;
}

inline Json curve_to_json(const std::vector<EpochStats>& curve) {
  Json arr = Json::array();
  for (const auto& s : curve)
    arr.push_back({{"epoch", s.epoch}, {"mean_return", s.mean_return}, {"success_rate", s.success_rate},
                   {"mean_actions", s.mean_actions}, {"mean_turns", s.mean_turns}, {"update", to_json(s.update)}});
  return arr;
}

// ---------------------------------------------------------------------------
// Cross-reward evaluation

struct CrossRewardRow {
  std::string name;
  double success_rate = 0;
  MeanCI actions;  // per user turn, averaged per dialogue
  MeanCI turns;
  std::map<std::string, MeanCI> returns;  // undiscounted episode return per reward
};

struct CrossRewardTable {
  std::vector<std::string> reward_names;
  std::vector<CrossRewardRow> rows;

  std::string to_tsv() const {
    std::string out = "policy\tsuccess\tavg_acts\tturns";
    for (const auto& r : reward_names) out += "\t" + r;
    out += "\n";
    for (const auto& row : rows) {
      out += row.name + "\t" + format_fixed(row.success_rate, 3) + "\t" + format_fixed(row.actions.mean, 2) + "±" +
             format_fixed(row.actions.half_width, 2) + "\t" + format_fixed(row.turns.mean, 2) + "±" +
             format_fixed(row.turns.half_width, 2);
      for (const auto& r : reward_names)
        out += "\t" + format_fixed(row.returns.at(r).mean, 1) + "±" + format_fixed(row.returns.at(r).half_width, 1);
      out += "\n";
    }
    return out;
  }

  Json to_json() const {
    Json rows_j = Json::array();
    for (const auto& row : rows) {
      Json rets = Json::object();
      for (const auto& [k, v] : row.returns) rets[k] = {{"mean", v.mean}, {"ci95", v.half_width}};
      rows_j.push_back({{"policy", row.name},
                        {"success_rate", row.success_rate},
                        {"avg_actions", {{"mean", row.actions.mean}, {"ci95", row.actions.half_width}}},
                        {"turns", {{"mean", row.turns.mean}, {"ci95", row.turns.half_width}}},
                        {"returns", rets}});
    }
    return Json{{"rewards", reward_names}, {"rows", rows_j}};
  }

  /// Row with the highest mean return under `reward`, among `candidates` (all rows when empty).
  std::string best_under(const std::string& reward, const std::vector<std::string>& candidates = {}) const {
    std::string best;
    double v = -std::numeric_limits<double>::infinity();
    for (const auto& row : rows) {
      if (!candidates.empty() && std::find(candidates.begin(), candidates.end(), row.name) == candidates.end()) continue;
      if (row.returns.at(reward).mean > v) {
        v = row.returns.at(reward).mean;
        best = row.name;
      }
    }
    return best;
  }
};

/// One table row; several members (e.g. one policy per training seed) are pooled.
struct PolicyGroup {
  std::string name;
  std::vector<std::function<std::unique_ptr<Generator>()>> members;
};

/// Evaluates each row on the same dialogues and scores every transcript under every reward.
inline CrossRewardTable cross_reward_eval(const std::vector<PolicyGroup>& policies, const NamedRewards& rewards,
                                          const Environment& env, std::size_t n, const std::vector<std::uint64_t>& seeds) {
  if (n == 0 || seeds.empty() || policies.empty() || rewards.empty())
    throw ValidationError("cross_reward_eval: need policies, rewards, seeds and n > 0");
  CrossRewardTable table;
  for (const auto& [name, rc] : rewards) table.reward_names.push_back(name);
  ScriptedSystem ds(env.ontology, env.system);
  for (const auto& pol : policies) {
    if (pol.members.empty()) throw ValidationError("cross_reward_eval: row '" + pol.name + "' has no policy");
    std::vector<double> acts, turns;
    std::map<std::string, std::vector<double>> rets;
    std::size_t succ = 0, total = 0;
    for (const auto& make : pol.members) {
      auto gen = make();
      for (auto seed : seeds) {
        for (const auto& t : run_batch(*gen, ds, env.ontology, env.templates, env.goals, env.dialogue, n, seed)) {
          ++total;
          if (t.outcome == Outcome::success) ++succ;
          double m = 0;
          for (const auto& turn : t.turns) m += static_cast<double>(turn.m());
          acts.push_back(t.turns.empty() ? 0 : m / static_cast<double>(t.turns.size()));
          turns.push_back(static_cast<double>(t.total_turns()));
          for (const auto& [rn, rc] : rewards) rets[rn].push_back(user_episode_return(t, rc));
        }
      }
    }
    CrossRewardRow row;
    row.name = pol.name;
    row.success_rate = static_cast<double>(succ) / static_cast<double>(total);
    row.actions = mean_ci(acts);
    row.turns = mean_ci(turns);
    for (const auto& [rn, v] : rets) row.returns[rn] = mean_ci(v);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace usersim
