#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "usersim/decoder.hpp"
#include "usersim/goals.hpp"

namespace usersim {

/// Distribution over the number of actions the rule policy aims for per turn.
using ActionCountDist = std::map<std::size_t, double>;

inline ActionCountDist default_action_counts() { return {{1, 0.65}, {2, 0.30}, {3, 0.05}}; }

inline std::size_t sample_action_count(const ActionCountDist& dist, Rng& rng) {
  double total = 0;
  for (const auto& [k, p] : dist) {
    if (!(p >= 0) || !std::isfinite(p)) throw ValidationError("actions-per-turn weights must be finite and >= 0");
    total += p;
  }
  if (dist.empty() || total <= 0) throw ValidationError("actions-per-turn distribution is empty");
  double u = detail::uniform01(rng) * total;
  for (const auto& [k, p] : dist) {
    if (u < p) return k;
    u -= p;
  }
  return dist.rbegin()->first;
}

namespace detail {

/// First goal domain (priority order) that still has an unfulfilled entry.
inline std::optional<std::string> focus_domain(const UserGoal& g) {
  for (const auto& e : g.entries())
    if (e.status != Status::fulfilled) return e.domain;
  return std::nullopt;
}

inline std::vector<SemanticAction> system_requests(const Ontology& o, const ActionList& sys) {
  std::vector<SemanticAction> out;
  for (const auto& a : sys)
    if (o.system_role(a.intent) == IntentRole::request && o.find_slot(a.domain, a.slot)) out.push_back(a);
  return out;
}

}  // namespace detail

/// Agenda-style reference policy. Priorities:
///  1. answer every system request (goal value, else dontcare)
///  2. re-inform entries in conflict
///  3. inform not_mentioned info/book entries of the focus domain
///  4. request its not_mentioned reqt slots, re-inform book entries awaiting a booking,
///     re-request unanswered reqt slots
///  5. bye when nothing is pending
/// Rules 1-2 are always emitted; 3-4 fill up to a sampled per-turn count.
inline ActionList rule_policy_step(const Ontology& o, const UserGoal& g, const ActionList& sys,
                                   const ConstraintGraph& cg, Rng& rng,
                                   const ActionCountDist& counts = default_action_counts()) {
  const std::size_t want = std::min(sample_action_count(counts, rng), cg.max_actions());
  const Intent* inform = o.first_user_intent(IntentRole::inform);
  const Intent* request = o.first_user_intent(IntentRole::request);
  ActionList out;
  auto push = [&](SemanticAction a) {
    if (out.size() >= cg.max_actions() || !cg.contains(a)) return;
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(std::move(a));
  };

  for (const auto& r : detail::system_requests(o, sys)) {
    auto i = g.find_constraint(r.domain, r.slot);
    push({inform->name, r.domain, r.slot, i ? g[*i].value : std::string(kDontCare)});
  }
  for (const auto& e : g.entries())
    if (e.is_constraint() && e.status == Status::conflict) push({inform->name, e.domain, e.slot, e.value});

  if (auto focus = detail::focus_domain(g)) {
    std::vector<SemanticAction> agenda;
    for (const auto& e : g.entries())
      if (e.domain == *focus && e.is_constraint() && e.status == Status::not_mentioned)
        agenda.push_back({inform->name, e.domain, e.slot, e.value});
    for (const auto& e : g.entries())
      if (e.domain == *focus && e.kind == Kind::reqt && e.status == Status::not_mentioned)
        agenda.push_back({request->name, e.domain, e.slot, std::string(kAsk)});
    for (const auto& e : g.entries())
      if (e.domain == *focus && e.kind == Kind::book && e.status == Status::requested)
        agenda.push_back({inform->name, e.domain, e.slot, e.value});
    for (const auto& e : g.entries())
      if (e.domain == *focus && e.kind == Kind::reqt && e.status == Status::requested)
        agenda.push_back({request->name, e.domain, e.slot, std::string(kAsk)});
    for (auto& a : agenda) {
      if (out.size() >= want) break;
      push(std::move(a));
    }
  }
  if (out.empty()) push(general_action(o.first_user_intent(IntentRole::bye)->name));
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic policy

/// Feature layout. Candidate features are zero for STOP and vice versa.
inline const std::vector<std::string>& policy_feature_names() {
  static const std::vector<std::string> names = {
      "inform_pending",      // inform of a not_mentioned goal value
      "inform_conflict",     // re-inform of a conflicting goal value
      "inform_booking",      // re-inform of a book value awaiting confirmation
      "answer_sys_request",  // answer to this turn's system request (goal value or dontcare)
      "inform_other_value",  // any other inform
      "request_pending",     // request of a not_mentioned reqt slot
      "request_repeat",      // request of a reqt slot already asked
      "bye_satisfied",
      "bye_unsatisfied",
      "general",
      "other_role",
      "priority",            // 1 / (1 + rank among unfulfilled entries)
      "focus_domain",
      "stop_bias",
      "stop_count",          // actions already chosen
      "stop_empty",
      "stop_open_requests",  // system requests not answered yet
      "stop_turn",           // turn / 10
  };
  return names;
}

inline constexpr std::size_t kPolicyFeatures = 18;

using FeatureRow = std::vector<double>;

/// One softmax decision: the option feature rows, which one was taken, and its log-probability
/// under the policy that sampled it.
struct ChoiceRecord {
  std::vector<FeatureRow> options;
  std::size_t chosen = 0;
  double log_prob = 0;
};

struct PolicyParameters {
  std::vector<double> weights;
  double temperature = 1.0;
  std::vector<std::string> feature_names;

  /// Hand-set starting point that behaves roughly like the rule policy.
  static PolicyParameters initial() {
    PolicyParameters p;
    p.feature_names = policy_feature_names();
    p.weights = {2.0, 2.5, 1.0, 3.0, -3.0, 1.5, 0.5, 2.0, -4.0, -2.0, -3.0, 1.0, 1.0,
                 1.5, 2.0, -3.0, -3.0, 0.0};
    return p;
  }

  static PolicyParameters zeros(std::size_t n = kPolicyFeatures) {
    PolicyParameters p;
    p.weights.assign(n, 0.0);
    p.feature_names = n == kPolicyFeatures ? policy_feature_names() : std::vector<std::string>(n, "");
    return p;
  }

  void check() const {
    if (!feature_names.empty() && feature_names.size() != weights.size())
      throw ValidationError("policy: feature manifest and weight vector differ in length");
    for (double w : weights)
      if (!std::isfinite(w)) throw NumericError("policy: non-finite weight");
    if (!std::isfinite(temperature)) throw NumericError("policy: non-finite temperature");
  }
};

inline Json policy_to_json(const PolicyParameters& p) {
  return Json{{"temperature", p.temperature}, {"features", p.feature_names}, {"weights", p.weights}};
}

inline PolicyParameters policy_from_json(const Json& j) {
  PolicyParameters p;
  try {
    p.temperature = j.at("temperature").get<double>();
    p.feature_names = j.at("features").get<std::vector<std::string>>();
    p.weights = j.at("weights").get<std::vector<double>>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("policy checkpoint: ") + e.what());
  }
  if (p.feature_names != policy_feature_names())
    throw ValidationError("policy checkpoint: feature manifest does not match this build");
  p.check();
  return p;
}

namespace detail {

inline double dot(const std::vector<double>& w, const FeatureRow& f) {
  double s = 0;
  for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
  return s;
}

/// Softmax of scores / T. T <= 0 puts all mass on the first maximal score.
inline std::vector<double> softmax(const std::vector<double>& w, const std::vector<FeatureRow>& options, double T) {
  std::vector<double> s(options.size());
  for (std::size_t i = 0; i < options.size(); ++i) s[i] = dot(w, options[i]);
  std::vector<double> p(options.size(), 0.0);
  if (T <= 0) {
    p[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())] = 1.0;
    return p;
  }
  double mx = *std::max_element(s.begin(), s.end());
  double z = 0;
  for (std::size_t i = 0; i < s.size(); ++i) z += (p[i] = std::exp((s[i] - mx) / T));
  for (auto& x : p) x /= z;
  return p;
}

}  // namespace detail

/// log pi(chosen) for a stored decision under weights w.
inline double choice_log_prob(const std::vector<double>& w, double T, const ChoiceRecord& c) {
  auto p = detail::softmax(w, c.options, T);
  return std::log(p[c.chosen]);
}

struct PolicyStep {
  ActionList action;
  double log_prob = 0;
  std::vector<ChoiceRecord> trace;
};

/// Feature rows for a turn. Shared by sampling and by tests that recompute probabilities.
class FeatureBuilder {
 public:
  FeatureBuilder(const Ontology& o, const UserGoal& g, const ActionList& sys, int turn)
      : o_(o), g_(g), sys_requests_(detail::system_requests(o, sys)), turn_(turn), focus_(detail::focus_domain(g)) {
    std::size_t rank = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (g[i].status != Status::fulfilled) rank_[i] = rank++;
  }

  FeatureRow candidate(const SemanticAction& a) const {
    FeatureRow f(kPolicyFeatures, 0.0);
    auto role = o_.user_role(a.intent).value_or(IntentRole::other);
    std::optional<std::size_t> entry;
    switch (role) {
      case IntentRole::inform: {
        bool answered = false;
        for (const auto& r : sys_requests_)
          if (r.domain == a.domain && r.slot == a.slot) {
            auto i = g_.find_constraint(a.domain, a.slot);
            answered = i ? g_[*i].value == a.value : a.value == kDontCare;
          }
        auto i = g_.find_constraint(a.domain, a.slot);
        if (i && g_[*i].value == a.value) entry = i;
        if (answered) f[3] = 1;
        else if (entry && g_[*entry].status == Status::not_mentioned) f[0] = 1;
        else if (entry && g_[*entry].status == Status::conflict) f[1] = 1;
        else if (entry && g_[*entry].status == Status::requested) f[2] = 1;
        else f[4] = 1;
        break;
      }
      case IntentRole::request:
        entry = g_.find(a.domain, Kind::reqt, a.slot);
        if (entry && g_[*entry].status == Status::requested) f[6] = 1;
        else f[5] = 1;
        break;
      case IntentRole::bye:
        f[is_satisfied(g_) ? 7 : 8] = 1;
        break;
      case IntentRole::general:
        f[9] = 1;
        break;
      default:
        f[10] = 1;
        break;
    }
    if (entry) {
      auto it = rank_.find(*entry);
      if (it != rank_.end()) f[11] = 1.0 / (1.0 + static_cast<double>(it->second));
    }
    if (focus_ && a.domain == *focus_) f[12] = 1;
    return f;
  }

  FeatureRow stop(const ActionList& chosen) const {
    FeatureRow f(kPolicyFeatures, 0.0);
    f[13] = 1;
    f[14] = static_cast<double>(chosen.size());
    f[15] = chosen.empty() ? 1 : 0;
    double open = 0;
    for (const auto& r : sys_requests_) {
      bool done = std::any_of(chosen.begin(), chosen.end(),
                              [&](const SemanticAction& c) { return c.domain == r.domain && c.slot == r.slot; });
      if (!done) open += 1;
    }
    f[16] = open;
    f[17] = turn_ / 10.0;
    return f;
  }

 private:
  const Ontology& o_;
  const UserGoal& g_;
  std::vector<SemanticAction> sys_requests_;
  int turn_;
  std::optional<std::string> focus_;
  std::map<std::size_t, std::size_t> rank_;
};

/// Samples an action list path by path. At each boundary the options are every unused graph
/// path plus STOP (last); at max_actions the list closes without a decision.
inline PolicyStep stochastic_policy_step(const PolicyParameters& p, const Ontology& o, const UserGoal& g,
                                         const ActionList& sys, const ConstraintGraph& cg, int turn, Rng& rng) {
  FeatureBuilder fb(o, g, sys, turn);
  std::vector<FeatureRow> cand_rows;
  cand_rows.reserve(cg.paths().size());
  for (const auto& path : cg.paths()) cand_rows.push_back(fb.candidate(path.action));
  std::vector<bool> used(cg.paths().size(), false);

  PolicyStep step;
  while (step.action.size() < cg.max_actions()) {
    ChoiceRecord c;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < used.size(); ++i)
      if (!used[i]) {
        c.options.push_back(cand_rows[i]);
        index.push_back(i);
      }
    c.options.push_back(fb.stop(step.action));
    auto probs = detail::softmax(p.weights, c.options, p.temperature);
    if (p.temperature <= 0) {
      c.chosen = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    } else {
      double u = detail::uniform01(rng);
      c.chosen = probs.size() - 1;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        if (u < probs[i]) {
          c.chosen = i;
          break;
        }
        u -= probs[i];
      }
    }
    c.log_prob = std::log(probs[c.chosen]);
    step.log_prob += c.log_prob;
    const bool stop = c.chosen + 1 == c.options.size();
    if (!stop) {
      used[index[c.chosen]] = true;
      step.action.push_back(cg.paths()[index[c.chosen]].action);
    }
    step.trace.push_back(std::move(c));
    if (stop) break;
  }
  return step;
}

}  // namespace usersim
