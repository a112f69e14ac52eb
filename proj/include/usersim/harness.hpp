#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "usersim/generators.hpp"
#include "usersim/goals.hpp"
#include "usersim/stats.hpp"

namespace usersim {

// ---------------------------------------------------------------------------
// Rewards

struct RewardConfig {
  double rho_eff = 0;
  double rho_act = 0;
  double success_reward = 80;
  double fail_penalty = -40;

  void check() const {
    if (!(success_reward > 0 && fail_penalty < 0)) throw ValidationError("reward: need success_reward > 0 > fail_penalty");
    for (double v : {rho_eff, rho_act, success_reward, fail_penalty})
      if (!std::isfinite(v)) throw ValidationError("reward: non-finite coefficient");
  }
};

/// r1 as printed: -5 per action, no turn penalty.
inline RewardConfig reward_r1() { return {0, -5}; }
/// r1 under its prose label ("low action reward").
inline RewardConfig reward_r1_prose() { return {5, 1}; }
inline RewardConfig reward_r2() { return {10, 20}; }

inline RewardConfig reward_preset(const std::string& name) {
  if (name == "r1") return reward_r1();
  if (name == "r1_prose") return reward_r1_prose();
  if (name == "r2") return reward_r2();
  throw ValidationError("unknown reward preset '" + name + "' (r1, r1_prose, r2)");
}

inline double user_turn_reward(std::size_t m, const RewardConfig& rc) {
  return -rc.rho_eff + rc.rho_act * static_cast<double>(m);
}

using NamedRewards = std::vector<std::pair<std::string, RewardConfig>>;

inline NamedRewards default_rewards() { return {{"r1", reward_r1()}, {"r2", reward_r2()}}; }

// ---------------------------------------------------------------------------
// Scripted dialogue system

struct ScriptedSystemConfig {
  double p_u = 1.0;           // probability of understanding each user action
  double failure_rate = 0.0;  // per-turn probability of a failure reply in the active domain
  int request_depth = 1;      // system requests per domain before it only answers
  int entities_per_domain = 3;
  bool keyword_nlu = false;   // understand from the user's text instead of its actions

  void check() const {
    if (!(p_u >= 0 && p_u <= 1)) throw ValidationError("scripted system: p_u must be in [0,1]");
    if (!(failure_rate >= 0 && failure_rate <= 1)) throw ValidationError("scripted system: failure_rate must be in [0,1]");
    if (request_depth < 0) throw ValidationError("scripted system: request_depth must be >= 0");
    if (entities_per_domain < 1) throw ValidationError("scripted system: entities_per_domain must be >= 1");
  }
};

inline Json to_json(const ScriptedSystemConfig& c) {
  return Json{{"p_u", c.p_u}, {"failure_rate", c.failure_rate}, {"request_depth", c.request_depth},
              {"entities_per_domain", c.entities_per_domain}, {"keyword_nlu", c.keyword_nlu}};
}

/// Rule-based system acting on semantic actions. State is per dialogue; call reset() first.
class ScriptedSystem {
 public:
  ScriptedSystem(const Ontology& o, ScriptedSystemConfig cfg) : o_(o), cfg_(cfg) {
    cfg_.check();
    inform_ = pick(IntentRole::inform);
    request_ = pick(IntentRole::request);
    booked_ = pick(IntentRole::booked);
    failure_ = pick(IntentRole::failure);
    idle_ = o.first_system_intent(IntentRole::general);
    bye_ = pick(IntentRole::bye);
    if (!inform_ || !request_ || !booked_ || !failure_ || !idle_ || !bye_)
      throw ValidationError("scripted system: ontology lacks a system intent with role inform, request, booked, failure, general or bye");
  }

  const ScriptedSystemConfig& config() const { return cfg_; }

  /// Builds a fresh synthetic database and clears the dialogue state.
  void reset(Rng& rng) {
    db_.clear();
    state_.clear();
    active_.reset();
    for (const auto& d : o_.domains()) {
      auto& rows = db_[d.name];
      for (int k = 0; k < cfg_.entities_per_domain; ++k) {
        std::map<std::string, std::string> row;
        for (const auto& s : d.slots) {
          const auto& pool = s.pool();
          row[s.name] = pool.empty() ? synthetic_value(d.name, s.name, k) : pool[detail::uniform_index(rng, pool.size())];
        }
        rows.push_back(std::move(row));
      }
    }
  }

  ActionList opening() const { return {general_action(idle_->name)}; }

  /// Reacts to the last user turn.
  ActionList respond(const ActionList& user, const std::string& user_text, Rng& rng) {
    ActionList understood;
    for (const auto& a : user) {
      if (cfg_.keyword_nlu && !spotted(a, user_text)) continue;
      if (detail::uniform01(rng) < cfg_.p_u) understood.push_back(a);
    }
    ActionList out;
    auto push = [&](SemanticAction a) {
      if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(std::move(a));
    };
    std::vector<std::string> book_domains;
    std::vector<SemanticAction> requests;
    for (const auto& a : understood) {
      auto role = o_.user_role(a.intent);
      if (role == IntentRole::bye) return {general_action(bye_->name)};
      const auto* slot = o_.find_slot(a.domain, a.slot);
      if (!slot) continue;
      if (role == IntentRole::inform) {
        state_[a.domain].constraints[a.slot] = a.value;
        active_ = a.domain;
        if (slot->allows(Kind::book) && a.value != kDontCare &&
            std::find(book_domains.begin(), book_domains.end(), a.domain) == book_domains.end())
          book_domains.push_back(a.domain);
      } else if (role == IntentRole::request) {
        requests.push_back(a);
        active_ = a.domain;
      }
    }
    if (active_ && !understood.empty() && cfg_.failure_rate > 0 && detail::uniform01(rng) < cfg_.failure_rate)
      return {{failure_->name, *active_, std::string(kNone), std::string(kNone)}};
    for (const auto& r : requests) push({inform_->name, r.domain, r.slot, entity_value(r.domain, r.slot)});
    for (const auto& d : book_domains) push({booked_->name, d, std::string(kNone), std::string(kNone)});
    if (active_ && requests.empty() && book_domains.empty()) {
      auto& st = state_[*active_];
      if (st.requests_made < cfg_.request_depth) {
        for (const auto& s : o_.find_domain(*active_)->slots) {
          if (!s.allows(Kind::info) || st.constraints.count(s.name) || st.asked.count(s.name)) continue;
          push({request_->name, *active_, s.name, std::string(kAsk)});
          st.asked.insert(s.name);
          ++st.requests_made;
          break;
        }
      }
    }
    if (out.empty()) push(general_action(idle_->name));
    return out;
  }

 private:
  struct DomainState {
    std::map<std::string, std::string> constraints;
    std::set<std::string> asked;
    int requests_made = 0;
  };

  /// Intent named after the role if there is one, else the first intent carrying it.
  const Intent* pick(IntentRole role) const {
    for (const auto& i : o_.system_intents())
      if (i.role == role && i.name == to_string(role)) return &i;
    return o_.first_system_intent(role);
  }

  static std::string synthetic_value(const std::string& d, const std::string& s, int k) {
    std::string v = d + "-" + s + "-" + std::to_string(k + 1);
    std::replace(v.begin(), v.end(), ' ', '-');
    return v;
  }

  /// Value of the first database row, with the user's own constraints taking precedence.
  std::string entity_value(const std::string& d, const std::string& s) const {
    auto st = state_.find(d);
    if (st != state_.end()) {
      auto c = st->second.constraints.find(s);
      if (c != st->second.constraints.end() && c->second != kDontCare) return c->second;
    }
    return db_.at(d).front().at(s);
  }

  static bool spotted(const SemanticAction& a, const std::string& text) {
    const auto lower = detail::to_lower(text);
    if (is_concrete_value(a.value) && a.value != kDontCare) return lower.find(detail::to_lower(a.value)) != std::string::npos;
    if (a.slot != kNone) return lower.find(detail::to_lower(a.slot)) != std::string::npos;
    return true;
  }

  const Ontology& o_;
  ScriptedSystemConfig cfg_;
  const Intent *inform_, *request_, *booked_, *failure_, *idle_, *bye_;
  std::map<std::string, std::vector<std::map<std::string, std::string>>> db_;
  std::map<std::string, DomainState> state_;
  std::optional<std::string> active_;
};

// ---------------------------------------------------------------------------
// Dialogue loop

enum class Outcome { success, failure, turn_limit };

inline std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::success: return "success";
    case Outcome::failure: return "failure";
    case Outcome::turn_limit: return "turn_limit";
  }
  return "failure";
}

struct TurnRecord {
  int turn = 0;
  ActionList system_action;
  std::string system_text;
  ActionList user_action;
  std::string user_text;
  std::vector<std::string> warnings;
  UserGoal goal;                   // after both updates of this exchange
  std::optional<PolicyStep> step;  // in memory only
  std::size_t m() const { return user_action.size(); }
};

struct Transcript {
  std::uint64_t index = 0;
  UserGoal initial_goal;
  std::vector<TurnRecord> turns;
  Outcome outcome = Outcome::failure;
  std::optional<std::string> error;
  UserGoal final_goal;
  std::size_t total_turns() const { return turns.size(); }
};

struct DialogueConfig {
  int max_turns = 40;
  GraphOptions graph;
  bool keep_traces = false;  // keep PolicyStep traces for training

  void check() const {
    if (max_turns < 1) throw ValidationError("max_turns must be >= 1");
    if (graph.max_actions < 1) throw ValidationError("max_actions must be >= 1");
  }
};

/// -1 per exchange, +80 on success, -40 otherwise (turn limit included).
inline double ds_episode_return(const Transcript& t) {
  double r = -static_cast<double>(t.total_turns());
  return r + (t.outcome == Outcome::success ? 80.0 : -40.0);
}

inline double user_episode_return(const Transcript& t, const RewardConfig& rc) {
  double r = 0;
  for (const auto& turn : t.turns) r += user_turn_reward(turn.m(), rc);
  return r + (t.outcome == Outcome::success ? rc.success_reward : rc.fail_penalty);
}

/// One exchange per turn: system acts, goal absorbs it, the user answers inside the turn graph,
/// goal absorbs that. Ends on a user bye, on the exchange after the goal became satisfied, or
/// at max_turns.
inline Transcript run_dialogue(Generator& us, ScriptedSystem& ds, const Ontology& o, const TemplateTable& templates,
                               const UserGoal& goal, const DialogueConfig& cfg, Rng& rng) {
  cfg.check();
  Transcript t;
  t.initial_goal = goal;
  t.final_goal = goal;
  if (goal.empty()) {
    t.outcome = Outcome::success;
    return t;
  }
  ds.reset(rng);
  InputContext ctx;
  ctx.goal = goal;
  ActionList last_user;
  std::string last_text;
  bool user_bye = false;
  for (int turn = 0; turn < cfg.max_turns && !user_bye; ++turn) {
    TurnRecord rec;
    rec.turn = turn;
    rec.system_action = turn == 0 ? ds.opening() : ds.respond(last_user, last_text, rng);
    rec.system_text = realize(rec.system_action, o, templates, Side::system);
    ctx.goal = update_on_system(ctx.goal, rec.system_action, o, rng).first;
    const bool closing = is_satisfied(ctx.goal);
    ctx.system_action = rec.system_action;
    ctx.turn = turn;
    auto cg = build_graph(o, ctx.goal, rec.system_action, cfg.graph);
    Generation gen;
    try {
      gen = us.generate(ctx, cg, rng);
    } catch (const Error& e) {
      rec.goal = ctx.goal;
      t.turns.push_back(std::move(rec));
      t.error = e.what();
      break;
    }
    if (auto bad = validate_action_list(cg, gen.output.action); !bad.empty()) {
      rec.goal = ctx.goal;
      t.turns.push_back(std::move(rec));
      t.error = "generator emitted an action outside the turn graph: " + bad.front().action.str();
      break;
    }
    rec.user_action = gen.output.action;
    rec.user_text = gen.output.text;
    rec.warnings = std::move(gen.warnings);
    if (cfg.keep_traces) rec.step = std::move(gen.step);
    ctx.goal = update_on_user(ctx.goal, rec.user_action, o);
    rec.goal = ctx.goal;
    for (const auto& a : rec.user_action)
      if (o.user_role(a.intent) == IntentRole::bye) user_bye = true;
    last_user = rec.user_action;
    last_text = rec.user_text;
    ctx.push_history(rec.user_action);
    t.turns.push_back(std::move(rec));
    if (closing) break;
  }
  t.final_goal = ctx.goal;
  if (is_satisfied(t.final_goal)) t.outcome = Outcome::success;
  else if (!t.error && !user_bye && static_cast<int>(t.turns.size()) >= cfg.max_turns) t.outcome = Outcome::turn_limit;
  else t.outcome = Outcome::failure;
  return t;
}

// ---------------------------------------------------------------------------
// Transcript JSONL

inline Json transcript_to_json(const Transcript& t, const NamedRewards& rewards) {
  Json turns = Json::array();
  for (const auto& r : t.turns) {
    Json rw = Json::object();
    for (const auto& [name, rc] : rewards) rw[name] = user_turn_reward(r.m(), rc);
    turns.push_back(Json{{"turn", r.turn},
                         {"system", {{"action", actions_to_json(r.system_action)}, {"text", r.system_text}}},
                         {"user", {{"action", actions_to_json(r.user_action)}, {"text", r.user_text}}},
                         {"m", r.m()},
                         {"rewards", rw},
                         {"warnings", r.warnings},
                         {"goal", goal_to_json(r.goal)}});
  }
  Json returns = {{"ds", ds_episode_return(t)}};
  for (const auto& [name, rc] : rewards) returns[name] = user_episode_return(t, rc);
  Json j = {{"dialogue", t.index},
            {"initial_goal", goal_to_json(t.initial_goal)},
            {"turns", std::move(turns)},
            {"outcome", to_string(t.outcome)},
            {"total_turns", t.total_turns()},
            {"returns", std::move(returns)}};
  if (t.error) j["error"] = *t.error;
  return j;
}

/// Corpus view of a transcript: alternating sys / usr turns, initial goal.
inline Dialogue to_dialogue(const Transcript& t) {
  Dialogue d;
  d.goal = t.initial_goal;
  for (const auto& r : t.turns) {
    d.turns.push_back({Speaker::sys, r.system_action, r.system_text});
    d.turns.push_back({Speaker::usr, r.user_action, r.user_text});
  }
  return d;
}

/// Artifact provenance header.
struct ArtifactStamp {
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline Json meta_json(const ArtifactStamp& p) {
  return Json{{"meta", {{"config_hash", p.config_hash}, {"seed", p.seed}, {"version", std::string(kVersion)}}}};
}

// ---------------------------------------------------------------------------
// Batches

struct BatchSummary {
  std::size_t dialogues = 0;
  std::size_t successes = 0;
  double avg_turns = 0;
  double avg_actions = 0;  // per user turn
  std::map<std::string, double> avg_returns;

  double success_rate() const { return dialogues ? static_cast<double>(successes) / static_cast<double>(dialogues) : 0; }
};

inline BatchSummary summarize(const std::vector<Transcript>& ts, const NamedRewards& rewards) {
  BatchSummary s;
  s.dialogues = ts.size();
  double turns = 0, acts = 0, user_turns = 0;
  for (const auto& t : ts) {
    if (t.outcome == Outcome::success) ++s.successes;
    turns += static_cast<double>(t.total_turns());
    for (const auto& r : t.turns) {
      acts += static_cast<double>(r.m());
      user_turns += 1;
    }
    s.avg_returns["ds"] += ds_episode_return(t);
    for (const auto& [name, rc] : rewards) s.avg_returns[name] += user_episode_return(t, rc);
  }
  if (!ts.empty()) {
    s.avg_turns = turns / static_cast<double>(ts.size());
    for (auto& [k, v] : s.avg_returns) v /= static_cast<double>(ts.size());
  }
  s.avg_actions = user_turns > 0 ? acts / user_turns : 0;
  return s;
}

inline Json to_json(const BatchSummary& s) {
  return Json{{"dialogues", s.dialogues}, {"successes", s.successes}, {"success_rate", s.success_rate()},
              {"avg_turns", s.avg_turns}, {"avg_actions_per_turn", s.avg_actions}, {"avg_returns", s.avg_returns}};
}

/// Dialogue i uses its own stream derived from (seed, i) for goal sampling and interaction,
/// so results do not depend on batch order.
inline std::vector<Transcript> run_batch(Generator& us, ScriptedSystem& ds, const Ontology& o,
                                         const TemplateTable& templates, const GoalSamplerConfig& goals,
                                         const DialogueConfig& cfg, std::size_t n, std::uint64_t seed,
                                         std::uint64_t first_index = 0) {
  std::vector<Transcript> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto index = first_index + i;
    Rng rng = detail::derived_rng(seed, index);
    auto goal = sample_goal(o, goals, rng);
    auto t = run_dialogue(us, ds, o, templates, goal, cfg, rng);
    t.index = index;
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-model evaluation

struct CrossEvalCell {
  std::size_t n = 0;
  std::size_t successes = 0;
  double rate = 0;
  Interval ci;
};

struct CrossEvalMatrix {
  std::vector<std::string> systems;
  std::vector<std::string> users;
  std::vector<std::vector<CrossEvalCell>> cells;  // [system][user]

  std::string to_tsv() const {
    std::string out = "system\\user";
    for (const auto& u : users) out += "\t" + u;
    out += "\n";
    for (std::size_t i = 0; i < systems.size(); ++i) {
      out += systems[i];
      for (const auto& c : cells[i]) out += "\t" + format_fixed(c.rate, 3);
      out += "\n";
    }
    return out;
  }

  Json to_json() const {
    Json rows = Json::array();
    for (std::size_t i = 0; i < systems.size(); ++i) {
      Json row = Json::object();
      for (std::size_t j = 0; j < users.size(); ++j) {
        const auto& c = cells[i][j];
        row[users[j]] = {{"n", c.n}, {"successes", c.successes}, {"rate", c.rate}, {"ci95", {c.ci.lo, c.ci.hi}}};
      }
      rows.push_back({{"system", systems[i]}, {"users", row}});
    }
    return Json{{"systems", systems}, {"users", users}, {"matrix", rows}};
  }
};

struct NamedSystem {
  std::string name;
  ScriptedSystemConfig config;
};

struct NamedUser {
  std::string name;
  std::function<std::unique_ptr<Generator>()> make;
};

/// matrix[i][j]: success rate of system i talking to user j, over n dialogues per seed.
/// Every cell sees the same goals for a given seed.
inline CrossEvalMatrix cross_eval(const std::vector<NamedSystem>& systems, const std::vector<NamedUser>& users,
                                  const Ontology& o, const TemplateTable& templates, const GoalSamplerConfig& goals,
                                  const DialogueConfig& cfg, std::size_t n_dialogues,
                                  const std::vector<std::uint64_t>& seeds) {
  if (n_dialogues == 0 || seeds.empty() || systems.empty() || users.empty())
    throw ValidationError("cross_eval: need at least one system, user, seed and dialogue");
  CrossEvalMatrix m;
  for (const auto& s : systems) m.systems.push_back(s.name);
  for (const auto& u : users) m.users.push_back(u.name);
  m.cells.assign(systems.size(), std::vector<CrossEvalCell>(users.size()));
  for (std::size_t i = 0; i < systems.size(); ++i) {
    ScriptedSystem ds(o, systems[i].config);
    for (std::size_t j = 0; j < users.size(); ++j) {
      auto us = users[j].make();
      auto& cell = m.cells[i][j];
      for (auto seed : seeds)
        for (const auto& t : run_batch(*us, ds, o, templates, goals, cfg, n_dialogues, seed)) {
          ++cell.n;
          if (t.outcome == Outcome::success) ++cell.successes;
        }
      cell.rate = static_cast<double>(cell.successes) / static_cast<double>(cell.n);
      cell.ci = wilson_interval(cell.successes, cell.n);
    }
  }
  return m;
}

}  // namespace usersim
