#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "usersim/action.hpp"
#include "usersim/ontology.hpp"

namespace usersim {

enum class Status { not_mentioned, fulfilled, conflict, requested };

inline std::string_view to_string(Status s) {
  switch (s) {
    case Status::not_mentioned: return "not_mentioned";
    case Status::fulfilled: return "fulfilled";
    case Status::conflict: return "conflict";
    case Status::requested: return "requested";
  }
  return "not_mentioned";
}

inline std::optional<Status> status_from_string(std::string_view s) {
  for (auto st : {Status::not_mentioned, Status::fulfilled, Status::conflict, Status::requested})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

struct GoalEntry {
  std::string domain;
  Kind kind = Kind::info;
  std::string slot;
  std::string value;
  Status status = Status::not_mentioned;

  bool is_constraint() const { return kind == Kind::info || kind == Kind::book; }

  friend bool operator==(const GoalEntry&, const GoalEntry&) = default;
};

class UserGoal;

namespace detail {
struct GoalAccess {
  static std::vector<GoalEntry>& entries(UserGoal& g);
};
}  // namespace detail

/// Ordered goal; position is user priority. Statuses change only through the update
/// functions below, which return new values.
class UserGoal {
 public:
  UserGoal() = default;

  /// Builds a goal from explicit entries. Rejects duplicate (domain, kind, slot) triples and
  /// entries violating kind=reqt <=> value="?".
  static UserGoal from_entries(std::vector<GoalEntry> entries) {
    std::set<std::tuple<std::string, Kind, std::string>> seen;
    for (const auto& e : entries) {
      if (e.domain.empty() || e.slot.empty())
        throw ValidationError("goal: entries need a domain and a slot");
      if (!seen.emplace(e.domain, e.kind, e.slot).second)
        throw ValidationError("goal: duplicate entry " + e.domain + "/" +
                              std::string(to_string(e.kind)) + "/" + e.slot);
      if ((e.kind == Kind::reqt) != (e.value == kAsk))
        throw ValidationError("goal: reqt entries carry '?' and only they do (" + e.domain + "." +
                              e.slot + ")");
    }
    UserGoal g;
    g.entries_ = std::move(entries);
    return g;
  }

  const std::vector<GoalEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const GoalEntry& operator[](std::size_t i) const { return entries_[i]; }

  std::optional<std::size_t> find(std::string_view domain, Kind kind, std::string_view slot) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].domain == domain && entries_[i].kind == kind && entries_[i].slot == slot) return i;
    return std::nullopt;
  }

  /// The info or book entry for (domain, slot), if any; info wins when both exist.
  std::optional<std::size_t> find_constraint(std::string_view domain, std::string_view slot) const {
    if (auto i = find(domain, Kind::info, slot)) return i;
    return find(domain, Kind::book, slot);
  }

  /// Domains in priority order of first appearance.
  std::vector<std::string> domains() const {
    std::vector<std::string> out;
    for (const auto& e : entries_)
      if (std::find(out.begin(), out.end(), e.domain) == out.end()) out.push_back(e.domain);
    return out;
  }

  friend bool operator==(const UserGoal&, const UserGoal&) = default;

 private:
  friend struct detail::GoalAccess;
  std::vector<GoalEntry> entries_;
};

inline std::vector<GoalEntry>& detail::GoalAccess::entries(UserGoal& g) { return g.entries_; }

/// True iff every entry is fulfilled. The empty goal is vacuously satisfied.
inline bool is_satisfied(const UserGoal& g) {
  return std::all_of(g.entries().begin(), g.entries().end(),
                     [](const GoalEntry& e) { return e.status == Status::fulfilled; });
}

/// Throws ValidationError unless every entry is expressible under the ontology.
inline void validate_goal(const UserGoal& g, const Ontology& o) {
  for (const auto& e : g.entries()) {
    const auto* slot = o.find_slot(e.domain, e.slot);
    const std::string where = e.domain + "." + e.slot;
    if (!slot) throw ValidationError("goal: unknown slot " + where);
    if (!slot->allows(e.kind))
      throw ValidationError("goal: slot " + where + " does not allow kind " + std::string(to_string(e.kind)));
    if (e.kind != Kind::reqt && !o.is_legal_value(e.domain, e.slot, e.value))
      throw ValidationError("goal: illegal value '" + e.value + "' for " + where);
  }
}

// ---------------------------------------------------------------------------
// Sampling

struct CountRange {
  int min = 0;
  int max = 0;
};

struct GoalSamplerConfig {
  CountRange domains{1, 3};
  CountRange info{1, 3};
  CountRange reqt{1, 2};
  CountRange book{0, 2};
};

/// Samples a goal legal under `o`. Priority scheme: domains in random order; within a domain
/// the info entries, then book entries, then reqt entries, each group shuffled.
inline UserGoal sample_goal(const Ontology& o, const GoalSamplerConfig& cfg, Rng& rng) {
  auto bad = [](const std::string& m) { throw ValidationError("goal sampler: " + m); };
  for (auto r : {cfg.domains, cfg.info, cfg.reqt, cfg.book})
    if (r.min < 0 || r.max < r.min) bad("count ranges need 0 <= min <= max");

  auto capable = [](const DomainSchema& d, Kind k) {
    std::vector<const SlotSchema*> out;
    for (const auto& s : d.slots)
      if (s.allows(k)) out.push_back(&s);
    return out;
  };
  std::vector<const DomainSchema*> eligible;
  for (const auto& d : o.domains()) {
    auto ni = static_cast<int>(capable(d, Kind::info).size());
    auto nr = static_cast<int>(capable(d, Kind::reqt).size());
    auto nb = static_cast<int>(capable(d, Kind::book).size());
    if (ni >= cfg.info.min && nr >= cfg.reqt.min && nb >= cfg.book.min &&
        static_cast<int>(d.slots.size()) >= cfg.info.min + cfg.reqt.min + cfg.book.min)
      eligible.push_back(&d);
  }
  if (static_cast<int>(eligible.size()) < cfg.domains.min)
    bad("ontology has " + std::to_string(eligible.size()) + " domains able to satisfy the per-domain counts, " +
        std::to_string(cfg.domains.min) + " required");

  auto draw = [&rng](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int hi_domains = std::min<int>(cfg.domains.max, static_cast<int>(eligible.size()));
  const int n_domains = draw(cfg.domains.min, hi_domains);
  std::shuffle(eligible.begin(), eligible.end(), rng);

  std::vector<GoalEntry> entries;
  for (int di = 0; di < n_domains; ++di) {
    const auto& dom = *eligible[static_cast<std::size_t>(di)];
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      std::set<std::string> used;
      std::vector<GoalEntry> local;
      bool ok = true;
      for (Kind kind : {Kind::info, Kind::book, Kind::reqt}) {
        const auto& range = kind == Kind::info ? cfg.info : kind == Kind::book ? cfg.book : cfg.reqt;
        std::vector<const SlotSchema*> pool;
        for (const auto* s : capable(dom, kind))
          if (!used.count(s->name)) pool.push_back(s);
        if (static_cast<int>(pool.size()) < range.min) {
          ok = false;
          break;
        }
        const int n = draw(range.min, std::min<int>(range.max, static_cast<int>(pool.size())));
        std::shuffle(pool.begin(), pool.end(), rng);
        for (int k = 0; k < n; ++k) {
          const auto* s = pool[static_cast<std::size_t>(k)];
          used.insert(s->name);
          std::string value = kind == Kind::reqt ? std::string(kAsk)
                                                 : s->pool()[detail::uniform_index(rng, s->pool().size())];
          local.push_back({dom.name, kind, s->name, std::move(value), Status::not_mentioned});
        }
      }
      if (ok) {
        entries.insert(entries.end(), local.begin(), local.end());
        placed = true;
      }
    }
    if (!placed) bad("cannot place the requested slot counts in domain '" + dom.name + "'");
  }
  return UserGoal::from_entries(std::move(entries));
}

// ---------------------------------------------------------------------------
// Updates

/// One auditable status or value transition.
struct GoalChange {
  enum class Rule { match, conflict, answer, booked, replaced, unreplaceable, ignored };
  Rule rule = Rule::ignored;
  std::optional<std::size_t> entry;  // index into the goal; empty for ignored actions
  Status before = Status::not_mentioned;
  Status after = Status::not_mentioned;
  std::string old_value;
  std::string new_value;  // replacement value, or the answer for Rule::answer
  SemanticAction source;
};

inline std::string_view to_string(GoalChange::Rule r) {
  switch (r) {
    case GoalChange::Rule::match: return "match";
    case GoalChange::Rule::conflict: return "conflict";
    case GoalChange::Rule::answer: return "answer";
    case GoalChange::Rule::booked: return "booked";
    case GoalChange::Rule::replaced: return "replaced";
    case GoalChange::Rule::unreplaceable: return "unreplaceable";
    case GoalChange::Rule::ignored: return "ignored";
  }
  return "ignored";
}

using ChangeLog = std::vector<GoalChange>;

inline bool is_concrete_value(std::string_view v) { return !v.empty() && v != kAsk && v != kNone; }

/// Applies the system turn to the goal.
///  - inform with the goal value fulfills an info entry; a different value puts it in conflict
///    (book entries only ever move to conflict this way)
///  - inform on a reqt slot answers it (fulfilled, answer logged), requested or not
///  - a booked-role action on a domain fulfills its requested book entries
///  - a failure-role action on a domain replaces every info/book value in it by a random
///    alternative and resets those entries to not_mentioned
/// Actions naming unknown intents, domains or slots are logged as ignored.
inline std::pair<UserGoal, ChangeLog> update_on_system(const UserGoal& g, const ActionList& sys,
                                                       const Ontology& o, Rng& rng) {
  UserGoal out = g;
  auto& es = detail::GoalAccess::entries(out);
  ChangeLog log;
  auto record = [&](GoalChange::Rule rule, std::size_t i, Status before, std::string old_value,
                    std::string new_value, const SemanticAction& a) {
    log.push_back({rule, i, before, es[i].status, std::move(old_value), std::move(new_value), a});
  };
  auto set_status = [&](std::size_t i, Status s, GoalChange::Rule rule, const SemanticAction& a,
                        std::string answer = {}) {
    Status before = es[i].status;
    es[i].status = s;
    record(rule, i, before, es[i].value, std::move(answer), a);
  };

  for (const auto& a : sys) {
    auto role = o.system_role(a.intent);
    const bool slot_ok = a.slot == kNone || o.find_slot(a.domain, a.slot);
    if (!role || (a.domain != kGeneralDomain && !o.find_domain(a.domain)) || !slot_ok) {
      log.push_back({GoalChange::Rule::ignored, std::nullopt, {}, {}, {}, {}, a});
      continue;
    }
    const bool informs = (*role == IntentRole::inform || *role == IntentRole::booked) &&
                         a.slot != kNone && is_concrete_value(a.value);
    if (informs) {
      for (std::size_t i = 0; i < es.size(); ++i) {
        auto& e = es[i];
        if (e.domain != a.domain || e.slot != a.slot) continue;
        if (e.kind == Kind::reqt) {
          if (e.status != Status::fulfilled) set_status(i, Status::fulfilled, GoalChange::Rule::answer, a, a.value);
        } else if (e.value == a.value) {
          if (e.kind == Kind::info && e.status != Status::fulfilled)
            set_status(i, Status::fulfilled, GoalChange::Rule::match, a);
        } else if (e.status != Status::conflict) {
          set_status(i, Status::conflict, GoalChange::Rule::conflict, a);
        }
      }
    }
    if (*role == IntentRole::booked) {
      for (std::size_t i = 0; i < es.size(); ++i)
        if (es[i].domain == a.domain && es[i].kind == Kind::book && es[i].status == Status::requested)
          set_status(i, Status::fulfilled, GoalChange::Rule::booked, a);
    }
    if (*role == IntentRole::failure) {
      for (std::size_t i = 0; i < es.size(); ++i) {
        auto& e = es[i];
        if (e.domain != a.domain || !e.is_constraint()) continue;
        Status before = e.status;
        std::string old_value = e.value;
        auto alt = o.random_alternative(e.domain, e.slot, e.value, rng);
        if (alt) e.value = *alt;
        e.status = Status::not_mentioned;
        record(alt ? GoalChange::Rule::replaced : GoalChange::Rule::unreplaceable, i, before,
               std::move(old_value), e.value, a);
      }
    }
  }
  return {std::move(out), std::move(log)};
}

/// Applies the user's own turn: informing an info value fulfills it, informing a book value
/// marks it requested (awaiting a booking), requesting a reqt slot marks it requested.
inline UserGoal update_on_user(const UserGoal& g, const ActionList& usr, const Ontology& o) {
  UserGoal out = g;
  auto& es = detail::GoalAccess::entries(out);
  for (const auto& a : usr) {
    auto role = o.user_role(a.intent);
    if (!role) continue;
    for (auto& e : es) {
      if (e.domain != a.domain || e.slot != a.slot) continue;
      if (*role == IntentRole::inform && e.value == a.value) {
        if (e.kind == Kind::info) e.status = Status::fulfilled;
        else if (e.kind == Kind::book && e.status != Status::fulfilled) e.status = Status::requested;
      } else if (*role == IntentRole::request && e.kind == Kind::reqt && e.status != Status::fulfilled) {
        e.status = Status::requested;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Goal JSON: {"entries": [{"domain", "kind", "slot", "value", "status"}]}

inline OrderedJson goal_to_json(const UserGoal& g) {
  OrderedJson arr = OrderedJson::array();
  for (const auto& e : g.entries()) {
    OrderedJson ej;
    ej["domain"] = e.domain;
    ej["kind"] = to_string(e.kind);
    ej["slot"] = e.slot;
    ej["value"] = e.value;
    ej["status"] = to_string(e.status);
    arr.push_back(std::move(ej));
  }
  OrderedJson j;
  j["entries"] = std::move(arr);
  return j;
}

inline std::string serialize_goal(const UserGoal& g) { return goal_to_json(g).dump(); }

template <class JsonT>
UserGoal goal_from_json(const JsonT& j) {
  if (!j.is_object() || !j.contains("entries") || !j.at("entries").is_array())
    throw ValidationError("goal: expected {\"entries\": [...]}");
  std::vector<GoalEntry> entries;
  for (const auto& ej : j.at("entries")) {
    auto str = [&](const char* key) {
      if (!ej.is_object() || !ej.contains(key) || !ej.at(key).is_string())
        throw ValidationError(std::string("goal: entry field '") + key + "' must be a string");
      return ej.at(key).template get<std::string>();
    };
    GoalEntry e;
    e.domain = str("domain");
    auto kind = kind_from_string(str("kind"));
    if (!kind) throw ValidationError("goal: unknown kind '" + str("kind") + "'");
    e.kind = *kind;
    e.slot = str("slot");
    e.value = str("value");
    if (ej.contains("status")) {
      auto st = status_from_string(str("status"));
      if (!st) throw ValidationError("goal: unknown status '" + str("status") + "'");
      e.status = *st;
    }
    entries.push_back(std::move(e));
  }
  return UserGoal::from_entries(std::move(entries));
}

inline UserGoal deserialize_goal(std::string_view text) {
  return goal_from_json(detail::parse_json(text, "goal"));
}

}  // namespace usersim
