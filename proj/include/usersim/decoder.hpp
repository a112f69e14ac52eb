#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "usersim/action.hpp"
#include "usersim/goals.hpp"
#include "usersim/ontology.hpp"

namespace usersim {

class DecodeError : public Error {
 public:
  using Error::Error;
};

/// Why a node exists: derived from the goal, inserted by this turn's system action, or a
/// vocabulary value pulled from the ontology for a system-inserted slot.
enum class Provenance { goal, system_inserted, ontology };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::goal: return "goal";
    case Provenance::system_inserted: return "system_inserted";
    case Provenance::ontology: return "ontology";
  }
  return "goal";
}

struct GraphOptions {
  std::size_t max_actions = 5;
};

struct ValueNode {
  std::string value;
  Provenance provenance;
};

struct SlotNode {
  std::string slot;
  Provenance provenance;
  std::vector<ValueNode> values;
};

struct DomainNode {
  std::string domain;
  Provenance provenance;
  std::vector<SlotNode> slots;
};

struct IntentNode {
  std::string intent;
  IntentRole role;
  std::vector<DomainNode> domains;
};

struct GraphPath {
  SemanticAction action;
  Provenance provenance;  // of the value node
};

/// Per-turn legality structure: intent -> domain -> slot -> value. Every root-to-leaf path is
/// one legal user action; a legal action list is a sequence of distinct paths no longer than
/// max_actions. Immutable once built.
class ConstraintGraph {
 public:
  const std::vector<IntentNode>& intents() const { return intents_; }
  std::size_t max_actions() const { return max_actions_; }

  const std::vector<GraphPath>& paths() const { return paths_; }

  bool contains(const SemanticAction& a) const { return index_.count(a) != 0; }

  std::optional<Provenance> provenance(const SemanticAction& a) const {
    auto it = index_.find(a);
    if (it == index_.end()) return std::nullopt;
    return paths_[it->second].provenance;
  }

  const IntentNode* find_intent(std::string_view name) const {
    for (const auto& n : intents_)
      if (n.intent == name) return &n;
    return nullptr;
  }

  /// Deterministic text rendering, one provenance-tagged path per line.
  std::string dump() const {
    std::string out = "# constraint graph, max_actions=" + std::to_string(max_actions_) + "\n";
    for (const auto& n : intents_)
      if (n.domains.empty()) out += "(" + n.intent + ") [no paths]\n";
    for (const auto& p : paths_) out += p.action.str() + " [" + std::string(to_string(p.provenance)) + "]\n";
    return out;
  }

  /// Field-level legality snapshot for external generators.
  Json options_json() const {
    Json tree = Json::object();
    for (const auto& n : intents_) {
      Json doms = Json::object();
      for (const auto& d : n.domains) {
        Json slots = Json::object();
        for (const auto& s : d.slots) {
          Json values = Json::array();
          for (const auto& v : s.values) values.push_back(v.value);
          slots[s.slot] = std::move(values);
        }
        doms[d.domain] = std::move(slots);
      }
      tree[n.intent] = std::move(doms);
    }
    return Json{{"max_actions", max_actions_}, {"paths", std::move(tree)}};
  }

 private:
  friend ConstraintGraph build_graph(const Ontology&, const UserGoal&, const ActionList&, const GraphOptions&);

  void add(IntentNode& node, const std::string& domain, Provenance dp, const std::string& slot, Provenance sp,
           const std::string& value, Provenance vp) {
    auto d = std::find_if(node.domains.begin(), node.domains.end(), [&](const DomainNode& x) { return x.domain == domain; });
    if (d == node.domains.end()) d = node.domains.insert(node.domains.end(), DomainNode{domain, dp, {}});
    auto s = std::find_if(d->slots.begin(), d->slots.end(), [&](const SlotNode& x) { return x.slot == slot; });
    if (s == d->slots.end()) s = d->slots.insert(d->slots.end(), SlotNode{slot, sp, {}});
    auto v = std::find_if(s->values.begin(), s->values.end(), [&](const ValueNode& x) { return x.value == value; });
    if (v == s->values.end()) s->values.push_back({value, vp});
  }

  void finalize() {
    paths_.clear();
    index_.clear();
    for (const auto& n : intents_)
      for (const auto& d : n.domains)
        for (const auto& s : d.slots)
          for (const auto& v : s.values) {
            SemanticAction a{n.intent, d.domain, s.slot, v.value};
            index_.emplace(a, paths_.size());
            paths_.push_back({std::move(a), v.provenance});
          }
  }

  std::vector<IntentNode> intents_;
  std::size_t max_actions_ = 5;
  std::vector<GraphPath> paths_;
  std::map<SemanticAction, std::size_t> index_;
};

/// Builds the legality graph for one user turn.
///  - every user intent of the ontology is a root
///  - general/bye intents: the single path (intent, general, none, none)
///  - inform-role intents: goal value of every unfulfilled info/book entry; for each slot the
///    system just requested, the goal value if the goal constrains it, otherwise the slot's
///    vocabulary plus "dontcare"; values offered by select-role system actions
///  - request-role intents: (d, s, "?") for every unfulfilled reqt entry
///  - other-role intents: (d, none, none) for every goal domain
/// Fulfilled entries contribute nothing unless the system re-requests their slot.
inline ConstraintGraph build_graph(const Ontology& o, const UserGoal& g, const ActionList& sys,
                                   const GraphOptions& opts = {}) {
  ConstraintGraph cg;
  cg.max_actions_ = opts.max_actions;
  const std::string general(kGeneralDomain), none(kNone);
  for (const auto& intent : o.user_intents()) {
    IntentNode node{intent.name, intent.role, {}};
    switch (intent.role) {
      case IntentRole::general:
      case IntentRole::bye:
        cg.add(node, general, Provenance::ontology, none, Provenance::ontology, none, Provenance::ontology);
        break;
      case IntentRole::inform:
        for (const auto& e : g.entries())
          if (e.is_constraint() && e.status != Status::fulfilled)
            cg.add(node, e.domain, Provenance::goal, e.slot, Provenance::goal, e.value, Provenance::goal);
        for (const auto& a : sys) {
          auto role = o.system_role(a.intent);
          const auto* slot = o.find_slot(a.domain, a.slot);
          if (!role || !slot) continue;
          if (*role == IntentRole::request) {
            if (auto i = g.find_constraint(a.domain, a.slot)) {
              cg.add(node, a.domain, Provenance::system_inserted, a.slot, Provenance::system_inserted, g[*i].value,
                     Provenance::goal);
            } else {
              for (const auto& v : slot->pool())
                cg.add(node, a.domain, Provenance::system_inserted, a.slot, Provenance::system_inserted, v,
                       Provenance::ontology);
              cg.add(node, a.domain, Provenance::system_inserted, a.slot, Provenance::system_inserted,
                     std::string(kDontCare), Provenance::system_inserted);
            }
          } else if (*role == IntentRole::select && is_concrete_value(a.value) && a.value != kDontCare) {
            cg.add(node, a.domain, Provenance::system_inserted, a.slot, Provenance::system_inserted, a.value,
                   Provenance::system_inserted);
          }
        }
        break;
      case IntentRole::request:
        for (const auto& e : g.entries())
          if (e.kind == Kind::reqt && e.status != Status::fulfilled)
            cg.add(node, e.domain, Provenance::goal, e.slot, Provenance::goal, std::string(kAsk), Provenance::goal);
        break;
      case IntentRole::other:
        for (const auto& d : g.domains())
          cg.add(node, d, Provenance::goal, none, Provenance::goal, none, Provenance::goal);
        break;
      default:
        break;
    }
    cg.intents_.push_back(std::move(node));
  }
  cg.finalize();
  return cg;
}

// ---------------------------------------------------------------------------
// Decoding-time queries

enum class Position { intent, domain, slot, value, boundary };

inline constexpr std::string_view kContinue = "<CONTINUE>";
inline constexpr std::string_view kStop = "<STOP>";

namespace detail {

inline void check_complete_prefix(const ConstraintGraph& cg, const ActionList& complete) {
  if (complete.size() > cg.max_actions()) throw DecodeError("partial list exceeds max_actions");
  std::set<SemanticAction> seen;
  for (const auto& a : complete) {
    if (!cg.contains(a)) throw DecodeError("partial list contains illegal action " + a.str());
    if (!seen.insert(a).second) throw DecodeError("partial list repeats action " + a.str());
  }
}

/// Paths not yet used in `complete` whose first fields equal `fields`.
inline std::vector<const GraphPath*> remaining_paths(const ConstraintGraph& cg, const ActionList& complete,
                                                     const std::vector<std::string>& fields) {
  std::vector<const GraphPath*> out;
  for (const auto& p : cg.paths()) {
    const std::string* f[4] = {&p.action.intent, &p.action.domain, &p.action.slot, &p.action.value};
    bool match = true;
    for (std::size_t i = 0; i < fields.size() && match; ++i) match = *f[i] == fields[i];
    if (match && std::find(complete.begin(), complete.end(), p.action) == complete.end()) out.push_back(&p);
  }
  return out;
}

}  // namespace detail

/// Options extending a legal prefix. `complete` holds finished actions, `current` the fields
/// already chosen for the action under construction (as many as `position` implies).
/// Boundary options are kContinue / kStop. Throws DecodeError for an illegal prefix.
inline std::vector<std::string> legal_continuations(const ConstraintGraph& cg, const ActionList& complete,
                                                    const std::vector<std::string>& current, Position position) {
  detail::check_complete_prefix(cg, complete);
  const std::size_t depth = position == Position::boundary ? 0 : static_cast<std::size_t>(position);
  if (current.size() != depth) throw DecodeError("current fields do not match the decoding position");
  if (position == Position::boundary) {
    std::vector<std::string> out;
    if (complete.size() < cg.max_actions() && !detail::remaining_paths(cg, complete, {}).empty())
      out.emplace_back(kContinue);
    out.emplace_back(kStop);
    return out;
  }
  if (complete.size() >= cg.max_actions()) throw DecodeError("no room for another action");
  auto rem = detail::remaining_paths(cg, complete, current);
  if (rem.empty()) throw DecodeError("current fields are not a legal prefix");
  std::vector<std::string> out;
  for (const auto* p : rem) {
    const std::string* f[4] = {&p->action.intent, &p->action.domain, &p->action.slot, &p->action.value};
    const auto& field = *f[depth];
    if (std::find(out.begin(), out.end(), field) == out.end()) out.push_back(field);
  }
  return out;
}

enum class ViolationKind { unknown_intent, illegal_domain, illegal_slot, illegal_value, duplicate, over_length };

inline std::string_view to_string(ViolationKind v) {
  switch (v) {
    case ViolationKind::unknown_intent: return "unknown_intent";
    case ViolationKind::illegal_domain: return "illegal_domain";
    case ViolationKind::illegal_slot: return "illegal_slot";
    case ViolationKind::illegal_value: return "illegal_value";
    case ViolationKind::duplicate: return "duplicate";
    case ViolationKind::over_length: return "over_length";
  }
  return "unknown_intent";
}

struct Violation {
  ViolationKind kind;
  std::size_t index;
  SemanticAction action;
};

/// Empty result means the list is legal under the graph.
inline std::vector<Violation> validate_action_list(const ConstraintGraph& cg, const ActionList& al) {
  std::vector<Violation> out;
  std::set<SemanticAction> seen;
  for (std::size_t i = 0; i < al.size(); ++i) {
    const auto& a = al[i];
    const auto* in = cg.find_intent(a.intent);
    if (!in) {
      out.push_back({ViolationKind::unknown_intent, i, a});
      continue;
    }
    auto d = std::find_if(in->domains.begin(), in->domains.end(), [&](const DomainNode& x) { return x.domain == a.domain; });
    if (d == in->domains.end()) {
      out.push_back({ViolationKind::illegal_domain, i, a});
      continue;
    }
    auto s = std::find_if(d->slots.begin(), d->slots.end(), [&](const SlotNode& x) { return x.slot == a.slot; });
    if (s == d->slots.end()) {
      out.push_back({ViolationKind::illegal_slot, i, a});
      continue;
    }
    if (std::none_of(s->values.begin(), s->values.end(), [&](const ValueNode& x) { return x.value == a.value; })) {
      out.push_back({ViolationKind::illegal_value, i, a});
      continue;
    }
    if (!seen.insert(a).second) out.push_back({ViolationKind::duplicate, i, a});
  }
  if (al.size() > cg.max_actions()) out.push_back({ViolationKind::over_length, cg.max_actions(), al[cg.max_actions()]});
  return out;
}

inline bool is_legal(const ConstraintGraph& cg, const ActionList& al) { return validate_action_list(cg, al).empty(); }

/// Every ordered list of distinct paths of length <= max_actions (the graph's own cap when
/// omitted). Refuses to materialize more than `limit` lists.
inline std::set<ActionList> enumerate_legal(const ConstraintGraph& cg, std::optional<std::size_t> max_actions = std::nullopt,
                                            std::size_t limit = 1'000'000) {
  const std::size_t cap = std::min(max_actions.value_or(cg.max_actions()), cg.paths().size());
  const std::size_t n = cg.paths().size();
  std::size_t total = 1, term = 1;
  for (std::size_t k = 1; k <= cap; ++k) {
    term *= n - k + 1;
    total += term;
    if (total > limit || term > limit) throw Error("enumerate_legal: more than " + std::to_string(limit) + " lists");
  }
  std::set<ActionList> out;
  ActionList cur;
  std::vector<bool> used(n, false);
  auto rec = [&](auto&& self) -> void {
    out.insert(cur);
    if (cur.size() == cap) return;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      used[i] = true;
      cur.push_back(cg.paths()[i].action);
      self(self);
      cur.pop_back();
      used[i] = false;
    }
  };
  rec(rec);
  return out;
}

/// Admissible next pieces for a generator that has emitted `partial` of the canonical output
/// serialization. Fields are returned as JSON string literals; structural choices as the
/// literal text to emit: "[" / ", [" (continue), "]" (stop), ", \"text\": " (list closed).
/// Separators at the very end of the prefix are optional. A trailing unterminated string
/// narrows the field options to those it is a prefix of.
inline std::vector<std::string> prefix_mask(const ConstraintGraph& cg, std::string_view partial) {
  static constexpr std::string_view head = "{\"action\": [";
  std::size_t pos = 0;
  // Leading structure, compared modulo whitespace.
  auto skip_ws = [&] {
    while (pos < partial.size() && (partial[pos] == ' ' || partial[pos] == '\n' || partial[pos] == '\t' || partial[pos] == '\r'))
      ++pos;
  };
  std::size_t h = 0;
  for (;;) {
    while (h < head.size() && head[h] == ' ') ++h;
    skip_ws();
    if (h == head.size()) break;
    if (pos == partial.size()) return {std::string(head.substr(h))};
    if (partial[pos] != head[h]) throw DecodeError("prefix_mask: unparseable prefix");
    ++pos;
    ++h;
  }

  ActionList complete;
  std::vector<std::string> fields;
  enum class State { boundary, after_comma, in_action, closed } state = State::boundary;
  bool need_comma = false;  // inside an action, after a field

  auto field_options = [&](const std::vector<std::string>& f) {
    std::vector<std::string> out;
    for (const auto& o : legal_continuations(cg, complete, f, static_cast<Position>(f.size())))
      out.push_back(detail::quote(o));
    return out;
  };
  auto boundary_options = [&](bool at_start) {
    std::vector<std::string> out;
    for (const auto& o : legal_continuations(cg, complete, {}, Position::boundary))
      out.push_back(o == kContinue ? (at_start ? "[" : ", [") : "]");
    return out;
  };

  while (true) {
    skip_ws();
    if (pos == partial.size()) break;
    const char c = partial[pos];
    if (state == State::closed) return {};
    if (c == '"') {
      if (state != State::in_action || need_comma || fields.size() >= 4)
        throw DecodeError("prefix_mask: unexpected string");
      const std::size_t start = pos++;
      while (pos < partial.size() && partial[pos] != '"') {
        if (partial[pos] == '\\') ++pos;
        ++pos;
      }
      if (pos >= partial.size()) {
        // Unterminated: filter by rendered prefix.
        const auto frag = partial.substr(start);
        std::vector<std::string> out;
        for (auto& o : field_options(fields))
          if (o.compare(0, frag.size(), frag) == 0) out.push_back(std::move(o));
        if (out.empty()) throw DecodeError("prefix_mask: no legal field starts with the partial string");
        return out;
      }
      ++pos;
      std::string value;
      try {
        value = Json::parse(partial.substr(start, pos - start)).get<std::string>();
      } catch (const Json::exception&) {
        throw DecodeError("prefix_mask: invalid string literal");
      }
      auto opts = legal_continuations(cg, complete, fields, static_cast<Position>(fields.size()));
      if (std::find(opts.begin(), opts.end(), value) == opts.end())
        throw DecodeError("prefix_mask: illegal field \"" + value + "\"");
      fields.push_back(std::move(value));
      need_comma = true;
      continue;
    }
    ++pos;
    switch (c) {
      case '[':
        if (state == State::boundary && !complete.empty()) throw DecodeError("prefix_mask: missing ','");
        if (state == State::in_action) throw DecodeError("prefix_mask: nested '['");
        if (legal_continuations(cg, complete, {}, Position::boundary).front() != kContinue)
          throw DecodeError("prefix_mask: no further action is legal");
        state = State::in_action;
        fields.clear();
        need_comma = false;
        break;
      case ',':
        if (state == State::in_action) {
          if (!need_comma || fields.size() >= 4) throw DecodeError("prefix_mask: unexpected ','");
          need_comma = false;
        } else if (state == State::boundary && !complete.empty()) {
          if (legal_continuations(cg, complete, {}, Position::boundary).front() != kContinue)
            throw DecodeError("prefix_mask: no further action is legal");
          state = State::after_comma;
        } else {
          throw DecodeError("prefix_mask: unexpected ','");
        }
        break;
      case ']':
        if (state == State::in_action) {
          if (fields.size() != 4) throw DecodeError("prefix_mask: action closed early");
          complete.push_back({fields[0], fields[1], fields[2], fields[3]});
          fields.clear();
          state = State::boundary;
        } else if (state == State::boundary) {
          state = State::closed;
        } else {
          throw DecodeError("prefix_mask: unexpected ']'");
        }
        break;
      default:
        throw DecodeError(std::string("prefix_mask: unexpected character '") + c + "'");
    }
  }

  switch (state) {
    case State::boundary: return boundary_options(complete.empty());
    case State::after_comma: return field_options({});
    case State::in_action:
      if (fields.size() == 4) return {"]"};
      return field_options(fields);
    case State::closed: return {", \"text\": "};
  }
  return {};
}

}  // namespace usersim
