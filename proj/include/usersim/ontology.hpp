#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "usersim/common.hpp"

namespace usersim {

/// Reserved tokens that never appear in an ontology value vocabulary.
inline constexpr std::string_view kGeneralDomain = "general";
inline constexpr std::string_view kNone = "none";
inline constexpr std::string_view kAsk = "?";
inline constexpr std::string_view kDontCare = "dontcare";

/// Functional tag of an intent. Decoding and goal-update semantics key off the role,
/// never off the intent name, so arbitrary intent inventories load without code changes.
enum class IntentRole { general, bye, inform, request, select, failure, booked, other };

/// Goal entry kinds, also used as the per-slot capability set.
enum class Kind { info, reqt, book };

inline std::string_view to_string(IntentRole r) {
  switch (r) {
    case IntentRole::general: return "general";
    case IntentRole::bye: return "bye";
    case IntentRole::inform: return "inform";
    case IntentRole::request: return "request";
    case IntentRole::select: return "select";
    case IntentRole::failure: return "failure";
    case IntentRole::booked: return "booked";
    case IntentRole::other: return "other";
  }
  return "other";
}

inline std::optional<IntentRole> intent_role_from_string(std::string_view s) {
  for (auto r : {IntentRole::general, IntentRole::bye, IntentRole::inform, IntentRole::request,
                 IntentRole::select, IntentRole::failure, IntentRole::booked, IntentRole::other}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

inline std::string_view to_string(Kind k) {
  switch (k) {
    case Kind::info: return "info";
    case Kind::reqt: return "reqt";
    case Kind::book: return "book";
  }
  return "info";
}

inline std::optional<Kind> kind_from_string(std::string_view s) {
  if (s == "info") return Kind::info;
  if (s == "reqt") return Kind::reqt;
  if (s == "book") return Kind::book;
  return std::nullopt;
}

inline bool is_reserved_value(std::string_view v) {
  return v == kAsk || v == kDontCare || v == kNone;
}

struct Intent {
  std::string name;
  IntentRole role = IntentRole::other;

  friend bool operator==(const Intent&, const Intent&) = default;
};

struct SlotSchema {
  std::string name;
  std::vector<std::string> values;      // closed vocabulary; empty iff open_valued
  bool open_valued = false;
  std::set<Kind> kinds;
  std::vector<std::string> candidates;  // sampling pool for open-valued slots

  bool allows(Kind k) const { return kinds.count(k) != 0; }
  /// Values usable when a concrete value has to be drawn.
  const std::vector<std::string>& pool() const { return open_valued ? candidates : values; }

  friend bool operator==(const SlotSchema&, const SlotSchema&) = default;
};

struct DomainSchema {
  std::string name;
  std::vector<SlotSchema> slots;

  const SlotSchema* find_slot(std::string_view s) const {
    for (const auto& slot : slots)
      if (slot.name == s) return &slot;
    return nullptr;
  }

  friend bool operator==(const DomainSchema&, const DomainSchema&) = default;
};

struct LegalValues {
  std::vector<std::string> values;
  bool open_valued = false;
};

/// Immutable after load; safe to share across threads.
class Ontology {
 public:
  Ontology() = default;
  Ontology(std::string name, std::vector<Intent> user_general, std::vector<Intent> user_domain,
           std::vector<Intent> system, std::vector<DomainSchema> domains)
      : name_(std::move(name)),
        user_general_(std::move(user_general)),
        user_domain_(std::move(user_domain)),
        system_(std::move(system)),
        domains_(std::move(domains)) {
    validate();
  }

  const std::string& name() const { return name_; }
  const std::vector<Intent>& user_general_intents() const { return user_general_; }
  const std::vector<Intent>& user_domain_intents() const { return user_domain_; }
  const std::vector<Intent>& system_intents() const { return system_; }
  const std::vector<DomainSchema>& domains() const { return domains_; }

  /// General intents first, then domain-specific ones, in document order.
  std::vector<Intent> user_intents() const {
    auto all = user_general_;
    all.insert(all.end(), user_domain_.begin(), user_domain_.end());
    return all;
  }

  std::optional<IntentRole> user_role(std::string_view intent) const {
    for (const auto* list : {&user_general_, &user_domain_})
      for (const auto& i : *list)
        if (i.name == intent) return i.role;
    return std::nullopt;
  }

  std::optional<IntentRole> system_role(std::string_view intent) const {
    for (const auto& i : system_)
      if (i.name == intent) return i.role;
    return std::nullopt;
  }

  /// First user (or system) intent carrying a role, if any.
  const Intent* first_user_intent(IntentRole role) const {
    for (const auto* list : {&user_general_, &user_domain_})
      for (const auto& i : *list)
        if (i.role == role) return &i;
    return nullptr;
  }
  const Intent* first_system_intent(IntentRole role) const {
    for (const auto& i : system_)
      if (i.role == role) return &i;
    return nullptr;
  }

  const DomainSchema* find_domain(std::string_view d) const {
    for (const auto& dom : domains_)
      if (dom.name == d) return &dom;
    return nullptr;
  }

  const SlotSchema* find_slot(std::string_view d, std::string_view s) const {
    const auto* dom = find_domain(d);
    return dom ? dom->find_slot(s) : nullptr;
  }

  const SlotSchema& slot(std::string_view d, std::string_view s) const {
    const auto* dom = find_domain(d);
    if (!dom) throw Error("unknown domain '" + std::string(d) + "'");
    const auto* sl = dom->find_slot(s);
    if (!sl) throw Error("unknown slot '" + std::string(s) + "' in domain '" + std::string(d) + "'");
    return *sl;
  }

  LegalValues legal_values(std::string_view d, std::string_view s) const {
    const auto& sl = slot(d, s);
    return {sl.values, sl.open_valued};
  }

  /// A value is legal for (domain, slot) if it is in the closed vocabulary, or the slot is open.
  bool is_legal_value(std::string_view d, std::string_view s, std::string_view v) const {
    const auto* sl = find_slot(d, s);
    if (!sl) return false;
    if (sl->open_valued) return !v.empty() && !is_reserved_value(v);
    return std::find(sl->values.begin(), sl->values.end(), v) != sl->values.end();
  }

  /// Uniform draw from the slot's pool minus `exclude`; nullopt means unreplaceable.
  std::optional<std::string> random_alternative(std::string_view d, std::string_view s,
                                                std::string_view exclude, Rng& rng) const {
    const auto& pool = slot(d, s).pool();
    std::vector<const std::string*> remaining;
    for (const auto& v : pool)
      if (v != exclude) remaining.push_back(&v);
    if (remaining.empty()) return std::nullopt;
    return *remaining[detail::uniform_index(rng, remaining.size())];
  }

  std::size_t slot_count() const {
    std::size_t n = 0;
    for (const auto& d : domains_) n += d.slots.size();
    return n;
  }

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& d : domains_)
      for (const auto& s : d.slots) n += s.values.size() + s.candidates.size();
    return n;
  }

  friend bool operator==(const Ontology&, const Ontology&) = default;

 private:
  void validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("ontology: " + msg); };
    if (name_.empty()) fail("name must be non-empty");
    if (user_general_.empty()) fail("user_general_intents must be non-empty");
    if (user_domain_.empty()) fail("user_domain_intents must be non-empty");
    if (system_.empty()) fail("system_intents must be non-empty");

    std::set<std::string> user_names;
    for (const auto& i : user_general_) {
      if (i.role != IntentRole::general && i.role != IntentRole::bye)
        fail("general user intent '" + i.name + "' must have role general or bye");
      if (!user_names.insert(i.name).second) fail("duplicate user intent '" + i.name + "'");
    }
    for (const auto& i : user_domain_) {
      if (i.role != IntentRole::inform && i.role != IntentRole::request &&
          i.role != IntentRole::other)
        fail("domain user intent '" + i.name + "' must have role inform, request or other");
      if (!user_names.insert(i.name).second)
        fail("user intent '" + i.name + "' is both general and domain-specific");
    }
    std::set<std::string> sys_names;
    for (const auto& i : system_)
      if (!sys_names.insert(i.name).second) fail("duplicate system intent '" + i.name + "'");
    for (const auto& n : user_names)
      if (n.empty()) fail("intent names must be non-empty");
    if (!first_user_intent(IntentRole::bye)) fail("no user intent with role bye");
    if (!first_user_intent(IntentRole::inform)) fail("no user intent with role inform");
    if (!first_user_intent(IntentRole::request)) fail("no user intent with role request");

    if (domains_.empty()) fail("domains must be non-empty");
    std::set<std::string> domain_names;
    for (const auto& d : domains_) {
      if (d.name.empty() || d.name == kGeneralDomain) fail("invalid domain name '" + d.name + "'");
      if (!domain_names.insert(d.name).second) fail("duplicate domain '" + d.name + "'");
      if (d.slots.empty()) fail("domain '" + d.name + "' has no slots");
      std::set<std::string> slot_names;
      for (const auto& s : d.slots) {
        const std::string where = d.name + "." + s.name;
        if (s.name.empty() || s.name == kNone) fail("invalid slot name in '" + d.name + "'");
        if (!slot_names.insert(s.name).second) fail("duplicate slot '" + where + "'");
        if (s.kinds.empty()) fail("slot '" + where + "' allows no kinds");
        if (s.open_valued && !s.values.empty())
          fail("open-valued slot '" + where + "' must not list closed values");
        if (!s.open_valued && s.values.empty())
          fail("closed slot '" + where + "' has an empty vocabulary");
        if (s.open_valued && s.candidates.empty() && (s.allows(Kind::info) || s.allows(Kind::book)))
          fail("open-valued constraint slot '" + where + "' needs sampling candidates");
        if (!s.open_valued && !s.candidates.empty())
          fail("closed slot '" + where + "' must not list candidates");
        std::set<std::string> seen;
        for (const auto* list : {&s.values, &s.candidates})
          for (const auto& v : *list) {
            if (v.empty() || is_reserved_value(v))
              fail("slot '" + where + "' uses reserved or empty value '" + v + "'");
            if (!seen.insert(v).second) fail("slot '" + where + "' repeats value '" + v + "'");
          }
      }
    }
  }

  std::string name_;
  std::vector<Intent> user_general_;
  std::vector<Intent> user_domain_;
  std::vector<Intent> system_;
  std::vector<DomainSchema> domains_;
};

namespace detail {

inline std::vector<Intent> intents_from_json(const OrderedJson& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array())
    throw ValidationError(std::string("ontology: '") + key + "' must be an array");
  std::vector<Intent> out;
  for (const auto& item : j.at(key)) {
    if (!item.is_object() || !item.contains("name") || !item.at("name").is_string() ||
        !item.contains("role") || !item.at("role").is_string())
      throw ValidationError(std::string("ontology: entries of '") + key +
                            "' must be objects with string 'name' and 'role'");
    auto role = intent_role_from_string(item.at("role").get<std::string>());
    if (!role)
      throw ValidationError("ontology: unknown role '" + item.at("role").get<std::string>() + "'");
    out.push_back({item.at("name").get<std::string>(), *role});
  }
  return out;
}

inline std::vector<std::string> strings_from_json(const OrderedJson& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError("ontology: " + where + " must be an array");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ValidationError("ontology: " + where + " must contain strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

/// Parses and validates an ontology document. Throws ParseError (with position) on
/// malformed JSON and ValidationError naming the violated invariant otherwise.
inline Ontology load_ontology(std::string_view text) {
  OrderedJson j;
  try {
    j = OrderedJson::parse(text);
  } catch (const OrderedJson::parse_error& e) {
    auto [line, column] = detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError(std::string("ontology: ") + e.what(), line, column);
  }
  if (!j.is_object()) throw ValidationError("ontology: document must be an object");
  if (!j.contains("name") || !j.at("name").is_string())
    throw ValidationError("ontology: 'name' must be a string");
  if (!j.contains("domains") || !j.at("domains").is_object())
    throw ValidationError("ontology: 'domains' must be an object");

  std::vector<DomainSchema> domains;
  for (const auto& [dname, dval] : j.at("domains").items()) {
    if (!dval.is_object() || !dval.contains("slots") || !dval.at("slots").is_object())
      throw ValidationError("ontology: domain '" + dname + "' needs a 'slots' object");
    DomainSchema dom{dname, {}};
    for (const auto& [sname, sval] : dval.at("slots").items()) {
      const std::string where = dname + "." + sname;
      if (!sval.is_object()) throw ValidationError("ontology: slot '" + where + "' must be an object");
      SlotSchema slot;
      slot.name = sname;
      if (sval.contains("values")) slot.values = detail::strings_from_json(sval.at("values"), where + ".values");
      if (sval.contains("candidates"))
        slot.candidates = detail::strings_from_json(sval.at("candidates"), where + ".candidates");
      if (sval.contains("open_valued")) {
        if (!sval.at("open_valued").is_boolean())
          throw ValidationError("ontology: " + where + ".open_valued must be a boolean");
        slot.open_valued = sval.at("open_valued").get<bool>();
      }
      if (!sval.contains("kinds"))
        throw ValidationError("ontology: slot '" + where + "' needs 'kinds'");
      for (const auto& k : detail::strings_from_json(sval.at("kinds"), where + ".kinds")) {
        auto kind = kind_from_string(k);
        if (!kind) throw ValidationError("ontology: unknown kind '" + k + "' in '" + where + "'");
        slot.kinds.insert(*kind);
      }
      dom.slots.push_back(std::move(slot));
    }
    domains.push_back(std::move(dom));
  }
  return Ontology(j.at("name").get<std::string>(), detail::intents_from_json(j, "user_general_intents"),
                  detail::intents_from_json(j, "user_domain_intents"),
                  detail::intents_from_json(j, "system_intents"), std::move(domains));
}

inline Ontology load_ontology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ontology file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_ontology(ss.str());
}

/// Canonical form: fixed key order, two-space indentation. load(serialize(o)) == o.
inline std::string serialize_ontology(const Ontology& o) {
  auto intents = [](const std::vector<Intent>& list) {
    OrderedJson arr = OrderedJson::array();
    for (const auto& i : list) arr.push_back({{"name", i.name}, {"role", to_string(i.role)}});
    return arr;
  };
  OrderedJson j;
  j["name"] = o.name();
  j["user_general_intents"] = intents(o.user_general_intents());
  j["user_domain_intents"] = intents(o.user_domain_intents());
  j["system_intents"] = intents(o.system_intents());
  OrderedJson doms = OrderedJson::object();
  for (const auto& d : o.domains()) {
    OrderedJson slots = OrderedJson::object();
    for (const auto& s : d.slots) {
      OrderedJson sj;
      sj["values"] = s.values;
      sj["open_valued"] = s.open_valued;
      OrderedJson kinds = OrderedJson::array();
      for (auto k : s.kinds) kinds.push_back(to_string(k));
      sj["kinds"] = kinds;
      sj["candidates"] = s.candidates;
      slots[s.name] = sj;
    }
    doms[d.name] = {{"slots", slots}};
  }
  j["domains"] = doms;
  return j.dump(2) + "\n";
}

}  // namespace usersim
