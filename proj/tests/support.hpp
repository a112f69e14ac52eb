#pragma once

#include <regex>
#include <string>

#include "usersim/usersim.hpp"

namespace testing_support {

inline const usersim::Ontology& multiwoz() {
  static const auto o = usersim::load_ontology_file(std::string(USERSIM_DATA_DIR) + "/ontologies/multiwoz.json");
  return o;
}

inline const usersim::Ontology& sgd() {
  static const auto o = usersim::load_ontology_file(std::string(USERSIM_DATA_DIR) + "/ontologies/sgd.json");
  return o;
}

inline const usersim::TemplateTable& templates() {
  static const auto t = usersim::TemplateTable::load_file(std::string(USERSIM_DATA_DIR) + "/templates/templates.json");
  return t;
}

inline usersim::GoalEntry entry(std::string d, usersim::Kind k, std::string s, std::string v,
                                usersim::Status st = usersim::Status::not_mentioned) {
  return {std::move(d), k, std::move(s), std::move(v), st};
}

// Canonical grammar of the two serialized records, written independently of the serializer.

inline const std::string kStr = R"("(?:[^"\\]|\\.)*")";
inline const std::string kTuple4 = "\\[" + kStr + ", " + kStr + ", " + kStr + ", " + kStr + "\\]";
inline const std::string kList = "\\[(?:" + kTuple4 + "(?:, " + kTuple4 + ")*)?\\]";

inline bool canonical_output(const std::string& s) {
  static const std::regex re("\\{\"action\": " + kList + ", \"text\": " + kStr + "\\}");
  return std::regex_match(s, re);
}

inline bool canonical_input(const std::string& s) {
  const std::string tuple5 = "\\[" + kStr + ", \"(?:info|reqt|book)\", " + kStr + ", " + kStr +
                             ", \"(?:not_mentioned|fulfilled|conflict|requested)\"\\]";
  static const std::regex re("\\{\"system\": " + kList + ", \"user\": \\[(?:" + kList + "(?:, " + kList +
                             ")*)?\\], \"goal\": \\[(?:" + tuple5 + "(?:, " + tuple5 + ")*)?\\], \"turn\": (?:0|[1-9][0-9]*)\\}");
  return std::regex_match(s, re);
}

/// Goal used in the worked decoding example: hotel area/stars/addr, taxi leave time.
inline usersim::UserGoal hotel_taxi_goal() {
  using usersim::Kind;
  return usersim::UserGoal::from_entries({entry("hotel", Kind::info, "area", "north"),
                                          entry("hotel", Kind::info, "stars", "2"),
                                          entry("hotel", Kind::reqt, "addr", "?"),
                                          entry("taxi", Kind::info, "leave", "8:00")});
}

/// Two-domain toy ontology small enough to reason about by hand.
inline const char* kToyOntology = R"({
  "name": "toy",
  "user_general_intents": [{"name": "hello", "role": "general"}, {"name": "ciao", "role": "bye"}],
  "user_domain_intents": [{"name": "tell", "role": "inform"}, {"name": "ask", "role": "request"}],
  "system_intents": [{"name": "hi", "role": "general"}, {"name": "ciao", "role": "bye"},
                     {"name": "tell", "role": "inform"}, {"name": "ask", "role": "request"},
                     {"name": "pick", "role": "select"}, {"name": "done", "role": "booked"},
                     {"name": "sorry", "role": "failure"}],
  "domains": {
    "shop": {"slots": {
      "colour": {"values": ["red", "green", "blue"], "open_valued": false, "kinds": ["info", "reqt"]},
      "size": {"values": ["one"], "open_valued": false, "kinds": ["info"]},
      "hours": {"values": [], "open_valued": true, "kinds": ["reqt"]},
      "when": {"values": [], "open_valued": true, "kinds": ["book"], "candidates": ["9:00", "10:00"]}
    }},
    "park": {"slots": {
      "zone": {"values": ["upper", "lower"], "open_valued": false, "kinds": ["info"]},
      "entry": {"values": [], "open_valued": true, "kinds": ["reqt"]}
    }}
  }
})";

inline const usersim::Ontology& toy() {
  static const auto o = usersim::load_ontology(kToyOntology);
  return o;
}

// Random values for round-trip properties. Strings mix escapes, control bytes and multi-byte UTF-8.

inline std::string random_text(usersim::Rng& rng, std::size_t max_len = 12) {
  static const std::vector<std::string> pieces = {"a", "b", "z", " ", "\"", "\\", "/", "\n", "\t", "\x01", "7", ",",
                                                  "[", "]", "{", "}", ":", "\xc3\xa9", "\xe2\x98\x83", "\xf0\x9f\x98\x80"};
  std::string s;
  const auto n = usersim::detail::uniform_index(rng, max_len + 1);
  for (std::size_t i = 0; i < n; ++i) s += pieces[usersim::detail::uniform_index(rng, pieces.size())];
  return s;
}

inline usersim::ActionList random_actions(usersim::Rng& rng, std::size_t max_len = 4) {
  usersim::ActionList al;
  const auto n = usersim::detail::uniform_index(rng, max_len + 1);
  for (std::size_t i = 0; i < n; ++i)
    al.push_back({random_text(rng, 6), random_text(rng, 6), random_text(rng, 6), random_text(rng, 6)});
  return al;
}

inline usersim::InputContext random_context(usersim::Rng& rng) {
  using namespace usersim;
  InputContext ctx;
  ctx.system_action = random_actions(rng);
  const auto h = detail::uniform_index(rng, kHistoryTurns + 1);
  for (std::size_t i = 0; i < h; ++i) ctx.user_history.push_back(random_actions(rng));
  std::vector<GoalEntry> entries;
  const auto n = detail::uniform_index(rng, 6);
  for (std::size_t i = 0; i < n; ++i) {
    GoalEntry e;
    e.domain = "d" + std::to_string(i) + random_text(rng, 3);
    e.kind = static_cast<Kind>(detail::uniform_index(rng, 3));
    e.slot = "s" + random_text(rng, 4);
    e.value = e.kind == Kind::reqt ? "?" : "v" + random_text(rng, 5);
    e.status = static_cast<Status>(detail::uniform_index(rng, 4));
    entries.push_back(e);
  }
  ctx.goal = UserGoal::from_entries(std::move(entries));
  ctx.turn = static_cast<int>(detail::uniform_index(rng, 100));
  return ctx;
}

inline usersim::OutputRecord random_output(usersim::Rng& rng) {
  return {random_actions(rng), random_text(rng, 30)};
}

// Random (goal, system action) pairs for graph properties.

struct Triple {
  usersim::UserGoal goal;
  usersim::ActionList system;
};

inline Triple random_triple(const usersim::Ontology& o, usersim::Rng& rng, std::size_t max_entries = 12) {
  using namespace usersim;
  using detail::uniform_index;
  GoalSamplerConfig cfg{{1, 3}, {0, 3}, {0, 2}, {0, 2}};
  UserGoal g;
  do {
    g = sample_goal(o, cfg, rng);
  } while (g.size() > max_entries);
  std::vector<GoalEntry> entries = g.entries();
  for (auto& e : entries) e.status = static_cast<Status>(uniform_index(rng, 4));
  Triple t{UserGoal::from_entries(std::move(entries)), {}};

  const auto& sys = o.system_intents();
  const auto n = uniform_index(rng, 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& intent = sys[uniform_index(rng, sys.size())];
    if (intent.role == IntentRole::general || intent.role == IntentRole::bye) {
      t.system.push_back(general_action(intent.name));
      continue;
    }
    // Half the time talk about a goal domain, otherwise any domain.
    const DomainSchema* dom = nullptr;
    if (!t.goal.empty() && uniform_index(rng, 2) == 0) dom = o.find_domain(t.goal[uniform_index(rng, t.goal.size())].domain);
    else dom = &o.domains()[uniform_index(rng, o.domains().size())];
    const auto& slot = dom->slots[uniform_index(rng, dom->slots.size())];
    if (intent.role == IntentRole::failure || intent.role == IntentRole::other) {
      t.system.push_back({intent.name, dom->name, std::string(kNone), std::string(kNone)});
    } else if (intent.role == IntentRole::request) {
      t.system.push_back({intent.name, dom->name, slot.name, std::string(kAsk)});
    } else {
      const auto& pool = slot.pool();
      std::string v = pool.empty() ? "somewhere " + std::to_string(uniform_index(rng, 3)) : pool[uniform_index(rng, pool.size())];
      t.system.push_back({intent.name, dom->name, slot.name, v});
    }
  }
  return t;
}

/// Lists near the legal set: subsequences of paths, duplicates, over-long lists and single-field
/// mutations drawn from the ontology.
inline usersim::ActionList random_candidate(const usersim::Ontology& o, const usersim::ConstraintGraph& cg,
                                            usersim::Rng& rng) {
  using namespace usersim;
  using detail::uniform_index;
  const auto& paths = cg.paths();
  ActionList al;
  const auto len = uniform_index(rng, cg.max_actions() + 2);
  for (std::size_t i = 0; i < len && !paths.empty(); ++i) al.push_back(paths[uniform_index(rng, paths.size())].action);
  if (al.empty() || uniform_index(rng, 2) == 0) return al;
  auto& a = al[uniform_index(rng, al.size())];
  const auto intents = o.user_intents();
  const auto& dom = o.domains()[uniform_index(rng, o.domains().size())];
  const auto& slot = dom.slots[uniform_index(rng, dom.slots.size())];
  switch (uniform_index(rng, 5)) {
    case 0: a.intent = intents[uniform_index(rng, intents.size())].name; break;
    case 1: a.domain = dom.name; break;
    case 2: a.slot = slot.name; break;
    case 3: a.value = slot.pool().empty() ? std::string(kDontCare) : slot.pool()[uniform_index(rng, slot.pool().size())]; break;
    default: a.value = uniform_index(rng, 2) ? std::string(kDontCare) : std::string(kAsk); break;
  }
  return al;
}

struct OracleResult {
  std::size_t triples = 0;
  std::size_t checked_lists = 0;
  std::size_t discrepancies = 0;
  std::string first_discrepancy;
};

/// validate_action_list must accept exactly the lists enumerate_legal produces.
inline OracleResult decoder_oracle(const usersim::Ontology& o, std::size_t n_triples, std::uint64_t seed,
                                   std::size_t candidates_per_triple = 200) {
  using namespace usersim;
  OracleResult r;
  Rng rng(seed);
  for (std::size_t i = 0; i < n_triples; ++i) {
    auto t = random_triple(o, rng);
    auto probe = build_graph(o, t.goal, t.system);
    const std::size_t cap = probe.paths().size() <= 60 ? 3 : 2;
    auto cg = build_graph(o, t.goal, t.system, GraphOptions{cap});
    const auto legal = enumerate_legal(cg);
    ++r.triples;
    auto check = [&](const ActionList& al, bool expected) {
      ++r.checked_lists;
      if (is_legal(cg, al) != expected) {
        if (!r.discrepancies++) r.first_discrepancy = to_string(al);
      }
    };
    for (const auto& al : legal) check(al, true);
    for (std::size_t k = 0; k < candidates_per_triple; ++k) {
      auto al = random_candidate(o, cg, rng);
      check(al, legal.count(al) > 0);
    }
  }
  return r;
}

}  // namespace testing_support
