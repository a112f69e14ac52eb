#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "usersim/action.hpp"
#include "usersim/goals.hpp"

namespace usersim {

inline constexpr std::size_t kHistoryTurns = 3;

/// Everything the user model sees in one turn.
struct InputContext {
  ActionList system_action;
  std::vector<ActionList> user_history;  // most recent first, at most kHistoryTurns
  UserGoal goal;
  int turn = 0;

  /// Prepends the latest user turn and drops anything older than kHistoryTurns.
  void push_history(ActionList al) {
    user_history.insert(user_history.begin(), std::move(al));
    if (user_history.size() > kHistoryTurns) user_history.resize(kHistoryTurns);
  }

  friend bool operator==(const InputContext&, const InputContext&) = default;
};

struct OutputRecord {
  ActionList action;
  std::string text;

  friend bool operator==(const OutputRecord&, const OutputRecord&) = default;
};

enum class ParseMode { strict, lenient };

// Canonical form: fixed key order, ", " between elements, ": " after keys, no other whitespace.

inline std::string serialize_action(const SemanticAction& a) {
  using detail::quote;
  return "[" + quote(a.intent) + ", " + quote(a.domain) + ", " + quote(a.slot) + ", " + quote(a.value) + "]";
}

inline std::string serialize_actions(const ActionList& al) {
  std::string out = "[";
  for (std::size_t i = 0; i < al.size(); ++i) {
    if (i) out += ", ";
    out += serialize_action(al[i]);
  }
  return out + "]";
}

inline std::string serialize_goal_tuples(const UserGoal& g) {
  using detail::quote;
  std::string out = "[";
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& e = g[i];
    if (i) out += ", ";
    out += "[" + quote(e.domain) + ", " + quote(to_string(e.kind)) + ", " + quote(e.slot) + ", " +
           quote(e.value) + ", " + quote(to_string(e.status)) + "]";
  }
  return out + "]";
}

inline std::string serialize_input(const InputContext& ctx) {
  if (ctx.user_history.size() > kHistoryTurns)
    throw ValidationError("input context: user history longer than " + std::to_string(kHistoryTurns));
  if (ctx.turn < 0) throw ValidationError("input context: negative turn");
  std::string user = "[";
  for (std::size_t i = 0; i < ctx.user_history.size(); ++i) {
    if (i) user += ", ";
    user += serialize_actions(ctx.user_history[i]);
  }
  user += "]";
  return "{\"system\": " + serialize_actions(ctx.system_action) + ", \"user\": " + user +
         ", \"goal\": " + serialize_goal_tuples(ctx.goal) + ", \"turn\": " + std::to_string(ctx.turn) + "}";
}

inline std::string serialize_output(const OutputRecord& rec) {
  return "{\"action\": " + serialize_actions(rec.action) + ", \"text\": " + detail::quote(rec.text) + "}";
}

namespace detail {

inline ActionList actions_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of action tuples");
  ActionList out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& t = j[i];
    if (!t.is_array() || t.size() != 4)
      throw ParseError(where + ": action tuple " + std::to_string(i) + " must have 4 fields");
    for (const auto& f : t)
      if (!f.is_string()) throw ParseError(where + ": action fields must be strings");
    out.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>(),
                   t[3].get<std::string>()});
  }
  return out;
}

/// Recursive-descent reader for the output record. Tolerates whitespace anywhere and, when
/// `allow_truncation` is set, a text field cut off at any point after the action list.
class OutputReader {
 public:
  OutputReader(std::string_view s, bool allow_truncation) : s_(s), truncated_ok_(allow_truncation) {}

  OutputRecord read() {
    OutputRecord rec;
    ws();
    expect('{');
    ws();
    expect_key("action");
    rec.action = read_actions();
    ws();
    if (at_end() && truncated_ok_) return rec;
    expect(',');
    ws();
    if (at_end() && truncated_ok_) return rec;
    // Possibly truncated "text" key.
    static constexpr std::string_view key = "\"text\"";
    std::size_t k = 0;
    while (k < key.size() && pos_ < s_.size() && s_[pos_] == key[k]) {
      ++pos_;
      ++k;
    }
    if (k < key.size()) {
      if (at_end() && truncated_ok_) return rec;
      fail("expected \"text\"");
    }
    ws();
    if (at_end() && truncated_ok_) return rec;
    expect(':');
    ws();
    if (at_end() && truncated_ok_) return rec;
    rec.text = read_string(truncated_ok_);
    ws();
    if (at_end() && truncated_ok_) return rec;
    expect('}');
    ws();
    if (!at_end()) fail("trailing characters");
    return rec;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    auto [line, column] = line_column(s_, pos_);
    throw ParseError("output record: " + msg, line, column);
  }
  bool at_end() const { return pos_ >= s_.size(); }
  void ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\n' || s_[pos_] == '\t' || s_[pos_] == '\r'))
      ++pos_;
  }
  void expect(char c) {
    if (at_end() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  void expect_key(std::string_view key) {
    if (read_string(false) != key) fail("expected key \"" + std::string(key) + "\"");
    ws();
    expect(':');
    ws();
  }

  std::string read_string(bool may_truncate) {
    if (at_end() || s_[pos_] != '"') fail("expected a string");
    const std::size_t start = pos_++;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\\') ++pos_;
      ++pos_;
    }
    std::string literal;
    if (pos_ >= s_.size()) {
      if (!may_truncate) fail("unterminated string");
      literal = std::string(s_.substr(start));
      // Drop an incomplete trailing escape sequence before closing the literal.
      std::size_t i = 1;
      std::size_t last_escape = std::string::npos;
      while (i < literal.size()) {
        if (literal[i] == '\\') {
          last_escape = i;
          i += literal.size() > i + 1 && literal[i + 1] == 'u' ? 6 : 2;
        } else {
          ++i;
        }
      }
      if (last_escape != std::string::npos && i > literal.size()) literal.resize(last_escape);
      // A cut inside a multi-byte UTF-8 sequence leaves a dangling lead byte.
      std::size_t cont = 0;
      while (cont < literal.size() - 1 && (static_cast<unsigned char>(literal[literal.size() - 1 - cont]) & 0xC0) == 0x80)
        ++cont;
      const auto lead = static_cast<unsigned char>(literal[literal.size() - 1 - cont]);
      if (lead >= 0xC0) {
        const std::size_t need = lead >= 0xF0 ? 3 : lead >= 0xE0 ? 2 : 1;
        if (cont < need) literal.resize(literal.size() - 1 - cont);
      }
      literal += '"';
      pos_ = s_.size();
    } else {
      ++pos_;
      literal = std::string(s_.substr(start, pos_ - start));
    }
    try {
      return Json::parse(literal).get<std::string>();
    } catch (const Json::exception&) {
      fail("invalid string literal");
    }
  }

  ActionList read_actions() {
    ActionList out;
    expect('[');
    ws();
    if (!at_end() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      ws();
      expect('[');
      std::vector<std::string> fields;
      ws();
      if (!at_end() && s_[pos_] == ']') fail("action tuple must have 4 fields, got 0");
      for (;;) {
        ws();
        if (at_end()) fail("truncated action list");
        if (s_[pos_] != '"') fail("action fields must be strings");
        fields.push_back(read_string(false));
        ws();
        if (at_end()) fail("truncated action list");
        if (s_[pos_] == ',') {
          ++pos_;
          continue;
        }
        expect(']');
        break;
      }
      if (fields.size() != 4)
        fail("action tuple must have 4 fields, got " + std::to_string(fields.size()));
      out.push_back({fields[0], fields[1], fields[2], fields[3]});
      ws();
      if (at_end()) fail("truncated action list");
      if (s_[pos_] == ',') {
        ++pos_;
        continue;
      }
      expect(']');
      return out;
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  bool truncated_ok_;
};

}  // namespace detail

/// Strict mode accepts exactly the canonical serialization; lenient mode tolerates whitespace
/// variance and a truncated text field, but the action list must be complete.
inline OutputRecord parse_output(std::string_view s, ParseMode mode = ParseMode::strict) {
  auto rec = detail::OutputReader(s, mode == ParseMode::lenient).read();
  if (mode == ParseMode::strict && serialize_output(rec) != s)
    throw ParseError("output record: not in canonical form");
  return rec;
}

/// Inverse of serialize_input. Strict: the text must be canonical.
inline InputContext parse_input(std::string_view s, ParseMode mode = ParseMode::strict) {
  Json j = detail::parse_json(s, "input context");
  if (!j.is_object()) throw ParseError("input context: expected an object");
  for (const char* key : {"system", "user", "goal", "turn"})
    if (!j.contains(key)) throw ParseError(std::string("input context: missing key '") + key + "'");
  InputContext ctx;
  ctx.system_action = detail::actions_from_json(j["system"], "input.system");
  if (!j["user"].is_array()) throw ParseError("input context: 'user' must be an array");
  for (const auto& al : j["user"]) ctx.user_history.push_back(detail::actions_from_json(al, "input.user"));
  if (!j["goal"].is_array()) throw ParseError("input context: 'goal' must be an array");
  std::vector<GoalEntry> entries;
  for (const auto& t : j["goal"]) {
    if (!t.is_array() || t.size() != 5)
      throw ParseError("input context: goal tuples must have 5 fields");
    for (const auto& f : t)
      if (!f.is_string()) throw ParseError("input context: goal fields must be strings");
    auto kind = kind_from_string(t[1].get<std::string>());
    auto status = status_from_string(t[4].get<std::string>());
    if (!kind || !status) throw ParseError("input context: bad goal kind or status");
    entries.push_back({t[0].get<std::string>(), *kind, t[2].get<std::string>(), t[3].get<std::string>(), *status});
  }
  ctx.goal = UserGoal::from_entries(std::move(entries));
  if (!j["turn"].is_number_integer() || j["turn"].get<long long>() < 0)
    throw ParseError("input context: 'turn' must be a non-negative integer");
  ctx.turn = j["turn"].get<int>();
  if (mode == ParseMode::strict && serialize_input(ctx) != s)
    throw ParseError("input context: not in canonical form");
  return ctx;
}

// ---------------------------------------------------------------------------
// Dialogue corpus (JSONL, one dialogue per line)

enum class Speaker { sys, usr };

struct CorpusTurn {
  Speaker speaker = Speaker::usr;
  ActionList action;
  std::string text;

  friend bool operator==(const CorpusTurn&, const CorpusTurn&) = default;
};

struct Dialogue {
  UserGoal goal;
  std::vector<CorpusTurn> turns;

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

using DialogueCorpus = std::vector<Dialogue>;

inline Json actions_to_json(const ActionList& al) {
  Json arr = Json::array();
  for (const auto& a : al) arr.push_back({a.intent, a.domain, a.slot, a.value});
  return arr;
}

inline std::string serialize_dialogue(const Dialogue& d) {
  OrderedJson j;
  j["goal"] = goal_to_json(d.goal);
  OrderedJson turns = OrderedJson::array();
  for (const auto& t : d.turns) {
    OrderedJson tj;
    tj["speaker"] = t.speaker == Speaker::sys ? "sys" : "usr";
    tj["action"] = actions_to_json(t.action);
    tj["text"] = t.text;
    turns.push_back(std::move(tj));
  }
  j["turns"] = std::move(turns);
  return j.dump();
}

/// Parses JSONL. Blank lines and {"meta": ...} header lines are skipped. All schema
/// violations are collected and reported together, one per line.
inline DialogueCorpus load_corpus(std::string_view text) {
  DialogueCorpus out;
  std::vector<std::string> errors;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    try {
      Json j = detail::parse_json(line, "corpus");
      if (j.is_object() && j.contains("meta") && !j.contains("turns")) continue;
      if (!j.is_object() || !j.contains("goal") || !j.contains("turns") || !j["turns"].is_array())
        throw ValidationError("expected {\"goal\": ..., \"turns\": [...]}");
      Dialogue d;
      d.goal = goal_from_json(j["goal"]);
      for (const auto& tj : j["turns"]) {
        if (!tj.is_object() || !tj.contains("speaker") || !tj["speaker"].is_string())
          throw ValidationError("turn needs a string 'speaker'");
        const auto sp = tj["speaker"].get<std::string>();
        if (sp != "sys" && sp != "usr") throw ValidationError("speaker must be \"sys\" or \"usr\"");
        CorpusTurn t;
        t.speaker = sp == "sys" ? Speaker::sys : Speaker::usr;
        t.action = detail::actions_from_json(tj.value("action", Json::array()), "turn.action");
        if (tj.contains("text")) {
          if (!tj["text"].is_string()) throw ValidationError("turn text must be a string");
          t.text = tj["text"].get<std::string>();
        }
        d.turns.push_back(std::move(t));
      }
      out.push_back(std::move(d));
    } catch (const Error& e) {
      errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
  if (!errors.empty()) {
    std::string msg = "corpus has " + std::to_string(errors.size()) + " invalid line(s)";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  return out;
}

inline DialogueCorpus load_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_corpus(ss.str());
}

// ---------------------------------------------------------------------------
// Supervised pairs

/// Input variants of the feature ablation:
///  full               system action, user actions of the last 3 turns, goal, turn
///  no_history         system action, goal, turn
///  no_goal_no_history system action, turn
enum class FeatureSet { full, no_history, no_goal_no_history };

inline std::string_view to_string(FeatureSet f) {
  switch (f) {
    case FeatureSet::full: return "full";
    case FeatureSet::no_history: return "no_history";
    case FeatureSet::no_goal_no_history: return "no_goal_no_history";
  }
  return "full";
}

inline std::optional<FeatureSet> feature_set_from_string(std::string_view s) {
  for (auto f : {FeatureSet::full, FeatureSet::no_history, FeatureSet::no_goal_no_history})
    if (to_string(f) == s) return f;
  return std::nullopt;
}

struct SupervisedPair {
  std::string input;
  std::string output;
};

/// One (input, output) pair per user turn. The goal is tracked through the dialogue with the
/// same update rules the simulator uses; failure-triggered replacements draw from `seed`.
inline std::vector<SupervisedPair> build_supervised_pairs(const DialogueCorpus& corpus, FeatureSet features,
                                                          const Ontology& o, std::uint64_t seed = 0) {
  std::vector<SupervisedPair> pairs;
  for (std::size_t di = 0; di < corpus.size(); ++di) {
    const auto& d = corpus[di];
    Rng rng = detail::derived_rng(seed, di);
    UserGoal goal = d.goal;
    ActionList last_sys;
    std::vector<ActionList> history;
    int turn = 0;
    for (const auto& t : d.turns) {
      if (t.speaker == Speaker::sys) {
        last_sys = t.action;
        goal = update_on_system(goal, t.action, o, rng).first;
        continue;
      }
      InputContext ctx;
      ctx.system_action = last_sys;
      if (features == FeatureSet::full) ctx.user_history = history;
      if (features != FeatureSet::no_goal_no_history) ctx.goal = goal;
      ctx.turn = turn;
      pairs.push_back({serialize_input(ctx), serialize_output({t.action, t.text})});

      goal = update_on_user(goal, t.action, o);
      history.insert(history.begin(), t.action);
      if (history.size() > kHistoryTurns) history.resize(kHistoryTurns);
      last_sys.clear();
      ++turn;
    }
  }
  return pairs;
}

}  // namespace usersim
