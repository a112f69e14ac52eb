#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "usersim/action.hpp"
#include "usersim/common.hpp"
#include "usersim/ontology.hpp"

namespace usersim {

enum class Side { user, system };

/// Template table. Keys are "intent|domain|slot" with "*" wildcards; "@role|..." keys match
/// any intent of that role, "@dontcare|..." keys apply to dontcare values, "@empty" renders
/// an empty action list. Placeholders: {intent} {domain} {slot} {value}.
class TemplateTable {
 public:
  TemplateTable() = default;

  static TemplateTable from_json(const Json& j) {
    TemplateTable t;
    for (auto [side, key] : {std::pair{Side::user, "user"}, std::pair{Side::system, "system"}}) {
      if (!j.contains(key)) continue;
      if (!j.at(key).is_object()) throw ValidationError(std::string("templates: '") + key + "' must be an object");
      for (const auto& [k, v] : j.at(key).items()) {
        if (!v.is_string()) throw ValidationError("templates: value for '" + k + "' must be a string");
        t.table(side)[k] = v.get<std::string>();
      }
    }
    return t;
  }

  static TemplateTable load(std::string_view text) { return from_json(detail::parse_json(text, "templates")); }

  static TemplateTable load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open template file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load(ss.str());
  }

  const std::string* find(Side side, const std::string& key) const {
    const auto& m = side == Side::user ? user_ : system_;
    auto it = m.find(key);
    return it == m.end() ? nullptr : &it->second;
  }

  std::map<std::string, std::string>& table(Side side) { return side == Side::user ? user_ : system_; }

 private:
  std::map<std::string, std::string> user_;
  std::map<std::string, std::string> system_;
};

namespace detail {

inline std::string spaced(std::string s) {
  std::replace(s.begin(), s.end(), '_', ' ');
  return s;
}

inline std::string fill(const std::string& pattern, const SemanticAction& a) {
  std::string out;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '{') {
      auto close = pattern.find('}', i);
      if (close != std::string::npos) {
        auto name = pattern.substr(i + 1, close - i - 1);
        const std::string* sub = name == "intent"   ? &a.intent
                                 : name == "domain" ? &a.domain
                                 : name == "slot"   ? &a.slot
                                 : name == "value"  ? &a.value
                                                    : nullptr;
        if (sub) {
          out += name == "value" ? *sub : spaced(*sub);
          i = close;
          continue;
        }
      }
    }
    out += pattern[i];
  }
  return out;
}

}  // namespace detail

/// Renders one action list as text: one sentence per action, joined by spaces.
/// Deterministic in (al, templates).
inline std::string realize(const ActionList& al, const Ontology& o, const TemplateTable& t, Side side = Side::user) {
  static const std::string generic = "{intent} {domain} {slot} {value}.";
  if (al.empty()) {
    const auto* p = t.find(side, "@empty");
    return p ? *p : "Okay.";
  }
  std::string out;
  for (const auto& a : al) {
    auto role = side == Side::user ? o.user_role(a.intent) : o.system_role(a.intent);
    std::vector<std::string> heads;
    if (a.value == kDontCare) heads.push_back("@dontcare");
    heads.push_back(a.intent);
    if (role) heads.push_back("@" + std::string(to_string(*role)));
    const std::string* pattern = nullptr;
    for (const auto& h : heads) {
      for (const auto& key : {h + "|" + a.domain + "|" + a.slot, h + "|*|" + a.slot, h + "|" + a.domain + "|*",
                              h + "|*|*"}) {
        if ((pattern = t.find(side, key))) break;
      }
      if (pattern) break;
    }
    if (!out.empty()) out += ' ';
    out += detail::fill(pattern ? *pattern : generic, a);
  }
  return out;
}

}  // namespace usersim
