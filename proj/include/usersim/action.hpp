#pragma once

#include <compare>
#include <string>
#include <vector>

#include "usersim/ontology.hpp"

namespace usersim {

/// One (intent, domain, slot, value) tuple.
struct SemanticAction {
  std::string intent;
  std::string domain;
  std::string slot;
  std::string value;

  friend auto operator<=>(const SemanticAction&, const SemanticAction&) = default;
  friend bool operator==(const SemanticAction&, const SemanticAction&) = default;

  std::string str() const { return "(" + intent + ", " + domain + ", " + slot + ", " + value + ")"; }
};

using ActionList = std::vector<SemanticAction>;

inline SemanticAction general_action(std::string intent) {
  return {std::move(intent), std::string(kGeneralDomain), std::string(kNone), std::string(kNone)};
}

/// Checks the per-role shape invariants of a single action.
inline bool well_formed(const SemanticAction& a, IntentRole role) {
  if (role == IntentRole::general || role == IntentRole::bye)
    return a.domain == kGeneralDomain && a.slot == kNone && a.value == kNone;
  if (a.domain == kGeneralDomain) return false;
  if (role == IntentRole::request) return a.value == kAsk;
  return true;
}

inline std::string to_string(const ActionList& al) {
  std::string out = "[";
  for (std::size_t i = 0; i < al.size(); ++i) {
    if (i) out += ", ";
    out += al[i].str();
  }
  return out + "]";
}

}  // namespace usersim
