#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "usersim/action.hpp"
#include "usersim/common.hpp"
#include "usersim/ontology.hpp"

namespace usersim {

/// Lowercased maximal runs of characters that are neither whitespace nor one of .,!?;"()
inline std::vector<std::string> tokenize(std::string_view text) {
  static constexpr std::string_view breaks = " \t\n\r\f\v.,!?;\"()";
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (breaks.find(c) != std::string_view::npos) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ---------------------------------------------------------------------------
// Slot error rate

struct NlgSample {
  ActionList actions;
  std::string utterance;
  std::vector<std::string> goal_values;  // added to the hallucination lexicon for this sample
};

struct SerResult {
  std::optional<double> rate;  // empty when N = 0
  std::size_t m = 0;
  std::size_t h = 0;
  std::size_t n = 0;
};

/// Closed vocabulary of every slot. Open-valued strings are left out on purpose.
inline std::vector<std::string> ser_lexicon(const Ontology& o) {
  std::set<std::string> s;
  for (const auto& d : o.domains())
    for (const auto& sl : d.slots) s.insert(sl.values.begin(), sl.values.end());
  return {s.begin(), s.end()};
}

namespace detail {

inline bool counts_for_ser(const std::string& v) { return v != kAsk && v != kNone && v != kDontCare && !v.empty(); }

/// Start positions of `needle` in `hay` (token sequences).
inline std::vector<std::size_t> occurrences(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  std::vector<std::size_t> out;
  if (needle.empty() || needle.size() > hay.size()) return out;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) out.push_back(i);
  return out;
}

}  // namespace detail

/// Per sample: N counts actions with a concrete value (not ?, none or dontcare); m counts those
/// whose value tokens do not appear in the utterance; h counts distinct lexicon values found in
/// what is left after masking the spans of the sample's own values (longest first).
inline SerResult ser(const std::vector<NlgSample>& samples, const std::vector<std::string>& lexicon) {
  SerResult r;
  for (const auto& s : samples) {
    const auto toks = tokenize(s.utterance);
    std::vector<bool> masked(toks.size(), false);
    std::set<std::string> own;
    for (const auto& a : s.actions) {
      if (!detail::counts_for_ser(a.value)) continue;
      ++r.n;
      const auto vt = tokenize(a.value);
      own.insert(detail::to_lower(a.value));
      auto occ = detail::occurrences(toks, vt);
      if (occ.empty()) ++r.m;
      for (auto i : occ) std::fill(masked.begin() + static_cast<std::ptrdiff_t>(i), masked.begin() + static_cast<std::ptrdiff_t>(i + vt.size()), true);
    }
    std::set<std::string> lex;
    for (const auto* list : {&lexicon, &s.goal_values})
      for (const auto& v : *list)
        if (detail::counts_for_ser(v) && !own.count(detail::to_lower(v))) lex.insert(detail::to_lower(v));
    std::vector<std::vector<std::string>> entries;
    for (const auto& v : lex) entries.push_back(tokenize(v));
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    for (const auto& vt : entries) {
      bool hit = false;
      for (auto i : detail::occurrences(toks, vt)) {
        if (std::any_of(masked.begin() + static_cast<std::ptrdiff_t>(i), masked.begin() + static_cast<std::ptrdiff_t>(i + vt.size()), [](bool b) { return b; }))
          continue;
        std::fill(masked.begin() + static_cast<std::ptrdiff_t>(i), masked.begin() + static_cast<std::ptrdiff_t>(i + vt.size()), true);
        hit = true;
      }
      if (hit) ++r.h;
    }
  }
  if (r.n > 0) r.rate = static_cast<double>(r.m + r.h) / static_cast<double>(r.n);
  return r;
}

// ---------------------------------------------------------------------------
// BLEU

/// Stands in for a zero n-gram match count so the geometric mean stays defined.
inline constexpr double kBleuEpsilon = 1e-7;

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

inline NgramCounts ngrams(const std::vector<std::string>& t, std::size_t n) {
  NgramCounts c;
  for (std::size_t i = 0; i + n <= t.size(); ++i)
    ++c[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return c;
}

}  // namespace detail

/// Corpus BLEU-4 in [0, 100]: clipped n-gram precisions pooled over the corpus, uniform
/// weights, brevity penalty against the closest reference length (shorter wins ties).
inline double corpus_bleu(const std::vector<std::string>& candidates, const std::vector<std::vector<std::string>>& references) {
  if (candidates.size() != references.size()) throw ValidationError("bleu: candidates and references differ in length");
  if (candidates.empty()) throw ValidationError("bleu: empty corpus");
  std::array<double, 4> match{}, total{};
  double cand_len = 0, ref_len = 0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (references[k].empty()) throw ValidationError("bleu: every candidate needs at least one reference");
    const auto c = tokenize(candidates[k]);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references[k]) refs.push_back(tokenize(r));
    cand_len += static_cast<double>(c.size());
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      auto d = [&](std::size_t len) { return len > c.size() ? len - c.size() : c.size() - len; };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= 4; ++n) {
      auto cc = detail::ngrams(c, n);
      detail::NgramCounts maxref;
      for (const auto& r : refs)
        for (const auto& [g, cnt] : detail::ngrams(r, n)) maxref[g] = std::max(maxref[g], cnt);
      for (const auto& [g, cnt] : cc) {
        auto it = maxref.find(g);
        match[n - 1] += static_cast<double>(std::min(cnt, it == maxref.end() ? 0 : it->second));
        total[n - 1] += static_cast<double>(cnt);
      }
    }
  }
  if (cand_len == 0) return 0;
  double log_p = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double m = match[n] > 0 ? match[n] : kBleuEpsilon;
    log_p += std::log(m / std::max(total[n], 1.0)) / 4.0;
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return 100.0 * bp * std::exp(log_p);
}

/// Mean BLEU of each sentence against all the others. Lower means more diverse.
inline double self_bleu(const std::vector<std::string>& sentences) {
  if (sentences.size() < 2) throw ValidationError("self-bleu: need at least 2 sentences");
  double sum = 0;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    std::vector<std::string> others;
    for (std::size_t j = 0; j < sentences.size(); ++j)
      if (j != i) others.push_back(sentences[j]);
    sum += corpus_bleu({sentences[i]}, {others});
  }
  return sum / static_cast<double>(sentences.size());
}

// ---------------------------------------------------------------------------
// Semantic precision / recall

struct SemanticEvalPair {
  ActionList predicted;
  ActionList golden;
};

struct PRF {
  double p = 0, r = 0, f1 = 0, acc = 0;
  bool p_undefined = false;  // nothing predicted; p reported as 0
  bool r_undefined = false;  // nothing golden; r reported as 0
  std::size_t tp = 0, predicted = 0, golden = 0, pairs = 0;
};

/// Micro-averaged over exact (case-normalized) tuple matches; ACC is exact set equality per pair.
inline PRF semantic_prf(const std::vector<SemanticEvalPair>& pairs) {
  auto norm = [](const ActionList& al) {
    std::set<SemanticAction> s;
    for (const auto& a : al)
      s.insert({detail::to_lower(a.intent), detail::to_lower(a.domain), detail::to_lower(a.slot), detail::to_lower(a.value)});
    return s;
  };
  PRF r;
  std::size_t exact = 0;
  for (const auto& pr : pairs) {
    auto p = norm(pr.predicted), g = norm(pr.golden);
    std::size_t tp = 0;
    for (const auto& a : p) tp += g.count(a);
    r.tp += tp;
    r.predicted += p.size();
    r.golden += g.size();
    if (p == g) ++exact;
  }
  r.pairs = pairs.size();
  r.p_undefined = r.predicted == 0;
  r.r_undefined = r.golden == 0;
  r.p = r.p_undefined ? 0 : static_cast<double>(r.tp) / static_cast<double>(r.predicted);
  r.r = r.r_undefined ? 0 : static_cast<double>(r.tp) / static_cast<double>(r.golden);
  r.f1 = r.p + r.r > 0 ? 2 * r.p * r.r / (r.p + r.r) : 0;
  r.acc = pairs.empty() ? 0 : static_cast<double>(exact) / static_cast<double>(pairs.size());
  return r;
}

inline Json to_json(const SerResult& s) {
  return Json{{"rate", s.rate ? Json(*s.rate) : Json(nullptr)}, {"m", s.m}, {"h", s.h}, {"N", s.n}};
}

inline Json to_json(const PRF& r) {
  return Json{{"p", r.p}, {"r", r.r}, {"f1", r.f1}, {"acc", r.acc}, {"p_undefined", r.p_undefined},
              {"r_undefined", r.r_undefined}};
}

}  // namespace usersim
