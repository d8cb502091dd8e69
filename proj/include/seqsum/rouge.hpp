#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "seqsum/corpus.hpp"
#include "seqsum/error.hpp"

namespace seqsum {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Harmonic mean, 0 when p + r == 0.
inline RougeScore make_rouge_score(double precision, double recall) {
  const double denom = precision + recall;
  return {precision, recall, denom > 0.0 ? 2.0 * precision * recall / denom : 0.0};
}

enum class SummaryLcsMode {
  kUnion,        // per reference sentence, union of LCS hits over candidate sentences
  kConcatenate,  // flatten both sides and score as one sentence pair
};

namespace rouge_detail {

using TokenId = std::int32_t;

// Length of an LCS of a and b. O(|a||b|) time, O(|b|) memory.
std::size_t lcs_length_ids(std::span<const TokenId> a, std::span<const TokenId> b);

// Positions in `ref` covered by one LCS of (cand, ref). Backtrace prefers the
// ref-side step on ties so the chosen LCS is deterministic.
std::vector<std::uint8_t> lcs_ref_hits(std::span<const TokenId> cand, std::span<const TokenId> ref);

// Summary-level union LCS with token-count clipping: a matched reference token
// counts only while both sides still have an unused copy of it. `hits[r][i]`
// marks reference sentence r position i as covered by some candidate LCS.
std::size_t clipped_union_hits(const std::vector<std::vector<TokenId>>& refs,
                               const std::vector<std::vector<std::uint8_t>>& hits,
                               std::unordered_map<TokenId, std::int64_t> cand_counts);

RougeScore rouge_l_summary_ids(const std::vector<std::vector<TokenId>>& cands,
                               const std::vector<std::vector<TokenId>>& refs);

RougeScore rouge_n_ids(const std::vector<std::vector<TokenId>>& cands,
                       const std::vector<std::vector<TokenId>>& refs, std::size_t n);

// Maps arbitrary hashable tokens to dense ids.
template <class T>
class Interner {
 public:
  TokenId id(const T& tok) {
    auto [it, inserted] = ids_.try_emplace(tok, static_cast<TokenId>(ids_.size()));
    return it->second;
  }
  std::vector<TokenId> ids(std::span<const T> toks) {
    std::vector<TokenId> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
  }

 private:
  std::unordered_map<T, TokenId> ids_;
};

}  // namespace rouge_detail

template <class T>
std::size_t lcs_length(std::span<const T> a, std::span<const T> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <class T>
RougeScore rouge_l_sentence(std::span<const T> candidate, std::span<const T> reference) {
  if (reference.empty()) throw Error("rouge_l_sentence: empty reference");
  const double lcs = static_cast<double>(lcs_length(candidate, reference));
  const double p = candidate.empty() ? 0.0 : lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return make_rouge_score(p, r);
}

// Summary-level ROUGE-L. Union mode clips matched tokens by the available counts
// on both sides so precision and recall stay in [0, 1].
template <class T>
RougeScore rouge_l_summary(const std::vector<std::vector<T>>& candidate_sents,
                           const std::vector<std::vector<T>>& reference_sents,
                           SummaryLcsMode mode = SummaryLcsMode::kUnion) {
  if (reference_sents.empty()) throw Error("rouge_l_summary: empty reference set");
  for (const auto& r : reference_sents)
    if (r.empty()) throw Error("rouge_l_summary: empty reference sentence");
  if (mode == SummaryLcsMode::kConcatenate) {
    std::vector<T> cand, ref;
    for (const auto& s : candidate_sents) cand.insert(cand.end(), s.begin(), s.end());
    for (const auto& s : reference_sents) ref.insert(ref.end(), s.begin(), s.end());
    return rouge_l_sentence<T>(cand, ref);
  }
  rouge_detail::Interner<T> interner;
  std::vector<std::vector<rouge_detail::TokenId>> cands, refs;
  for (const auto& s : candidate_sents) cands.push_back(interner.ids(std::span<const T>(s)));
  for (const auto& s : reference_sents) refs.push_back(interner.ids(std::span<const T>(s)));
  return rouge_detail::rouge_l_summary_ids(cands, refs);
}

// Clipped n-gram overlap. Precision is 0 when the candidate has no n-grams.
template <class T>
RougeScore rouge_n(std::span<const T> candidate, std::span<const T> reference, std::size_t n) {
  if (n == 0) throw Error("rouge_n: order must be >= 1");
  if (reference.size() < n)
    throw Error("rouge_n: reference has " + std::to_string(reference.size()) +
                " tokens, fewer than n=" + std::to_string(n));
  rouge_detail::Interner<T> interner;
  return rouge_detail::rouge_n_ids({interner.ids(candidate)}, {interner.ids(reference)}, n);
}

// Multi-sentence ROUGE-N; n-grams never cross sentence boundaries.
template <class T>
RougeScore rouge_n_summary(const std::vector<std::vector<T>>& candidate_sents,
                           const std::vector<std::vector<T>>& reference_sents, std::size_t n) {
  if (n == 0) throw Error("rouge_n_summary: order must be >= 1");
  rouge_detail::Interner<T> interner;
  std::vector<std::vector<rouge_detail::TokenId>> cands, refs;
  for (const auto& s : candidate_sents) cands.push_back(interner.ids(std::span<const T>(s)));
  for (const auto& s : reference_sents) refs.push_back(interner.ids(std::span<const T>(s)));
  return rouge_detail::rouge_n_ids(cands, refs, n);
}

}  // namespace seqsum

template <>
struct std::hash<seqsum::Token> {
  std::size_t operator()(const seqsum::Token& t) const noexcept {
    return std::hash<std::string>{}(t.text);
  }
};
