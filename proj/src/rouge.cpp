#include "seqsum/rouge.hpp"

#include <map>

namespace seqsum::rouge_detail {

std::size_t lcs_length_ids(std::span<const TokenId> a, std::span<const TokenId> b) {
  return lcs_length<TokenId>(a, b);
}

std::vector<std::uint8_t> lcs_ref_hits(std::span<const TokenId> cand, std::span<const TokenId> ref) {
  const std::size_t n = cand.size(), m = ref.size();
  std::vector<std::uint8_t> hits(m, 0);
  if (n == 0 || m == 0) return hits;
  // Full table is needed for the backtrace; sentences are short.
  std::vector<std::uint32_t> table((n + 1) * (m + 1), 0);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      table[at(i, j)] = cand[i - 1] == ref[j - 1]
                            ? static_cast<std::uint32_t>(table[at(i - 1, j - 1)] + 1)
                            : std::max(table[at(i - 1, j)], table[at(i, j - 1)]);
  std::size_t i = n, j = m;
  while (i > 0 && j > 0) {
    if (cand[i - 1] == ref[j - 1]) {
      hits[j - 1] = 1;
      --i;
      --j;
    } else if (table[at(i - 1, j)] > table[at(i, j - 1)]) {
      --i;
    } else {
      --j;
    }
  }
  return hits;
}

std::size_t clipped_union_hits(const std::vector<std::vector<TokenId>>& refs,
                               const std::vector<std::vector<std::uint8_t>>& hits,
                               std::unordered_map<TokenId, std::int64_t> cand_counts) {
  std::size_t total = 0;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    for (std::size_t i = 0; i < refs[r].size(); ++i) {
      if (!hits[r][i]) continue;
      auto it = cand_counts.find(refs[r][i]);
      if (it != cand_counts.end() && it->second > 0) {
        --it->second;
        ++total;
      }
    }
  }
  return total;
}

RougeScore rouge_l_summary_ids(const std::vector<std::vector<TokenId>>& cands,
                               const std::vector<std::vector<TokenId>>& refs) {
  std::size_t ref_len = 0, cand_len = 0;
  std::unordered_map<TokenId, std::int64_t> cand_counts;
  for (const auto& c : cands) {
    cand_len += c.size();
    for (TokenId t : c) ++cand_counts[t];
  }
  std::vector<std::vector<std::uint8_t>> hits;
  hits.reserve(refs.size());
  for (const auto& r : refs) {
    ref_len += r.size();
    std::vector<std::uint8_t> h(r.size(), 0);
    for (const auto& c : cands) {
      auto ch = lcs_ref_hits(c, r);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] |= ch[i];
    }
    hits.push_back(std::move(h));
  }
  const double matched = static_cast<double>(clipped_union_hits(refs, hits, std::move(cand_counts)));
  const double p = cand_len ? matched / static_cast<double>(cand_len) : 0.0;
  const double r = ref_len ? matched / static_cast<double>(ref_len) : 0.0;
  return make_rouge_score(p, r);
}

RougeScore rouge_n_ids(const std::vector<std::vector<TokenId>>& cands,
                       const std::vector<std::vector<TokenId>>& refs, std::size_t n) {
  using Gram = std::vector<TokenId>;
  auto count = [n](const std::vector<std::vector<TokenId>>& sents, std::size_t& total) {
    std::map<Gram, std::int64_t> counts;
    total = 0;
    for (const auto& s : sents) {
      if (s.size() < n) continue;
      for (std::size_t i = 0; i + n <= s.size(); ++i) {
        ++counts[Gram(s.begin() + static_cast<std::ptrdiff_t>(i),
                      s.begin() + static_cast<std::ptrdiff_t>(i + n))];
        ++total;
      }
    }
    return counts;
  };
  std::size_t cand_total = 0, ref_total = 0;
  const auto cand_counts = count(cands, cand_total);
  const auto ref_counts = count(refs, ref_total);
  std::int64_t overlap = 0;
  for (const auto& [gram, c] : cand_counts) {
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) overlap += std::min(c, it->second);
  }
  const double p = cand_total ? static_cast<double>(overlap) / static_cast<double>(cand_total) : 0.0;
  const double r = ref_total ? static_cast<double>(overlap) / static_cast<double>(ref_total) : 0.0;
  return make_rouge_score(p, r);
}

}  // namespace seqsum::rouge_detail
