#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "seqsum/corpus.hpp"
#include "seqsum/model.hpp"
#include "seqsum/oracle.hpp"
#include "seqsum/rouge.hpp"

namespace seqsum {

enum class GroupBy {
  kNone,
  kAsjc,  // first ASJC code of the document, "<none>" when absent
};

GroupBy parse_group_by(std::string_view s);

struct EvalOptions {
  std::size_t k = 4;
  GroupBy group_by = GroupBy::kNone;
  SummaryLcsMode lcs_mode = SummaryLcsMode::kUnion;
  unsigned jobs = 1;
};

struct DocumentScore {
  std::string id;
  double score = 0.0;  // ROUGE-L F of the top-k selection against the highlights
  std::vector<std::size_t> selected;
  std::string group;
};

struct EvalResult {
  std::vector<DocumentScore> documents;
  double mean = 0.0;
  std::map<std::string, double> group_means;
  // Fraction of all selected sentences per SectionClass.
  std::array<double, kNumSectionClasses> section_distribution{};
  double avg_selected_length = 0.0;
  std::size_t selected_count = 0;
  std::vector<SkippedDocument> skipped;
};

// Scores given per-sentence probabilities. Documents without highlights are
// skipped and reported.
EvalResult evaluate_probabilities(std::span<const Document> docs,
                                  std::span<const std::vector<double>> probabilities,
                                  const EvalOptions& options = {});

// rouge-l-f@k of a model's top-k sentences (k = 4 by default).
EvalResult rouge_l_f_at_k(const SummaryModel& model, std::span<const Document> docs,
                          const EvalOptions& options = {});

std::array<double, kNumSectionClasses> structural_report(const SummaryModel& model,
                                                         std::span<const Document> docs,
                                                         std::size_t k = 4);
double length_report(const SummaryModel& model, std::span<const Document> docs, std::size_t k = 4);

// Paired approximate randomisation on |mean(a) - mean(b)|. Each iteration swaps
// every pair with probability 1/2; p = (hits + 1) / (iterations + 1).
double approx_randomization(std::span<const double> scores_a, std::span<const double> scores_b,
                            std::size_t iterations = 10000, std::uint64_t seed = 0);

nlohmann::json to_json(const EvalResult& result);

// "id,score" lines with a header row.
std::string scores_csv(const EvalResult& result);
std::vector<std::pair<std::string, double>> parse_scores_csv(std::istream& in,
                                                             const std::string& source_name = "<stream>");

// Pairs two score lists by document id, in the order of `a`. Throws when the
// id sets differ.
std::pair<std::vector<double>, std::vector<double>> pair_scores(
    std::span<const std::pair<std::string, double>> a, std::span<const std::pair<std::string, double>> b);

}  // namespace seqsum
