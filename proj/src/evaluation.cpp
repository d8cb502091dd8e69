#include "seqsum/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "seqsum/parallel.hpp"

namespace seqsum {

using nlohmann::json;

GroupBy parse_group_by(std::string_view s) {
  if (s.empty() || s == "none") return GroupBy::kNone;
  if (s == "asjc") return GroupBy::kAsjc;
  throw Error("unknown group-by key \"" + std::string(s) + "\" (expected none or asjc)");
}

EvalResult evaluate_probabilities(std::span<const Document> docs,
                                  std::span<const std::vector<double>> probabilities,
                                  const EvalOptions& options) {
  if (docs.size() != probabilities.size())
    throw Error("evaluate: " + std::to_string(probabilities.size()) + " probability lists for " +
                std::to_string(docs.size()) + " documents");
  EvalResult out;
  std::array<double, kNumSectionClasses> section_counts{};
  double selected_tokens = 0.0;
  std::map<std::string, std::pair<double, std::size_t>> groups;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const Document& doc = docs[d];
    if (doc.highlights.empty()) {
      out.skipped.push_back({doc.id, "no highlights"});
      continue;
    }
    if (doc.sentences.empty()) {
      out.skipped.push_back({doc.id, "no sentences"});
      continue;
    }
    if (probabilities[d].size() != doc.sentences.size())
      throw Error("evaluate: document \"" + doc.id + "\" has " + std::to_string(doc.sentences.size()) +
                  " sentences but " + std::to_string(probabilities[d].size()) + " probabilities");
    DocumentScore ds;
    ds.id = doc.id;
    ds.selected = rank_top_k(probabilities[d], options.k);
    std::vector<TokenList> chosen;
    for (std::size_t i : ds.selected) {
      const Sentence& s = doc.sentences[i];
      chosen.push_back(s.tokens);
      section_counts[static_cast<std::size_t>(s.section)] += 1.0;
      selected_tokens += static_cast<double>(s.tokens.size());
      ++out.selected_count;
    }
    ds.score = rouge_l_summary(chosen, doc.highlights, options.lcs_mode).f1;
    if (options.group_by == GroupBy::kAsjc) {
      ds.group = doc.asjc_codes.empty() ? "<none>" : doc.asjc_codes.front();
      auto& [total, count] = groups[ds.group];
      total += ds.score;
      ++count;
    }
    out.documents.push_back(std::move(ds));
  }
  if (!out.documents.empty()) {
    double total = 0.0;
    for (const auto& ds : out.documents) total += ds.score;
    out.mean = total / static_cast<double>(out.documents.size());
  }
  for (const auto& [name, tc] : groups) out.group_means[name] = tc.first / static_cast<double>(tc.second);
  if (out.selected_count > 0) {
    for (std::size_t c = 0; c < kNumSectionClasses; ++c)
      out.section_distribution[c] = section_counts[c] / static_cast<double>(out.selected_count);
    out.avg_selected_length = selected_tokens / static_cast<double>(out.selected_count);
  }
  return out;
}

EvalResult rouge_l_f_at_k(const SummaryModel& model, std::span<const Document> docs, const EvalOptions& options) {
  std::vector<std::vector<double>> probabilities(docs.size());
  parallel_for(docs.size(), options.jobs, [&](std::size_t i) {
    if (!docs[i].highlights.empty() && !docs[i].sentences.empty()) probabilities[i] = predict(model, docs[i]);
  });
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (probabilities[i].empty()) probabilities[i].assign(docs[i].sentences.size(), 0.0);
  return evaluate_probabilities(docs, probabilities, options);
}

std::array<double, kNumSectionClasses> structural_report(const SummaryModel& model,
                                                         std::span<const Document> docs, std::size_t k) {
  EvalOptions options;
  options.k = k;
  return rouge_l_f_at_k(model, docs, options).section_distribution;
}

double length_report(const SummaryModel& model, std::span<const Document> docs, std::size_t k) {
  EvalOptions options;
  options.k = k;
  return rouge_l_f_at_k(model, docs, options).avg_selected_length;
}

double approx_randomization(std::span<const double> scores_a, std::span<const double> scores_b,
                            std::size_t iterations, std::uint64_t seed) {
  if (scores_a.size() != scores_b.size())
    throw Error("approx_randomization: " + std::to_string(scores_a.size()) + " vs " +
                std::to_string(scores_b.size()) + " scores");
  if (scores_a.empty()) throw Error("approx_randomization: no scores");
  if (iterations == 0) throw Error("approx_randomization: iterations must be >= 1");
  const std::size_t n = scores_a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = scores_a[i] - scores_b[i];
  const double denom = static_cast<double>(n);
  double observed_sum = 0.0;
  for (double d : diff) observed_sum += d;
  const double observed = std::abs(observed_sum) / denom;
  // Permuted statistics that equal the observed one up to rounding count as hits.
  const double threshold = observed - 1e-12 * std::max(1.0, observed);

  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t it = 0; it < iterations; ++it) {
    double s = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 64 == 0) bits = rng();
      s += (bits & 1u) ? -diff[i] : diff[i];
      bits >>= 1;
    }
    if (std::abs(s) / denom >= threshold) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(iterations + 1);
}

json to_json(const EvalResult& r) {
  json docs = json::array();
  for (const auto& d : r.documents) {
    json entry = {{"id", d.id}, {"score", d.score}, {"selected", d.selected}};
    if (!d.group.empty()) entry["group"] = d.group;
    docs.push_back(std::move(entry));
  }
  json sections = json::object();
  for (std::size_t c = 0; c < kNumSectionClasses; ++c)
    sections[std::string(section_class_name(static_cast<SectionClass>(c)))] = r.section_distribution[c];
  json skipped = json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"id", s.id}, {"reason", s.reason}});
  json out = {{"mean_rouge_l_f", r.mean},
              {"n_documents", r.documents.size()},
              {"section_distribution", std::move(sections)},
              {"avg_selected_length", r.avg_selected_length},
              {"selected_count", r.selected_count},
              {"documents", std::move(docs)},
              {"skipped", std::move(skipped)}};
  if (!r.group_means.empty()) out["group_means"] = r.group_means;
  return out;
}

std::string scores_csv(const EvalResult& r) {
  std::ostringstream out;
  out << "id,score\n";
  out << std::setprecision(17);
  for (const auto& d : r.documents) out << d.id << ',' << d.score << '\n';
  return out.str();
}

std::vector<std::pair<std::string, double>> parse_scores_csv(std::istream& in, const std::string& source_name) {
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == "id,score") continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw Error(source_name + ":" + std::to_string(line_no) + ": expected id,score");
    try {
      std::size_t used = 0;
      const std::string num = line.substr(comma + 1);
      const double v = std::stod(num, &used);
      if (used != num.size()) throw std::invalid_argument(num);
      out.emplace_back(line.substr(0, comma), v);
    } catch (const std::exception&) {
      throw Error(source_name + ":" + std::to_string(line_no) + ": bad score");
    }
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> pair_scores(
    std::span<const std::pair<std::string, double>> a, std::span<const std::pair<std::string, double>> b) {
  std::unordered_map<std::string, double> by_id;
  for (const auto& [id, v] : b) by_id.emplace(id, v);
  if (by_id.size() != a.size()) throw Error("score files cover different document sets");
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const auto& [id, v] : a) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("document \"" + id + "\" missing from the second score file");
    out.first.push_back(v);
    out.second.push_back(it->second);
  }
  return out;
}

}  // namespace seqsum
