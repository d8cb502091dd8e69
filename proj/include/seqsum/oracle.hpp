#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seqsum/corpus.hpp"

namespace seqsum {

// Objective the greedy sampler maximises against the highlights.
enum class OracleMetric {
  kRougeLF,  // default
  kRougeLR,
  kRouge2R,
};

struct OracleOptions {
  std::size_t cap = 10;
  bool stop_on_no_gain = false;
  OracleMetric metric = OracleMetric::kRougeLF;
};

struct TraceStep {
  std::size_t index = 0;
  double score = 0.0;  // metric value of the selected set after adding `index`

  friend bool operator==(const TraceStep&, const TraceStep&) = default;
};

struct LabeledDocument {
  Document doc;
  std::vector<int> labels;
  std::vector<TraceStep> trace;
};

// Greedily adds the sentence that maximises the metric of (selected + s) against
// doc.highlights. Ties go to the lower index. Stops at min(cap, #sentences), or
// earlier with stop_on_no_gain once no candidate strictly improves the score.
LabeledDocument greedy_label(const Document& doc, const OracleOptions& options = {});

// Metric value of an arbitrary sentence subset, computed directly.
double oracle_metric_score(const Document& doc, std::span<const std::size_t> selected,
                           OracleMetric metric = OracleMetric::kRougeLF);

struct SkippedDocument {
  std::string id;
  std::string reason;
};

struct LabelCorpusResult {
  std::vector<LabeledDocument> labeled;
  std::vector<SkippedDocument> skipped;
};

// Order-preserving; failing documents are collected in `skipped`. Throws when
// the input is empty or every document fails.
LabelCorpusResult label_corpus(std::span<const Document> docs, const OracleOptions& options = {},
                               unsigned jobs = 1);

// {"id": ..., "labels": [...], "trace": [[idx, score], ...]}
std::string serialize_labels(const LabeledDocument& labeled);

struct LabelRecord {
  std::string id;
  std::vector<int> labels;
  std::vector<TraceStep> trace;
};

std::vector<LabelRecord> parse_labels(std::istream& in, const std::string& source_name = "<stream>");
std::vector<LabelRecord> load_labels(const std::string& path);

// Joins label records onto documents by id; every document must have a record
// whose length matches its sentence count.
std::vector<LabeledDocument> attach_labels(std::span<const Document> docs,
                                           std::span<const LabelRecord> records);

}  // namespace seqsum
