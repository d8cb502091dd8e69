#include "seqsum/oracle.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <optional>
#include <unordered_map>

#include <json.hpp>

#include "seqsum/parallel.hpp"
#include "seqsum/rouge.hpp"

namespace seqsum {

namespace {

using rouge_detail::TokenId;
using nlohmann::json;

double metric_value(const RougeScore& s, OracleMetric metric) {
  return metric == OracleMetric::kRougeLF ? s.f1 : s.recall;
}

// Incremental union-LCS state for one document. Per-sentence LCS hit masks
// against each highlight are computed once; evaluating a candidate set costs
// O(total highlight length + sentence length).
class UnionLcsScorer {
 public:
  explicit UnionLcsScorer(const Document& doc) {
    rouge_detail::Interner<Token> interner;
    for (const auto& h : doc.highlights) {
      refs_.push_back(interner.ids(std::span<const Token>(h)));
      ref_len_ += refs_.back().size();
    }
    for (const auto& s : doc.sentences) sents_.push_back(interner.ids(std::span<const Token>(s.tokens)));
    TokenId vocab = 0;
    for (const auto& r : refs_)
      for (TokenId t : r) vocab = std::max(vocab, t + 1);
    for (const auto& s : sents_)
      for (TokenId t : s) vocab = std::max(vocab, t + 1);
    base_counts_.assign(static_cast<std::size_t>(vocab), 0);
    extra_counts_.assign(static_cast<std::size_t>(vocab), 0);
    used_.assign(static_cast<std::size_t>(vocab), 0);
    hits_.resize(sents_.size());
    for (std::size_t s = 0; s < sents_.size(); ++s)
      for (const auto& r : refs_) hits_[s].push_back(rouge_detail::lcs_ref_hits(sents_[s], r));
    selected_union_.reserve(refs_.size());
    for (const auto& r : refs_) selected_union_.emplace_back(r.size(), 0);
  }

  RougeScore score_with(std::size_t candidate) {
    for (TokenId t : sents_[candidate]) ++extra_counts_[static_cast<std::size_t>(t)];
    std::size_t matched = 0;
    for (std::size_t r = 0; r < refs_.size(); ++r) {
      const auto& ref = refs_[r];
      const auto& add = hits_[candidate][r];
      for (std::size_t i = 0; i < ref.size(); ++i) {
        if (!(selected_union_[r][i] | add[i])) continue;
        const auto t = static_cast<std::size_t>(ref[i]);
        if (used_[t] < base_counts_[t] + extra_counts_[t]) {
          ++used_[t];
          ++matched;
        }
      }
    }
    for (const auto& ref : refs_)
      for (TokenId t : ref) used_[static_cast<std::size_t>(t)] = 0;
    for (TokenId t : sents_[candidate]) extra_counts_[static_cast<std::size_t>(t)] = 0;
    const std::size_t cand_len = selected_len_ + sents_[candidate].size();
    const double m = static_cast<double>(matched);
    return make_rouge_score(cand_len ? m / static_cast<double>(cand_len) : 0.0,
                            ref_len_ ? m / static_cast<double>(ref_len_) : 0.0);
  }

  void select(std::size_t s) {
    for (std::size_t r = 0; r < refs_.size(); ++r)
      for (std::size_t i = 0; i < refs_[r].size(); ++i) selected_union_[r][i] |= hits_[s][r][i];
    for (TokenId t : sents_[s]) ++base_counts_[static_cast<std::size_t>(t)];
    selected_len_ += sents_[s].size();
  }

 private:
  std::vector<std::vector<TokenId>> refs_;
  std::vector<std::vector<TokenId>> sents_;
  std::vector<std::vector<std::vector<std::uint8_t>>> hits_;  // [sentence][ref][pos]
  std::vector<std::vector<std::uint8_t>> selected_union_;
  std::vector<std::int64_t> base_counts_, extra_counts_, used_;
  std::size_t ref_len_ = 0;
  std::size_t selected_len_ = 0;
};

void check_labelable(const Document& doc) {
  if (doc.highlights.empty()) throw Error("document \"" + doc.id + "\" has no highlights");
  for (const auto& h : doc.highlights)
    if (h.empty()) throw Error("document \"" + doc.id + "\" has an empty highlight");
  if (doc.sentences.empty()) throw Error("document \"" + doc.id + "\" has no sentences");
}

std::vector<std::vector<Token>> gather(const Document& doc, std::span<const std::size_t> idx) {
  std::vector<std::vector<Token>> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(doc.sentences.at(i).tokens);
  return out;
}

}  // namespace

double oracle_metric_score(const Document& doc, std::span<const std::size_t> selected,
                           OracleMetric metric) {
  check_labelable(doc);
  std::vector<std::size_t> ordered(selected.begin(), selected.end());
  std::sort(ordered.begin(), ordered.end());
  const auto cands = gather(doc, ordered);
  if (metric == OracleMetric::kRouge2R) return rouge_n_summary(cands, doc.highlights, 2).recall;
  return metric_value(rouge_l_summary(cands, doc.highlights), metric);
}

LabeledDocument greedy_label(const Document& doc, const OracleOptions& options) {
  check_labelable(doc);
  LabeledDocument out;
  out.doc = doc;
  out.labels.assign(doc.sentences.size(), 0);
  const std::size_t limit = std::min(options.cap, doc.sentences.size());

  std::optional<UnionLcsScorer> scorer;
  if (options.metric != OracleMetric::kRouge2R) scorer.emplace(doc);

  std::vector<std::size_t> selected;
  double current = 0.0;
  while (selected.size() < limit) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      if (out.labels[s]) continue;
      double value;
      if (scorer) {
        value = metric_value(scorer->score_with(s), options.metric);
      } else {
        auto trial = selected;
        trial.push_back(s);
        value = oracle_metric_score(doc, trial, options.metric);
      }
      if (value > best) {
        best = value;
        best_idx = s;
      }
    }
    if (options.stop_on_no_gain && !(best > current)) break;
    selected.push_back(best_idx);
    out.labels[best_idx] = 1;
    out.trace.push_back({best_idx, best});
    if (scorer) scorer->select(best_idx);
    current = best;
  }
  return out;
}

LabelCorpusResult label_corpus(std::span<const Document> docs, const OracleOptions& options,
                               unsigned jobs) {
  if (docs.empty()) throw Error("label_corpus: empty document list");
  std::vector<std::optional<LabeledDocument>> results(docs.size());
  std::vector<std::string> errors(docs.size());
  parallel_for(docs.size(), jobs, [&](std::size_t i) {
    try {
      results[i] = greedy_label(docs[i], options);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  LabelCorpusResult out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (results[i])
      out.labeled.push_back(std::move(*results[i]));
    else
      out.skipped.push_back({docs[i].id, errors[i]});
  }
  if (out.labeled.empty())
    throw Error("label_corpus: all " + std::to_string(docs.size()) + " documents failed (first: " +
                out.skipped.front().reason + ")");
  return out;
}

std::string serialize_labels(const LabeledDocument& labeled) {
  json trace = json::array();
  for (const auto& step : labeled.trace) trace.push_back(json::array({step.index, step.score}));
  json obj = {{"id", labeled.doc.id}, {"labels", labeled.labels}, {"trace", std::move(trace)}};
  return obj.dump();
}

std::vector<LabelRecord> parse_labels(std::istream& in, const std::string& source_name) {
  std::vector<LabelRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
    try {
      const json obj = json::parse(line);
      LabelRecord rec;
      rec.id = obj.at("id").get<std::string>();
      rec.labels = obj.at("labels").get<std::vector<int>>();
      for (int v : rec.labels)
        if (v != 0 && v != 1) throw Error(where + "labels must be 0 or 1");
      if (auto t = obj.find("trace"); t != obj.end())
        for (const auto& step : *t)
          rec.trace.push_back({step.at(0).get<std::size_t>(), step.at(1).get<double>()});
      out.push_back(std::move(rec));
    } catch (const json::exception& e) {
      throw Error(where + "malformed label record: " + e.what());
    }
  }
  return out;
}

std::vector<LabelRecord> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("labels not found: " + path);
  return parse_labels(in, path);
}

std::vector<LabeledDocument> attach_labels(std::span<const Document> docs,
                                           std::span<const LabelRecord> records) {
  std::unordered_map<std::string, const LabelRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::vector<LabeledDocument> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    auto it = by_id.find(d.id);
    if (it == by_id.end()) throw Error("no labels for document \"" + d.id + "\"");
    if (it->second->labels.size() != d.sentences.size())
      throw Error("document \"" + d.id + "\" has " + std::to_string(d.sentences.size()) +
                  " sentences but " + std::to_string(it->second->labels.size()) + " labels");
    out.push_back({d, it->second->labels, it->second->trace});
  }
  return out;
}

}  // namespace seqsum
