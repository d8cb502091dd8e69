// Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seqsum/checkpoint.hpp"
#include "seqsum/cli.hpp"
#include "seqsum/evaluation.hpp"
#include "seqsum/optim.hpp"
#include "seqsum/oracle.hpp"
#include "seqsum/rouge.hpp"
#include "seqsum/training.hpp"
#include "synthetic.hpp"

namespace fs = std::filesystem;
using namespace seqsum;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

// -- Independent reference implementations ----------------------------------

// Full-table LCS, kept separate from the library's rolling-row version.
std::size_t table_lcs(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t[a.size()][b.size()];
}

std::vector<int> random_list(Rng& rng, std::size_t min_len, std::size_t max_len, int alphabet) {
  const std::size_t len = min_len + static_cast<std::size_t>(rng() % (max_len - min_len + 1));
  std::vector<int> out(len);
  for (auto& x : out) x = static_cast<int>(rng() % static_cast<std::uint64_t>(alphabet));
  return out;
}

// Probabilities that rank sentences in the order the oracle selected them.
std::vector<double> oracle_ranking(const LabeledDocument& l) {
  std::vector<double> p(l.doc.sentences.size(), 0.0);
  for (std::size_t r = 0; r < l.trace.size(); ++r) p[l.trace[r].index] = 1.0 - 1e-3 * static_cast<double>(r);
  return p;
}

std::vector<Document> plain(std::span<const LabeledDocument> docs) {
  std::vector<Document> out;
  for (const auto& d : docs) out.push_back(d.doc);
  return out;
}

SummaryModel fresh_model(const ExtractorConfig& c, std::span<const LabeledDocument> train_docs, std::uint64_t seed) {
  const auto docs = plain(train_docs);
  return build_model(c, build_vocabulary(docs), build_asjc_vocabulary(docs), seed);
}

// -- Criteria ---------------------------------------------------------------

Outcome rouge_equivalence() {
  Rng rng(1);
  std::size_t lcs_mismatch = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = random_list(rng, 0, 8, 4);
    const auto b = random_list(rng, 1, 8, 4);
    const std::size_t enumerated = testing::brute_force_lcs(a, b);
    if (lcs_length<int>(a, b) != enumerated || table_lcs(a, b) != enumerated) ++lcs_mismatch;

    const double l = static_cast<double>(table_lcs(a, b));
    const double p = a.empty() ? 0.0 : l / static_cast<double>(a.size());
    const double r = l / static_cast<double>(b.size());
    const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    const auto s = rouge_l_sentence<int>(a, b);
    worst = std::max({worst, std::abs(s.precision - p), std::abs(s.recall - r), std::abs(s.f1 - f)});
  }
  return {lcs_mismatch == 0 && worst <= 1e-12,
          "1000 pairs, lcs mismatches " + std::to_string(lcs_mismatch) + ", max P/R/F deviation " +
              std::to_string(worst)};
}

Outcome greedy_oracle() {
  testing::RandomCorpusOptions o;
  o.documents = 200;
  o.min_sentences = 1;
  o.max_sentences = 12;
  o.sentence_length = 6;
  o.vocabulary = 8;
  o.seed = 2;
  const auto docs = testing::random_corpus(o);
  std::size_t wrong_first = 0, non_increasing = 0;
  OracleOptions stop;
  stop.stop_on_no_gain = true;
  for (const auto& d : docs) {
    std::size_t best = 0;
    double best_f = -1.0;
    for (std::size_t i = 0; i < d.sentences.size(); ++i) {
      const std::size_t one[] = {i};
      const double f = oracle_metric_score(d, one);
      if (f > best_f) {
        best_f = f;
        best = i;
      }
    }
    const auto l = greedy_label(d);
    if (l.trace.empty() || l.trace.front().index != best) ++wrong_first;
    const auto s = greedy_label(d, stop);
    for (std::size_t i = 1; i < s.trace.size(); ++i)
      if (!(s.trace[i].score > s.trace[i - 1].score)) {
        ++non_increasing;
        break;
      }
  }
  return {wrong_first == 0 && non_increasing == 0,
          "200 docs, first-pick disagreements " + std::to_string(wrong_first) + ", non-increasing traces " +
              std::to_string(non_increasing)};
}

// Elements whose relative error at the default step reaches 1e-4, and how many of
// them agree with a central difference at a smaller or a larger step.
struct Offenders {
  int count = 0;
  int explained = 0;
  long elements = 0;
};

Offenders classify_offenders(const std::function<Var(Graph&)>& f, std::span<Parameter* const> params) {
  auto evaluate = [&f]() {
    Graph g;
    return f(g).scalar();
  };
  for (Parameter* p : params) p->grad.setZero(p->value.rows(), p->value.cols());
  {
    Graph g;
    g.backward(f(g));
  }
  auto rel_at = [&](double& x, double analytic, double eps) {
    const double saved = x;
    x = saved + eps;
    const double up = evaluate();
    x = saved - eps;
    const double down = evaluate();
    x = saved;
    const double numeric = (up - down) / (2.0 * eps);
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
  };
  Offenders out;
  for (Parameter* p : params) {
    for (Eigen::Index k = 0; k < p->value.size(); ++k) {
      ++out.elements;
      double& x = p->value.data()[k];
      const double analytic = p->grad.data()[k];
      if (rel_at(x, analytic, 1e-4) < 1e-4) continue;
      ++out.count;
      if (rel_at(x, analytic, 1e-6) < 1e-4 || rel_at(x, analytic, 1e-3) < 1e-4) ++out.explained;
    }
  }
  for (Parameter* p : params) p->grad.setZero();
  return out;
}

Outcome gradient_checks() {
  struct Case {
    const char* name;
    EncoderKind encoder;
    ExtractorKind extractor;
    bool sf;
    bool df;
  };
  const Case cases[] = {
      {"mean", EncoderKind::kMean, ExtractorKind::kSequence, false, false},
      {"cnn", EncoderKind::kCnn, ExtractorKind::kSequence, false, false},
      {"rnn", EncoderKind::kRnn, ExtractorKind::kSequence, false, false},
      {"fusion", EncoderKind::kCnn, ExtractorKind::kSequence, true, false},
      {"docfeatures", EncoderKind::kRnn, ExtractorKind::kSequence, true, true},
      {"baseline-mean", EncoderKind::kMean, ExtractorKind::kIndependent, false, false},
      {"baseline-cnn", EncoderKind::kCnn, ExtractorKind::kIndependent, true, false},
      {"baseline-rnn", EncoderKind::kRnn, ExtractorKind::kIndependent, false, false},
  };
  std::map<std::string, double> worst;
  Offenders offenders;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    testing::RandomCorpusOptions o;
    o.documents = 2;
    o.min_sentences = 3;
    o.max_sentences = 5;
    o.sentence_length = 5;
    o.vocabulary = 12;
    o.seed = 100 + seed;
    const auto docs = testing::random_corpus(o);
    const Document& d = docs[0];
    std::vector<int> labels(d.sentences.size(), 0);
    labels[seed % labels.size()] = 1;
    for (const auto& c : cases) {
      auto config = testing::small_config(c.encoder, c.extractor, c.sf, c.df);
      config.init_range = 0.5;
      auto model = build_model(config, build_vocabulary(docs), build_asjc_vocabulary(docs), seed);
      const ClassWeights w{1.0, 0.7};
      auto f = [&](Graph& g) { return doc_loss(sentence_probabilities(g, model, d), labels, w); };
      const auto params = model.params.trainable();
      const double e = grad_check(f, params);
      worst[c.name] = std::max(worst[c.name], e);
      if (e >= 1e-4) {
        const Offenders o = classify_offenders(f, params);
        offenders.count += o.count;
        offenders.explained += o.explained;
        offenders.elements += o.elements;
      }
    }
    // doc_loss on its own, with probabilities as the only parameter.
    Parameter probs{"p", Matrix(4, 1), Matrix::Zero(4, 1), true};
    Rng rng(seed);
    for (Eigen::Index i = 0; i < 4; ++i) probs.value(i, 0) = uniform(rng, 0.05, 0.95);
    const std::vector<int> y = {1, 0, 0, 1};
    Parameter* p = &probs;
    auto loss = [&](Graph& g) { return doc_loss(g.parameter(probs), y, ClassWeights{1.0, 0.5}); };
    worst["doc_loss"] = std::max(worst["doc_loss"], grad_check(loss, std::span<Parameter* const>(&p, 1)));
  }
  double overall = 0.0;
  std::string detail = "10 seeds, max relative error:";
  for (const auto& [name, e] : worst) {
    overall = std::max(overall, e);
    std::ostringstream s;
    s.precision(2);
    s << std::scientific << e;
    detail += " " + name + "=" + s.str();
  }
  if (offenders.count > 0) {
    detail += "; " + std::to_string(offenders.count) + " of " + std::to_string(offenders.elements) +
              " elements in failing checks reach 1e-4, " + std::to_string(offenders.explained) +
              " of them agree with a central difference at step 1e-6 or 1e-3";
  }
  return {overall < 1e-4, detail};
}

// Overfit sanity on 20 marker documents with the default training settings.
Outcome overfit() {
  const auto docs = testing::marker_corpus(20, 10, 8, 50, 4, 4, "overfit");
  OracleOptions stop;
  stop.stop_on_no_gain = true;
  const auto labeled = label_corpus(docs, stop).labeled;

  TrainConfig tc;
  tc.max_epochs = 200;
  tc.patience = 20;
  tc.seed = 0;
  auto result = train(fresh_model(ExtractorConfig{}, labeled, 0), labeled, labeled, tc);

  const double accuracy = label_accuracy(result.model, labeled);
  const double model_rouge = rouge_l_f_at_k(result.model, docs).mean;
  std::vector<std::vector<double>> oracle_probs;
  for (const auto& l : labeled) oracle_probs.push_back(oracle_ranking(l));
  const double oracle_rouge = evaluate_probabilities(docs, oracle_probs).mean;
  const bool pass = accuracy >= 0.95 && model_rouge >= oracle_rouge - 0.02;
  return {pass, "accuracy " + fmt(accuracy) + ", rouge-l-f@4 " + fmt(model_rouge) + " vs oracle " +
                    fmt(oracle_rouge) + ", best epoch " + std::to_string(result.report.best_epoch) + " of " +
                    std::to_string(result.report.epochs.size())};
}

// Corpus where a sentence is salient iff the one before it carries the marker.
struct ContextCorpus {
  std::vector<Document> train_docs, val_docs;
  std::vector<LabeledDocument> train_labeled;
};

const ContextCorpus& context_corpus() {
  static const ContextCorpus corpus = [] {
    ContextCorpus c;
    c.train_docs = testing::preceding_marker_corpus(150, 12, 8, 50, 2, 5, "ctx-train");
    c.val_docs = testing::preceding_marker_corpus(60, 12, 8, 50, 2, 6, "ctx-val");
    OracleOptions stop;
    stop.stop_on_no_gain = true;
    c.train_labeled = label_corpus(c.train_docs, stop).labeled;
    return c;
  }();
  return corpus;
}

TrainConfig context_train_config() {
  TrainConfig tc;
  tc.max_epochs = 50;
  tc.patience = 5;
  tc.seed = 0;
  return tc;
}

std::vector<LabeledDocument> context_validation() {
  OracleOptions stop;
  stop.stop_on_no_gain = true;
  return label_corpus(context_corpus().val_docs, stop).labeled;
}

const EvalResult& sequence_result() {
  static const EvalResult r = [] {
    const auto& c = context_corpus();
    const auto val = context_validation();
    const auto model = train(fresh_model(ExtractorConfig{}, c.train_labeled, 0), c.train_labeled, val,
                             context_train_config())
                           .model;
    return rouge_l_f_at_k(model, c.val_docs);
  }();
  return r;
}

std::vector<double> scores_of(const EvalResult& r) {
  std::vector<double> out;
  for (const auto& d : r.documents) out.push_back(d.score);
  return out;
}

Outcome sequence_vs_baseline() {
  const auto& c = context_corpus();
  const auto val = context_validation();
  ExtractorConfig baseline_config;
  baseline_config.extractor_kind = ExtractorKind::kIndependent;
  const auto baseline = train(fresh_model(baseline_config, c.train_labeled, 0), c.train_labeled, val,
                              context_train_config())
                            .model;
  const auto base = rouge_l_f_at_k(baseline, c.val_docs);
  const auto& seq = sequence_result();
  const double p = approx_randomization(scores_of(seq), scores_of(base), 10000, 0);
  const double gap = seq.mean - base.mean;
  return {gap >= 0.02 && p < 0.05, "sequence " + fmt(seq.mean) + " vs baseline " + fmt(base.mean) + " (gap " +
                                       fmt(100 * gap, 2) + " points), p = " + fmt(p)};
}

Outcome shuffle_ablation() {
  const auto& c = context_corpus();
  const auto val = context_validation();
  auto tc = context_train_config();
  tc.shuffle_train_sentences = true;
  const auto shuffled_model =
      train(fresh_model(ExtractorConfig{}, c.train_labeled, 0), c.train_labeled, val, tc).model;
  const auto shuffled = rouge_l_f_at_k(shuffled_model, c.val_docs);
  const auto& ordered = sequence_result();
  const double p = approx_randomization(scores_of(ordered), scores_of(shuffled), 10000, 0);
  return {shuffled.mean < ordered.mean && p < 0.05,
          "unshuffled " + fmt(ordered.mean) + " vs shuffled " + fmt(shuffled.mean) + ", p = " + fmt(p)};
}

Outcome loss_arithmetic() {
  const double loss = doc_loss(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 0}, ClassWeights{1.0, 0.5});
  const bool loss_ok = std::abs(loss - 2.5 * std::log(2.0)) <= 1e-9;
  std::vector<int> labels(100, 0);
  std::fill(labels.begin(), labels.begin() + 10, 1);
  const auto w = class_weights(labels, WeightMode::kPaper);
  const bool weights_ok = w.negative == 1.0 && w.positive == 10.0 / 90.0;
  std::vector<int> half = {1, 0, 0, 0};
  const auto w2 = class_weights(half, WeightMode::kPaper);
  const bool paper_literal = w2.positive == 1.0 / 3.0;
  return {loss_ok && weights_ok && paper_literal, "doc_loss " + fmt(loss, 12) + " (2.5 ln 2 = " +
                                                      fmt(2.5 * std::log(2.0), 12) + "), weights (" +
                                                      fmt(w.negative) + ", " + fmt(w.positive) + ")"};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "seqsum_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  auto write_docs = [&](const std::string& name, const std::vector<Document>& docs) {
    std::ostringstream out;
    write_corpus(out, docs);
    write_file(root / name, out.str());
    return root / name;
  };
  const auto train_corpus = write_docs("train.jsonl", testing::marker_corpus(8, 14, 6, 40, 3, 7, "t"));
  const auto val_corpus = write_docs("val.jsonl", testing::marker_corpus(4, 14, 6, 40, 3, 8, "v"));

  std::ostringstream err;
  bool ok = true;
  std::vector<std::string> differing;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    ok &= cmd_label({train_corpus, dir / "labels.jsonl", 10, false, "rouge_l_f", 3, 2}, err) == 0;
    TrainArgs t;
    t.corpus = train_corpus;
    t.labels = dir / "labels.jsonl";
    t.val_corpus = val_corpus;
    t.out_dir = dir / "model";
    t.overrides = {{"embed_dim", 16}, {"encoder_out", 16}, {"cnn_filters", 4}, {"extractor_hidden", 8},
                   {"mlp_hidden", 8},  {"max_epochs", 3},  {"patience", 2},   {"learning_rate", 0.01},
                   {"shuffle_train_sentences", true}};
    t.seed = 3;
    ok &= cmd_train(t, err) == 0;
    EvaluateArgs e;
    e.checkpoint = dir / "model" / "model.ckpt";
    e.corpus = val_corpus;
    e.out = dir / "eval.json";
    e.seed = 3;
    e.jobs = 2;
    ok &= cmd_evaluate(e, err) == 0;
  }
  for (const char* file : {"labels.jsonl", "model/model.ckpt", "model/train_report.json", "eval.json",
                           "eval.json.scores.csv"}) {
    if (!fs::exists(root / "a" / file) || read_file(root / "a" / file) != read_file(root / "b" / file))
      differing.push_back(file);
  }
  fs::remove_all(root);
  std::string detail = ok ? "label/train/evaluate reruns" : "command failed: " + err.str();
  detail += differing.empty() ? ", all outputs byte-identical" : ", differing:";
  for (const auto& f : differing) detail += " " + f;
  return {ok && differing.empty(), detail};
}

Outcome calibration() {
  const std::vector<double> same = {0.3, 0.1, 0.7, 0.25, 0.9};
  const double p_same = approx_randomization(same, same, 10000, 0);
  std::size_t rejections = 0;
  const std::size_t reps = 100;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    Rng rng(1000 + rep);
    std::vector<double> a(50), b(50);
    for (auto& v : a) v = uniform01(rng);
    for (auto& v : b) v = uniform01(rng);
    if (approx_randomization(a, b, 10000, rep) < 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / static_cast<double>(reps);
  return {p_same == 1.0 && std::abs(rate - 0.05) <= 0.03,
          "identical p = " + fmt(p_same) + ", null rejection rate " + fmt(rate, 2) + " over 100 repetitions"};
}

Outcome throughput() {
  testing::RandomCorpusOptions o;
  o.min_sentences = 150;
  o.max_sentences = 150;
  o.sentence_length = 25;
  o.vocabulary = 500;
  o.highlights = 4;
  o.documents = 50;
  double seconds = 0.0;
  std::size_t labeled = 0;
  OracleOptions opts;
  opts.cap = 10;
  for (std::uint64_t batch = 0; batch < 20; ++batch) {
    o.seed = 10 + batch;
    const auto docs = testing::random_corpus(o);
    const auto start = std::chrono::steady_clock::now();
    labeled += label_corpus(docs, opts, 1).labeled.size();
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return {labeled == 1000 && seconds < 300.0,
          std::to_string(labeled) + " documents labelled in " + fmt(seconds, 1) + " s single-threaded"};
}

struct Criterion {
  int number;
  const char* name;
  double limit_seconds;  // 0 when the criterion has no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "ROUGE oracle equivalence", 10, rouge_equivalence},
      {2, "greedy oracle vs brute force", 30, greedy_oracle},
      {3, "gradient checks", 120, gradient_checks},
      {4, "overfit sanity", 600, overfit},
      {5, "sequence extractor beats independent baseline", 900, sequence_vs_baseline},
      {6, "sentence-shuffle ablation", 900, shuffle_ablation},
      {7, "loss arithmetic", 0, loss_arithmetic},
      {8, "determinism", 0, determinism},
      {9, "significance-test calibration", 60, calibration},
      {10, "oracle labelling throughput", 0, throughput},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.contains(c.number)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_seconds > 0 && elapsed >= c.limit_seconds) {
      o.pass = false;
      o.detail += ", over the " + fmt(c.limit_seconds, 0) + " s limit";
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.number << " (" << c.name << "): " << o.detail
              << " [" << fmt(elapsed, 1) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
