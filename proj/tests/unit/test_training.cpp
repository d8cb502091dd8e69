#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "seqsum/training.hpp"
#include "synthetic.hpp"

namespace seqsum {
namespace {

std::vector<LabeledDocument> marker_split(std::size_t docs, std::uint64_t seed, const std::string& prefix) {
  std::vector<LabeledDocument> out;
  for (auto& d : testing::marker_corpus(docs, 8, 6, 50, 2, seed, prefix)) {
    LabeledDocument l;
    l.labels = testing::salient_flags(d);
    l.doc = std::move(d);
    out.push_back(std::move(l));
  }
  return out;
}

SummaryModel model_for(const ExtractorConfig& c, std::span<const LabeledDocument> docs, std::uint64_t seed) {
  std::vector<Document> plain;
  for (const auto& l : docs) plain.push_back(l.doc);
  return build_model(c, build_vocabulary(plain), build_asjc_vocabulary(plain), seed);
}

TEST(ClassWeights, Modes) {
  std::vector<int> labels(100, 0);
  std::fill(labels.begin(), labels.begin() + 10, 1);
  const auto paper = class_weights(labels, WeightMode::kPaper);
  EXPECT_DOUBLE_EQ(paper.negative, 1.0);
  EXPECT_DOUBLE_EQ(paper.positive, 1.0 / 9.0);
  const auto inv = class_weights(labels, WeightMode::kInverseFrequency);
  EXPECT_DOUBLE_EQ(inv.negative, 1.0);
  EXPECT_DOUBLE_EQ(inv.positive, 9.0);
  const std::vector<int> even = {0, 1, 1, 0};
  for (WeightMode m : {WeightMode::kPaper, WeightMode::kInverseFrequency}) {
    EXPECT_DOUBLE_EQ(class_weights(even, m).positive, 1.0);
    EXPECT_DOUBLE_EQ(class_weights(even, m).negative, 1.0);
  }
}

TEST(ClassWeights, MissingClassIsAnError) {
  EXPECT_THROW(class_weights(std::vector<int>{0, 0, 0}, WeightMode::kPaper), Error);
  EXPECT_THROW(class_weights(std::vector<int>{1, 1}, WeightMode::kInverseFrequency), Error);
  EXPECT_THROW(class_weights(std::vector<int>{}, WeightMode::kPaper), Error);
}

TEST(ClassWeights, CountedOverWholeSplit) {
  auto docs = marker_split(3, 1, "d");
  std::vector<int> all;
  for (const auto& d : docs) all.insert(all.end(), d.labels.begin(), d.labels.end());
  const auto a = class_weights(docs, WeightMode::kPaper);
  const auto b = class_weights(all, WeightMode::kPaper);
  EXPECT_EQ(a.positive, b.positive);
  EXPECT_DOUBLE_EQ(a.positive, 6.0 / 18.0);
}

TEST(WeightMode, Names) {
  EXPECT_EQ(parse_weight_mode("paper"), WeightMode::kPaper);
  EXPECT_EQ(parse_weight_mode("inverse_frequency"), WeightMode::kInverseFrequency);
  EXPECT_EQ(to_string(WeightMode::kInverseFrequency), "inverse_frequency");
  EXPECT_THROW(parse_weight_mode("balanced"), Error);
}

TEST(DocLoss, Examples) {
  EXPECT_NEAR(doc_loss(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{1, 0, 0}, ClassWeights{1.0, 0.5}),
              2.5 * std::log(2.0), 1e-12);
  EXPECT_NEAR(doc_loss(std::vector<double>{0.25}, std::vector<int>{1}, ClassWeights{}), std::log(4.0), 1e-12);
  EXPECT_LT(doc_loss(std::vector<double>{1.0 - 1e-15, 1e-15}, std::vector<int>{1, 0}, ClassWeights{3.0, 7.0}), 1e-10);
}

TEST(DocLoss, Errors) {
  EXPECT_THROW(doc_loss(std::vector<double>{0.5}, std::vector<int>{1, 0}, ClassWeights{}), Error);
  EXPECT_THROW(doc_loss(std::vector<double>{0.5}, std::vector<int>{2}, ClassWeights{}), Error);
}

TEST(DocLoss, UnitWeightsEqualCrossEntropy) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(1 + rng() % 12);
    std::vector<int> y(p.size());
    double ce = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = uniform(rng, 0.01, 0.99);
      y[i] = static_cast<int>(rng() & 1);
      ce -= y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1.0 - p[i]);
    }
    EXPECT_NEAR(doc_loss(p, y, ClassWeights{}), ce, 1e-12);
  }
}

TEST(DocLoss, GraphFormMatchesValueAndHandGradient) {
  const std::vector<double> p = {0.2, 0.7, 0.9};
  const std::vector<int> y = {1, 0, 1};
  const ClassWeights w{1.5, 0.5};
  Graph g;
  Matrix m(3, 1);
  m << p[0], p[1], p[2];
  Var pv = g.variable(m);
  Var loss = doc_loss(pv, y, w);
  EXPECT_NEAR(loss.scalar(), doc_loss(p, y, w), 1e-14);
  g.backward(loss);
  EXPECT_NEAR(pv.grad()(0, 0), -0.5 / 0.2, 1e-12);
  EXPECT_NEAR(pv.grad()(1, 0), 1.5 / 0.3, 1e-12);
  EXPECT_NEAR(pv.grad()(2, 0), -0.5 / 0.9, 1e-12);
}

TEST(DocLoss, ClampedProbabilitiesStayFinite) {
  Graph g;
  Var pv = g.variable(Matrix::Zero(1, 1));
  Var loss = doc_loss(pv, std::vector<int>{1}, ClassWeights{});
  EXPECT_NEAR(loss.scalar(), -std::log(1e-12), 1e-9);
  g.backward(loss);
  EXPECT_EQ(pv.grad()(0, 0), 0.0);
}

TEST(EarlyStopping, StopsAfterPatience) {
  EarlyStopping es(5);
  const double losses[] = {3, 2, 2, 2, 2, 2, 2};
  std::size_t stopped_at = 0;
  for (std::size_t e = 0; e < std::size(losses); ++e) {
    es.observe(losses[e]);
    if (es.should_stop()) {
      stopped_at = e + 1;
      break;
    }
  }
  EXPECT_EQ(stopped_at, 7u);
  EXPECT_EQ(es.best_epoch(), 2u);
  EXPECT_EQ(es.best_loss(), 2.0);
}

TEST(EarlyStopping, ImprovementResetsCounter) {
  EarlyStopping es(2);
  EXPECT_TRUE(es.observe(5));
  EXPECT_FALSE(es.observe(6));
  EXPECT_TRUE(es.observe(4));
  EXPECT_FALSE(es.should_stop());
  EXPECT_FALSE(es.observe(4));
  EXPECT_FALSE(es.observe(4.5));
  EXPECT_TRUE(es.should_stop());
  EXPECT_EQ(es.best_epoch(), 3u);
}

TEST(ShuffleSentences, KeepsLabelsAttached) {
  const Document d = testing::make_document(
      "d", {"alpha beta", "gamma delta", "epsilon zeta", "eta theta", "iota kappa", "lambda mu"},
      {"gamma delta", "iota kappa"});
  const LabeledDocument original = greedy_label(d, OracleOptions{3, true});
  LabeledDocument a = original, b = original;
  Rng r1(9), r2(9);
  shuffle_document_sentences(a, r1);
  shuffle_document_sentences(b, r2);
  EXPECT_EQ(a.doc, b.doc);
  EXPECT_EQ(a.labels, b.labels);

  std::vector<std::string> before, after;
  for (const auto& s : original.doc.sentences) before.push_back(detokenize(s.tokens));
  for (const auto& s : a.doc.sentences) after.push_back(detokenize(s.tokens));
  EXPECT_NE(before, after);
  EXPECT_TRUE(std::is_permutation(before.begin(), before.end(), after.begin()));

  for (std::size_t i = 0; i < a.doc.sentences.size(); ++i) {
    EXPECT_EQ(a.doc.sentences[i].index, i);
    const auto it = std::find(before.begin(), before.end(), after[i]);
    EXPECT_EQ(a.labels[i], original.labels[static_cast<std::size_t>(it - before.begin())]);
  }
  ASSERT_EQ(a.trace.size(), original.trace.size());
  for (std::size_t t = 0; t < a.trace.size(); ++t) {
    EXPECT_EQ(a.doc.sentences[a.trace[t].index].tokens, original.doc.sentences[original.trace[t].index].tokens);
    EXPECT_EQ(a.trace[t].score, original.trace[t].score);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.patience = 50;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunConfig, FlatJsonRoundTrip) {
  RunConfig c;
  c.model = testing::small_config(EncoderKind::kRnn, ExtractorKind::kSequence, true, true);
  c.train.learning_rate = 3e-3;
  c.train.weight_mode = WeightMode::kInverseFrequency;
  c.train.shuffle_train_sentences = true;
  const auto back = parse_run_config(to_json(c));
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(RunConfig, UnknownKeyAndWrongTypeAreNamed) {
  auto message = [](const nlohmann::json& j) {
    try {
      parse_run_config(j);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message({{"hiden_size", 3}}).find("hiden_size"), std::string::npos);
  EXPECT_NE(message({{"dropout", "lots"}}).find("dropout"), std::string::npos);
  EXPECT_NE(message(nlohmann::json::array()).find("object"), std::string::npos);
}

TEST(RunConfig, FileOverridesBase) {
  const auto path = std::filesystem::temp_directory_path() / "seqsum_run_config.json";
  {
    std::ofstream out(path);
    out << R"({"encoder_kind": "mean", "max_epochs": 7})";
  }
  RunConfig base;
  base.train.patience = 3;
  const auto c = load_run_config(path, base);
  EXPECT_EQ(c.model.encoder_kind, EncoderKind::kMean);
  EXPECT_EQ(c.train.max_epochs, 7u);
  EXPECT_EQ(c.train.patience, 3u);
  std::filesystem::remove(path);
  EXPECT_THROW(load_run_config(path), Error);
}

// -- Training loop ------------------------------------------------------------

TEST(Train, LossDecreasesOnSeparableCorpus) {
  const auto train_docs = marker_split(20, 0, "t");
  const auto val_docs = marker_split(5, 1, "v");
  TrainConfig tc;
  tc.max_epochs = 5;
  tc.patience = 4;
  const auto result = train(model_for(ExtractorConfig{}, train_docs, 0), train_docs, val_docs, tc);
  ASSERT_EQ(result.report.epochs.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e)
    EXPECT_LT(result.report.epochs[e].train_loss, result.report.epochs[e - 1].train_loss) << "epoch " << e + 1;
}

TrainConfig quick_config() {
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.max_epochs = 4;
  tc.patience = 2;
  tc.batch_size = 3;
  tc.seed = 11;
  return tc;
}

TEST(Train, BitReproducible) {
  const auto train_docs = marker_split(6, 2, "t");
  const auto val_docs = marker_split(3, 3, "v");
  const auto model = model_for(testing::small_config(EncoderKind::kCnn, ExtractorKind::kSequence, true), train_docs, 4);
  auto tc = quick_config();
  tc.shuffle_train_sentences = true;
  const auto a = train(model, train_docs, val_docs, tc);
  const auto b = train(model, train_docs, val_docs, tc);
  EXPECT_EQ(to_json(a.report).dump(), to_json(b.report).dump());
  EXPECT_EQ(encode_model(a.model), encode_model(b.model));
}

TEST(Train, BestEpochHasLowestValidationLoss) {
  const auto train_docs = marker_split(6, 5, "t");
  const auto val_docs = marker_split(3, 6, "v");
  const auto model = model_for(testing::small_config(EncoderKind::kMean), train_docs, 7);
  auto tc = quick_config();
  tc.learning_rate = 5e-2;
  tc.max_epochs = 8;
  tc.patience = 3;
  const auto r = train(model, train_docs, val_docs, tc);
  ASSERT_GE(r.report.best_epoch, 1u);
  const double best = r.report.epochs[r.report.best_epoch - 1].validation_loss;
  EXPECT_EQ(best, r.report.best_validation_loss);
  for (std::size_t e = 0; e < r.report.best_epoch; ++e) EXPECT_LE(best, r.report.epochs[e].validation_loss);
  for (const auto& rec : r.report.epochs) EXPECT_LE(best, rec.validation_loss);
  EXPECT_NEAR(mean_loss(r.model, val_docs, r.report.weights), best, 1e-12);
}

TEST(Train, FrozenEmbeddingsUnchanged) {
  const auto train_docs = marker_split(5, 8, "t");
  const auto val_docs = marker_split(2, 9, "v");
  auto c = testing::small_config(EncoderKind::kRnn);
  c.embeddings_trainable = false;
  const auto model = model_for(c, train_docs, 10);
  const auto r = train(model, train_docs, val_docs, quick_config());
  EXPECT_EQ(r.model.params.at("embedding.words").value, model.params.at("embedding.words").value);
  EXPECT_NE(r.model.params.at("head.out.weight").value, model.params.at("head.out.weight").value);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  const auto train_docs = marker_split(4, 12, "t");
  const auto val_docs = marker_split(2, 13, "v");
  const auto model = model_for(testing::small_config(EncoderKind::kCnn), train_docs, 14);
  auto tc = quick_config();
  tc.learning_rate = 0.0;
  tc.max_epochs = 2;
  tc.patience = 1;
  const auto r = train(model, train_docs, val_docs, tc);
  EXPECT_EQ(encode_model(r.model), encode_model(model));
}

TEST(Train, WritesCheckpointOfBestModel) {
  const auto train_docs = marker_split(4, 15, "t");
  const auto val_docs = marker_split(2, 16, "v");
  const auto model = model_for(testing::small_config(EncoderKind::kMean), train_docs, 17);
  const auto path = std::filesystem::temp_directory_path() / "seqsum_train_test.ckpt";
  TrainOptions opts;
  opts.checkpoint_path = path;
  std::size_t callbacks = 0;
  opts.on_epoch = [&](const EpochRecord&) { ++callbacks; };
  const auto r = train(model, train_docs, val_docs, quick_config(), opts);
  EXPECT_EQ(callbacks, r.report.epochs.size());
  const auto loaded = load_model(path);
  EXPECT_EQ(encode_model(loaded), encode_model(r.model));
  std::filesystem::remove(path);
}

TEST(Train, DivergenceIsReported) {
  const auto train_docs = marker_split(3, 18, "t");
  const auto val_docs = marker_split(2, 19, "v");
  auto model = model_for(testing::small_config(EncoderKind::kMean), train_docs, 20);
  model.params.at("head.out.bias").value(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(model, train_docs, val_docs, quick_config());
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos);
  }
}

TEST(Train, InputErrors) {
  const auto docs = marker_split(2, 21, "t");
  const auto model = model_for(testing::small_config(EncoderKind::kMean), docs, 22);
  const std::vector<LabeledDocument> none;
  EXPECT_THROW(train(model, none, docs, quick_config()), Error);
  EXPECT_THROW(train(model, docs, none, quick_config()), Error);
  auto bad = docs;
  bad[0].labels.pop_back();
  EXPECT_THROW(train(model, bad, docs, quick_config()), Error);
  auto invalid = quick_config();
  invalid.patience = invalid.max_epochs;
  EXPECT_THROW(train(model, docs, docs, invalid), Error);
}

TEST(LabelAccuracy, Bounds) {
  const auto docs = marker_split(3, 23, "t");
  const auto model = model_for(testing::small_config(EncoderKind::kMean), docs, 24);
  const double acc = label_accuracy(model, docs);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

}  // namespace
}  // namespace seqsum
