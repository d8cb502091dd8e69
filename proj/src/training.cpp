#include "seqsum/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "seqsum/evaluation.hpp"
#include "seqsum/optim.hpp"

namespace seqsum {

using nlohmann::json;

namespace {

constexpr double kProbFloor = 1e-12;

template <class T>
T get_typed(const std::string& key, const json& value) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error("config key \"" + key + "\" has the wrong type");
  }
}

const std::unordered_set<std::string_view>& train_keys() {
  static const std::unordered_set<std::string_view> keys = {
      "learning_rate", "dropout", "clip_norm",  "max_epochs", "patience",
      "seed",          "weight_mode", "shuffle_train_sentences", "batch_size",
  };
  return keys;
}

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

void check_labels(std::span<const int> labels) {
  for (int y : labels)
    if (y != 0 && y != 1) throw Error("labels must be 0 or 1, got " + std::to_string(y));
}

std::map<std::string, Matrix> snapshot(const SummaryModel& model) {
  std::map<std::string, Matrix> out;
  for (const Parameter* p : model.params.all()) out.emplace(p->name, p->value);
  return out;
}

void restore(SummaryModel& model, const std::map<std::string, Matrix>& values) {
  for (Parameter* p : model.params.all()) p->value = values.at(p->name);
}

std::vector<Document> documents_of(std::span<const LabeledDocument> docs) {
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.doc);
  return out;
}

}  // namespace

std::string_view to_string(WeightMode m) {
  return m == WeightMode::kPaper ? "paper" : "inverse_frequency";
}

WeightMode parse_weight_mode(std::string_view s) {
  if (s == "paper") return WeightMode::kPaper;
  if (s == "inverse_frequency") return WeightMode::kInverseFrequency;
  throw Error("unknown weight_mode \"" + std::string(s) + "\" (expected paper or inverse_frequency)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must be in [0, 1)");
  if (max_epochs == 0) throw Error("max_epochs must be >= 1");
  if (patience >= max_epochs)
    throw Error("patience (" + std::to_string(patience) + ") must be less than max_epochs (" +
                std::to_string(max_epochs) + ")");
  if (batch_size == 0) throw Error("batch_size must be >= 1");
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"dropout", c.dropout},
          {"clip_norm", c.clip_norm},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"weight_mode", std::string(to_string(c.weight_mode))},
          {"shuffle_train_sentences", c.shuffle_train_sentences},
          {"batch_size", c.batch_size}};
}

bool is_train_key(std::string_view key) { return train_keys().contains(key); }

void apply_train_key(TrainConfig& c, const std::string& key, const json& v) {
  if (key == "learning_rate") c.learning_rate = get_typed<double>(key, v);
  else if (key == "dropout") c.dropout = get_typed<double>(key, v);
  else if (key == "clip_norm") c.clip_norm = get_typed<double>(key, v);
  else if (key == "max_epochs") c.max_epochs = get_typed<std::size_t>(key, v);
  else if (key == "patience") c.patience = get_typed<std::size_t>(key, v);
  else if (key == "seed") c.seed = get_typed<std::uint64_t>(key, v);
  else if (key == "weight_mode") c.weight_mode = parse_weight_mode(get_typed<std::string>(key, v));
  else if (key == "shuffle_train_sentences") c.shuffle_train_sentences = get_typed<bool>(key, v);
  else if (key == "batch_size") c.batch_size = get_typed<std::size_t>(key, v);
  else throw Error("unknown config key \"" + key + "\"");
}

json to_json(const RunConfig& c) {
  json out = to_json(c.model);
  const json train = to_json(c.train);
  for (const auto& [k, v] : train.items()) out[k] = v;
  return out;
}

RunConfig parse_run_config(const json& object, RunConfig base) {
  if (!object.is_object()) throw Error("config must be a JSON object");
  for (const auto& [key, value] : object.items()) {
    if (is_extractor_key(key)) apply_extractor_key(base.model, key, value);
    else if (is_train_key(key)) apply_train_key(base.train, key, value);
    else throw Error("unknown config key \"" + key + "\"");
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("config not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j, std::move(base));
}

ClassWeights class_weights(std::span<const int> labels, WeightMode mode) {
  if (labels.empty()) throw Error("class_weights: no labels");
  check_labels(labels);
  const auto n1 = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const auto n0 = static_cast<double>(labels.size()) - n1;
  if (n0 == 0.0) throw Error("class_weights: no negative labels in the training split");
  if (n1 == 0.0) throw Error("class_weights: no positive labels in the training split");
  return {1.0, mode == WeightMode::kPaper ? n1 / n0 : n0 / n1};
}

ClassWeights class_weights(std::span<const LabeledDocument> docs, WeightMode mode) {
  std::vector<int> all;
  for (const auto& d : docs) all.insert(all.end(), d.labels.begin(), d.labels.end());
  return class_weights(all, mode);
}

double doc_loss(std::span<const double> probabilities, std::span<const int> labels, ClassWeights w) {
  if (probabilities.size() != labels.size())
    throw Error("doc_loss: " + std::to_string(probabilities.size()) + " probabilities for " +
                std::to_string(labels.size()) + " labels");
  check_labels(labels);
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = clamp_prob(probabilities[i]);
    loss -= labels[i] == 1 ? w.positive * std::log(p) : w.negative * std::log(1.0 - p);
  }
  return loss;
}

Var doc_loss(Var probabilities, std::span<const int> labels, ClassWeights w) {
  const Matrix& p = probabilities.value();
  if (p.cols() != 1 || static_cast<std::size_t>(p.rows()) != labels.size())
    throw ShapeError("doc_loss: probabilities " + shape_string(p) + " for " + std::to_string(labels.size()) +
                     " labels");
  check_labels(labels);
  double loss = 0.0;
  Matrix dp(p.rows(), 1);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double raw = p(i, 0);
    const double q = clamp_prob(raw);
    const bool clamped = q != raw;
    if (labels[static_cast<std::size_t>(i)] == 1) {
      loss -= w.positive * std::log(q);
      dp(i, 0) = clamped ? 0.0 : -w.positive / q;
    } else {
      loss -= w.negative * std::log(1.0 - q);
      dp(i, 0) = clamped ? 0.0 : w.negative / (1.0 - q);
    }
  }
  Matrix value(1, 1);
  value(0, 0) = loss;
  return probabilities.graph().record(std::move(value), {probabilities},
                                      [dp = std::move(dp), in = probabilities.id()](Graph& g, std::size_t self) {
                                        g.grad_accumulator(in) += g.grad(self)(0, 0) * dp;
                                      });
}

bool EarlyStopping::observe(double loss) {
  ++epoch_;
  if (best_epoch_ == 0 || loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

void shuffle_document_sentences(LabeledDocument& d, Rng& rng) {
  const std::size_t n = d.doc.sentences.size();
  if (d.labels.size() != n) throw Error("document \"" + d.doc.id + "\" has mismatched labels");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with our own draws so the permutation is library independent.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  std::vector<Sentence> sentences(n);
  std::vector<int> labels(n);
  std::vector<std::size_t> new_position(n);
  for (std::size_t pos = 0; pos < n; ++pos) {
    sentences[pos] = std::move(d.doc.sentences[order[pos]]);
    sentences[pos].index = pos;
    labels[pos] = d.labels[order[pos]];
    new_position[order[pos]] = pos;
  }
  for (auto& step : d.trace) step.index = new_position.at(step.index);
  d.doc.sentences = std::move(sentences);
  d.labels = std::move(labels);
}

json to_json(const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"validation_loss", e.validation_loss},
                      {"validation_rouge_l_f_at_4", e.validation_rouge},
                      {"grad_norm", e.grad_norm}});
  return {{"epochs", std::move(epochs)},
          {"best_epoch", r.best_epoch},
          {"best_validation_loss", r.best_validation_loss},
          {"stopped_early", r.stopped_early},
          {"class_weights", {r.weights.negative, r.weights.positive}},
          {"checkpoint_path", r.checkpoint_path}};
}

double mean_loss(const SummaryModel& model, std::span<const LabeledDocument> docs, ClassWeights weights) {
  if (docs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& d : docs) total += doc_loss(predict(model, d.doc), d.labels, weights);
  return total / static_cast<double>(docs.size());
}

double label_accuracy(const SummaryModel& model, std::span<const LabeledDocument> docs) {
  std::size_t correct = 0, total = 0;
  for (const auto& d : docs) {
    const auto probs = predict(model, d.doc);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      correct += (probs[i] >= 0.5) == (d.labels[i] == 1) ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(SummaryModel model, std::span<const LabeledDocument> train_docs,
                  std::span<const LabeledDocument> validation_docs, const TrainConfig& config,
                  const TrainOptions& options) {
  config.validate();
  model.config.validate();
  if (train_docs.empty()) throw Error("training split is empty");
  if (validation_docs.empty()) throw Error("validation split is empty");
  for (auto split : {train_docs, validation_docs})
    for (const auto& d : split)
      if (d.labels.size() != d.doc.sentences.size() || d.labels.empty())
        throw Error("document \"" + d.doc.id + "\" has no labels matching its sentences");

  Rng rng(config.seed);
  std::vector<LabeledDocument> docs(train_docs.begin(), train_docs.end());
  if (config.shuffle_train_sentences)
    for (auto& d : docs) shuffle_document_sentences(d, rng);

  const ClassWeights weights = class_weights(docs, config.weight_mode);
  const std::vector<Document> validation_plain = documents_of(validation_docs);

  AdamState adam;
  adam.learning_rate = config.learning_rate;
  adam.clip_norm = config.clip_norm;
  auto trainable = model.params.trainable();
  model.params.zero_grad();

  TrainResult result{{}, {}};
  result.report.weights = weights;
  EarlyStopping stopper(config.patience);
  std::map<std::string, Matrix> best = snapshot(model);
  ForwardOptions forward{config.dropout, &rng};

  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    double epoch_loss = 0.0;
    double norm_total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double batch_scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const LabeledDocument& d = docs[order[b]];
        Graph g;
        Var probs = sentence_probabilities(g, model, d.doc, forward);
        Var loss = doc_loss(probs, d.labels, weights);
        const double value = loss.scalar();
        if (!std::isfinite(value))
          throw TrainingDiverged("training diverged: non-finite loss on document \"" + d.doc.id + "\" in epoch " +
                                 std::to_string(epoch));
        epoch_loss += value;
        g.backward(scale(loss, batch_scale));
      }
      const double norm = clip_and_step(adam, trainable);
      if (!std::isfinite(norm))
        throw TrainingDiverged("training diverged: non-finite gradient norm in epoch " + std::to_string(epoch));
      norm_total += norm;
      ++steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(docs.size());
    rec.grad_norm = steps == 0 ? 0.0 : norm_total / static_cast<double>(steps);
    rec.validation_loss = mean_loss(model, validation_docs, weights);
    if (!std::isfinite(rec.validation_loss))
      throw TrainingDiverged("training diverged: non-finite validation loss in epoch " + std::to_string(epoch));
    rec.validation_rouge = rouge_l_f_at_k(model, validation_plain).mean;
    result.report.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (stopper.observe(rec.validation_loss)) best = snapshot(model);
    if (stopper.should_stop()) {
      result.report.stopped_early = epoch < config.max_epochs;
      break;
    }
  }

  restore(model, best);
  result.report.best_epoch = stopper.best_epoch();
  result.report.best_validation_loss = stopper.best_loss();
  if (options.checkpoint_path) {
    save_model(*options.checkpoint_path, model);
    result.report.checkpoint_path = options.checkpoint_path->string();
  }
  result.model = std::move(model);
  return result;
}

}  // namespace seqsum
