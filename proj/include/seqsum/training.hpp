#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqsum/model.hpp"
#include "seqsum/oracle.hpp"
#include "seqsum/tensor.hpp"

namespace seqsum {

enum class WeightMode {
  kPaper,             // w1 = N1 / N0
  kInverseFrequency,  // w1 = N0 / N1
};

std::string_view to_string(WeightMode m);
WeightMode parse_weight_mode(std::string_view s);

struct TrainConfig {
  double learning_rate = 1e-4;
  double dropout = 0.25;
  double clip_norm = 1.0;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  WeightMode weight_mode = WeightMode::kPaper;
  bool shuffle_train_sentences = false;
  std::size_t batch_size = 8;  // documents per optimizer step

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
void apply_train_key(TrainConfig& config, const std::string& key, const nlohmann::json& value);
bool is_train_key(std::string_view key);

// Model and training settings read from one flat JSON object.
struct RunConfig {
  ExtractorConfig model;
  TrainConfig train;
};

nlohmann::json to_json(const RunConfig& config);
// Unknown keys and wrongly typed values throw, naming the key.
RunConfig parse_run_config(const nlohmann::json& object, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
};

ClassWeights class_weights(std::span<const int> labels, WeightMode mode);
ClassWeights class_weights(std::span<const LabeledDocument> docs, WeightMode mode);

// -sum_i w(y_i) log p(y_i), probabilities clamped to [1e-12, 1 - 1e-12].
double doc_loss(std::span<const double> probabilities, std::span<const int> labels, ClassWeights weights);
// Differentiable form; `probabilities` is n x 1.
Var doc_loss(Var probabilities, std::span<const int> labels, ClassWeights weights);

// Tracks the best validation loss; a strictly lower loss resets the counter.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Returns true when the loss is a new best.
  bool observe(double validation_loss);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 before any epoch
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_loss_ = 0.0;
};

// Permutes the sentences of a labeled document, keeping labels, sections and
// trace indices attached to their sentences. Sentence::index is renumbered.
void shuffle_document_sentences(LabeledDocument& doc, Rng& rng);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;       // mean per-document loss over the epoch
  double validation_loss = 0.0;  // mean per-document loss, no dropout
  double validation_rouge = 0.0; // rouge-l-f@4
  double grad_norm = 0.0;        // mean pre-clip norm over steps
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0.0;
  bool stopped_early = false;
  ClassWeights weights;
  std::string checkpoint_path;
};

nlohmann::json to_json(const TrainReport& report);

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;  // best model is written here
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  SummaryModel model;  // parameters of the best epoch
  TrainReport report;
};

// Weighted NLL training with Adam and early stopping on validation loss.
TrainResult train(SummaryModel model, std::span<const LabeledDocument> train_docs,
                  std::span<const LabeledDocument> validation_docs, const TrainConfig& config,
                  const TrainOptions& options = {});

// Mean per-document loss without dropout.
double mean_loss(const SummaryModel& model, std::span<const LabeledDocument> docs, ClassWeights weights);

// Fraction of sentences whose thresholded probability (>= 0.5) matches the label.
double label_accuracy(const SummaryModel& model, std::span<const LabeledDocument> docs);

}  // namespace seqsum
