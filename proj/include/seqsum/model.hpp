#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "seqsum/corpus.hpp"
#include "seqsum/tensor.hpp"

namespace seqsum {

enum class EncoderKind { kMean, kCnn, kRnn };
enum class ExtractorKind {
  kSequence,     // bi-directional LSTM over the sentence sequence
  kIndependent,  // per-sentence classifier, no cross-sentence recurrence
};

std::string_view to_string(EncoderKind k);
std::string_view to_string(ExtractorKind k);
EncoderKind parse_encoder_kind(std::string_view s);
ExtractorKind parse_extractor_kind(std::string_view s);

struct ExtractorConfig {
  EncoderKind encoder_kind = EncoderKind::kCnn;
  ExtractorKind extractor_kind = ExtractorKind::kSequence;
  bool use_sentence_features = false;
  bool use_document_features = false;
  std::size_t embed_dim = 100;
  std::size_t encoder_out = 100;
  std::size_t cnn_filters = 25;
  std::vector<std::size_t> cnn_widths = {1, 2, 3, 4};
  // Per direction. 50 keeps the bi-directional encoding at 100; set 100 with
  // encoder_out 200 for the wider reading.
  std::size_t rnn_hidden = 50;
  std::size_t extractor_hidden = 128;
  std::size_t mlp_hidden = 50;
  std::size_t feature_proj_dim = 16;
  std::size_t feature_proj_layers = 1;
  std::size_t asjc_dim = 100;
  bool embeddings_trainable = true;
  std::uint64_t oov_seed = 0;
  double init_range = 0.1;

  // Throws naming the first inconsistent field.
  void validate() const;
  // Width of one row of the extractor input.
  std::size_t sentence_dim() const;
  std::size_t document_feature_dim() const { return asjc_dim + 2 * embed_dim; }

  friend bool operator==(const ExtractorConfig&, const ExtractorConfig&) = default;
};

nlohmann::json to_json(const ExtractorConfig& config);
// Reads known keys from a flat object; other keys are left to the caller.
void apply_extractor_key(ExtractorConfig& config, const std::string& key, const nlohmann::json& value);
bool is_extractor_key(std::string_view key);

class Vocabulary {
 public:
  static constexpr std::size_t kUnknown = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t add(const std::string& token);
  std::size_t lookup(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Word vocabulary over sentences, titles, abstracts and key phrases, in first
// occurrence order.
Vocabulary build_vocabulary(std::span<const Document> docs);
Vocabulary build_asjc_vocabulary(std::span<const Document> docs);

// GloVe-style text vectors: token followed by `dim` reals per line.
struct PretrainedEmbeddings {
  std::size_t dim = 0;
  std::unordered_map<std::string, RowVector> vectors;
};
PretrainedEmbeddings load_embeddings(const std::filesystem::path& path, std::size_t expected_dim);

struct SummaryModel {
  ExtractorConfig config;
  Vocabulary vocab;
  Vocabulary asjc_vocab;
  ParameterStore params;
};

// Parameters uniform(-init_range, init_range), LSTM forget-gate bias +1. Word
// rows come from `pretrained` when present; other rows are drawn from a stream
// keyed on (oov_seed, token) so they do not depend on vocabulary order.
SummaryModel build_model(const ExtractorConfig& config, Vocabulary vocab, Vocabulary asjc_vocab,
                         std::uint64_t seed, const PretrainedEmbeddings* pretrained = nullptr);

struct ForwardOptions {
  double dropout = 0.0;
  Rng* rng = nullptr;  // dropout is active only when both are set
};

// -- Sentence encoders ------------------------------------------------------

// L x d token embeddings; unknown tokens use the <unk> row.
Var embed_tokens(Graph& g, const SummaryModel& model, std::span<const Token> tokens);

Var encode_mean(Var embedded);

struct ConvBank {
  Var weight;  // (width*d) x filters
  Var bias;    // 1 x filters
  Eigen::Index width;
};
// Per bank: conv1d, relu, max over time; banks concatenated.
Var encode_cnn(Var embedded, std::span<const ConvBank> banks);

// Concatenated final states of a forward and a backward LSTM pass.
Var encode_rnn(Var embedded, const LstmWeights& forward, const LstmWeights& backward);

Var encode_sentence(Graph& g, const SummaryModel& model, std::span<const Token> tokens);

// -- Features ---------------------------------------------------------------

struct SentenceFeatures {
  std::size_t n_numbers = 0;
  std::size_t length = 0;
  std::array<double, kNumSectionClasses> section_onehot{};
  double title_overlap = 0.0;
  std::size_t keyphrase_overlap = 0;
  std::size_t abstract_overlap = 0;
};

inline constexpr std::size_t kSentenceFeatureWidth = 12;
inline constexpr double kCountFeatureScale = 0.01;

SentenceFeatures sentence_features(const Sentence& sentence, const Document& doc);
// (n_numbers, length, onehot x 7, title, keyphrase, abstract); counts x 0.01.
RowVector feature_vector(const SentenceFeatures& feats);

// encoding ++ relu(dense(features)) through feature_proj_layers layers.
Var fuse_sentence(Graph& g, const SummaryModel& model, Var encoding, const SentenceFeatures& feats);

struct DocumentFeatures {
  Var asjc;      // L2-normalised sum of code embeddings, zero without codes
  Var title;     // mean word embedding, zero when empty
  Var abstract;  // mean word embedding, zero when empty
};
DocumentFeatures document_features(Graph& g, const SummaryModel& model, const Document& doc);

// -- Extractors -------------------------------------------------------------

// n x sentence_dim: encoded (and fused, when configured) sentences.
Var sentence_matrix(Graph& g, const SummaryModel& model, const Document& doc,
                    const ForwardOptions& options = {});

// n x 1 positive-class probabilities for the model's extractor kind.
Var sentence_probabilities(Graph& g, const SummaryModel& model, const Document& doc,
                           const ForwardOptions& options = {});

// Inference wrappers. extract/classify_baseline require the matching kind.
std::vector<double> extract(const SummaryModel& model, const Document& doc);
std::vector<double> classify_baseline(const SummaryModel& model, const Document& doc);
std::vector<double> predict(const SummaryModel& model, const Document& doc);

// Indices of the k highest probabilities (ties to the lower index), ascending.
std::vector<std::size_t> rank_top_k(std::span<const double> probabilities, std::size_t k = 4);

// -- Persistence ------------------------------------------------------------

void save_model(const std::filesystem::path& path, const SummaryModel& model);
std::string encode_model(const SummaryModel& model);
// Validates every parameter shape against what the stored config implies.
SummaryModel load_model(const std::filesystem::path& path);
SummaryModel decode_model(std::string_view bytes);

}  // namespace seqsum
