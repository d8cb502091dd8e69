#include "seqsum/model.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "seqsum/checkpoint.hpp"

namespace seqsum {

namespace {

using nlohmann::json;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

enum class InitKind { kUniform, kWordEmbedding, kLstmBias };

struct ParamSpec {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
  InitKind init = InitKind::kUniform;
  bool trainable = true;
};

Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

void add_lstm_specs(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t in,
                    std::size_t hidden) {
  specs.push_back({prefix + ".input", idx(in), idx(4 * hidden)});
  specs.push_back({prefix + ".recurrent", idx(hidden), idx(4 * hidden)});
  specs.push_back({prefix + ".bias", 1, idx(4 * hidden), InitKind::kLstmBias});
}

void add_dense_specs(std::vector<ParamSpec>& specs, const std::string& prefix, std::size_t in,
                     std::size_t out) {
  specs.push_back({prefix + ".weight", idx(in), idx(out)});
  specs.push_back({prefix + ".bias", 1, idx(out)});
}

// Every parameter a config implies, in initialisation order.
std::vector<ParamSpec> parameter_specs(const ExtractorConfig& c, std::size_t vocab_size,
                                       std::size_t asjc_size) {
  std::vector<ParamSpec> specs;
  specs.push_back({"embedding.words", idx(vocab_size), idx(c.embed_dim), InitKind::kWordEmbedding,
                   c.embeddings_trainable});
  switch (c.encoder_kind) {
    case EncoderKind::kMean:
      break;
    case EncoderKind::kCnn:
      for (std::size_t w : c.cnn_widths)
        add_dense_specs(specs, "encoder.cnn.w" + std::to_string(w), w * c.embed_dim, c.cnn_filters);
      break;
    case EncoderKind::kRnn:
      add_lstm_specs(specs, "encoder.rnn.fwd", c.embed_dim, c.rnn_hidden);
      add_lstm_specs(specs, "encoder.rnn.bwd", c.embed_dim, c.rnn_hidden);
      break;
  }
  if (c.use_sentence_features) {
    for (std::size_t l = 0; l < c.feature_proj_layers; ++l)
      add_dense_specs(specs, "features.proj" + std::to_string(l), l == 0 ? kSentenceFeatureWidth : c.feature_proj_dim,
                      c.feature_proj_dim);
  }
  std::size_t head_in = c.sentence_dim();
  if (c.extractor_kind == ExtractorKind::kSequence) {
    add_lstm_specs(specs, "extractor.fwd", c.sentence_dim(), c.extractor_hidden);
    add_lstm_specs(specs, "extractor.bwd", c.sentence_dim(), c.extractor_hidden);
    if (c.use_document_features) {
      specs.push_back({"embedding.asjc", idx(asjc_size), idx(c.asjc_dim)});
      for (const char* dir : {"fwd", "bwd"})
        for (const char* state : {"h", "c"})
          add_dense_specs(specs, std::string("docinit.") + dir + "." + state, c.document_feature_dim(),
                          c.extractor_hidden);
    }
    head_in = 2 * c.extractor_hidden;
  }
  add_dense_specs(specs, "head.hidden", head_in, c.mlp_hidden);
  add_dense_specs(specs, "head.out", c.mlp_hidden, 2);
  return specs;
}

LstmWeights lstm_weights(Graph& g, const SummaryModel& m, const std::string& prefix) {
  auto& params = const_cast<ParameterStore&>(m.params);
  return {g.parameter(params.at(prefix + ".input")), g.parameter(params.at(prefix + ".recurrent")),
          g.parameter(params.at(prefix + ".bias"))};
}

Var param(Graph& g, const SummaryModel& m, const std::string& name) {
  return g.parameter(const_cast<ParameterStore&>(m.params).at(name));
}

Var dense(Graph& g, const SummaryModel& m, const std::string& prefix, Var x) {
  return add(matmul(x, param(g, m, prefix + ".weight")), param(g, m, prefix + ".bias"));
}

Var maybe_dropout(Var x, const ForwardOptions& options) {
  if (options.rng && options.dropout > 0.0) return dropout(x, options.dropout, *options.rng);
  return x;
}

std::vector<std::size_t> token_indices(const Vocabulary& vocab, std::span<const Token> tokens) {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.lookup(t.text));
  return out;
}

Var mean_embedding_or_zero(Graph& g, const SummaryModel& m, std::span<const Token> tokens) {
  if (tokens.empty()) return g.constant(Matrix::Zero(1, idx(m.config.embed_dim)));
  return encode_mean(embed_tokens(g, m, tokens));
}

template <class T>
T get_typed(const std::string& key, const json& value) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw Error("config key \"" + key + "\" has the wrong type");
  }
}

const std::unordered_set<std::string_view>& extractor_keys() {
  static const std::unordered_set<std::string_view> keys = {
      "encoder_kind",     "extractor_kind",      "use_sentence_features", "use_document_features",
      "embed_dim",        "encoder_out",         "cnn_filters",           "cnn_widths",
      "rnn_hidden",       "extractor_hidden",    "mlp_hidden",            "feature_proj_dim",
      "feature_proj_layers", "asjc_dim",         "embeddings_trainable",  "oov_seed",
      "init_range",
  };
  return keys;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::kMean: return "mean";
    case EncoderKind::kCnn: return "cnn";
    case EncoderKind::kRnn: return "rnn";
  }
  return "?";
}

std::string_view to_string(ExtractorKind k) {
  return k == ExtractorKind::kSequence ? "sequence" : "independent";
}

EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "mean") return EncoderKind::kMean;
  if (s == "cnn") return EncoderKind::kCnn;
  if (s == "rnn") return EncoderKind::kRnn;
  throw Error("unknown encoder_kind \"" + std::string(s) + "\" (expected mean, cnn or rnn)");
}

ExtractorKind parse_extractor_kind(std::string_view s) {
  if (s == "sequence") return ExtractorKind::kSequence;
  if (s == "independent" || s == "baseline") return ExtractorKind::kIndependent;
  throw Error("unknown extractor_kind \"" + std::string(s) + "\" (expected sequence or independent)");
}

void ExtractorConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw Error(std::string("config: ") + name + " must be >= 1");
  };
  positive(embed_dim, "embed_dim");
  positive(encoder_out, "encoder_out");
  positive(extractor_hidden, "extractor_hidden");
  positive(mlp_hidden, "mlp_hidden");
  positive(asjc_dim, "asjc_dim");
  if (use_sentence_features) {
    positive(feature_proj_dim, "feature_proj_dim");
    positive(feature_proj_layers, "feature_proj_layers");
  }
  switch (encoder_kind) {
    case EncoderKind::kMean:
      if (encoder_out != embed_dim)
        throw Error("config: encoder_out must equal embed_dim for the mean encoder");
      break;
    case EncoderKind::kCnn:
      positive(cnn_filters, "cnn_filters");
      if (cnn_widths.empty()) throw Error("config: cnn_widths must not be empty");
      for (std::size_t w : cnn_widths) positive(w, "cnn_widths entries");
      if (cnn_widths.size() * cnn_filters != encoder_out)
        throw Error("config: cnn_widths x cnn_filters (" + std::to_string(cnn_widths.size() * cnn_filters) +
                    ") must equal encoder_out (" + std::to_string(encoder_out) + ")");
      break;
    case EncoderKind::kRnn:
      positive(rnn_hidden, "rnn_hidden");
      if (2 * rnn_hidden != encoder_out)
        throw Error("config: 2 x rnn_hidden must equal encoder_out for the rnn encoder");
      break;
  }
  if (use_document_features && extractor_kind != ExtractorKind::kSequence)
    throw Error("config: use_document_features requires extractor_kind sequence");
  if (!(init_range > 0.0)) throw Error("config: init_range must be > 0");
}

std::size_t ExtractorConfig::sentence_dim() const {
  return encoder_out + (use_sentence_features ? feature_proj_dim : 0);
}

json to_json(const ExtractorConfig& c) {
  return json{
      {"encoder_kind", to_string(c.encoder_kind)},
      {"extractor_kind", to_string(c.extractor_kind)},
      {"use_sentence_features", c.use_sentence_features},
      {"use_document_features", c.use_document_features},
      {"embed_dim", c.embed_dim},
      {"encoder_out", c.encoder_out},
      {"cnn_filters", c.cnn_filters},
      {"cnn_widths", c.cnn_widths},
      {"rnn_hidden", c.rnn_hidden},
      {"extractor_hidden", c.extractor_hidden},
      {"mlp_hidden", c.mlp_hidden},
      {"feature_proj_dim", c.feature_proj_dim},
      {"feature_proj_layers", c.feature_proj_layers},
      {"asjc_dim", c.asjc_dim},
      {"embeddings_trainable", c.embeddings_trainable},
      {"oov_seed", c.oov_seed},
      {"init_range", c.init_range},
  };
}

bool is_extractor_key(std::string_view key) { return extractor_keys().contains(key); }

void apply_extractor_key(ExtractorConfig& c, const std::string& key, const json& v) {
  if (key == "encoder_kind") c.encoder_kind = parse_encoder_kind(get_typed<std::string>(key, v));
  else if (key == "extractor_kind") c.extractor_kind = parse_extractor_kind(get_typed<std::string>(key, v));
  else if (key == "use_sentence_features") c.use_sentence_features = get_typed<bool>(key, v);
  else if (key == "use_document_features") c.use_document_features = get_typed<bool>(key, v);
  else if (key == "embed_dim") c.embed_dim = get_typed<std::size_t>(key, v);
  else if (key == "encoder_out") c.encoder_out = get_typed<std::size_t>(key, v);
  else if (key == "cnn_filters") c.cnn_filters = get_typed<std::size_t>(key, v);
  else if (key == "cnn_widths") c.cnn_widths = get_typed<std::vector<std::size_t>>(key, v);
  else if (key == "rnn_hidden") c.rnn_hidden = get_typed<std::size_t>(key, v);
  else if (key == "extractor_hidden") c.extractor_hidden = get_typed<std::size_t>(key, v);
  else if (key == "mlp_hidden") c.mlp_hidden = get_typed<std::size_t>(key, v);
  else if (key == "feature_proj_dim") c.feature_proj_dim = get_typed<std::size_t>(key, v);
  else if (key == "feature_proj_layers") c.feature_proj_layers = get_typed<std::size_t>(key, v);
  else if (key == "asjc_dim") c.asjc_dim = get_typed<std::size_t>(key, v);
  else if (key == "embeddings_trainable") c.embeddings_trainable = get_typed<bool>(key, v);
  else if (key == "oov_seed") c.oov_seed = get_typed<std::uint64_t>(key, v);
  else if (key == "init_range") c.init_range = get_typed<double>(key, v);
  else throw Error("unknown config key \"" + key + "\"");
}

// ---------------------------------------------------------------------------
// Vocabulary and embeddings

Vocabulary::Vocabulary() { add(std::string(kUnknownToken)); }

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  if (tokens.empty() || tokens.front() != kUnknownToken)
    throw Error("vocabulary must start with " + std::string(kUnknownToken));
  for (auto& t : tokens) {
    if (index_.contains(t)) throw Error("duplicate vocabulary entry \"" + t + "\"");
    add(t);
  }
}

std::size_t Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

Vocabulary build_vocabulary(std::span<const Document> docs) {
  Vocabulary v;
  auto add_all = [&v](const TokenList& toks) {
    for (const auto& t : toks) v.add(t.text);
  };
  for (const auto& d : docs) {
    add_all(d.title_tokens);
    add_all(d.abstract_tokens);
    for (const auto& k : d.key_phrases) add_all(k);
    for (const auto& s : d.sentences) add_all(s.tokens);
  }
  return v;
}

Vocabulary build_asjc_vocabulary(std::span<const Document> docs) {
  Vocabulary v;
  for (const auto& d : docs)
    for (const auto& c : d.asjc_codes) v.add(c);
  return v;
}

PretrainedEmbeddings load_embeddings(const std::filesystem::path& path, std::size_t expected_dim) {
  std::ifstream in(path);
  if (!in) throw Error("embeddings not found: " + path.string());
  PretrainedEmbeddings out;
  out.dim = expected_dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string token;
    fields >> token;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw Error(path.string() + ":" + std::to_string(line_no) + ": bad number \"" + field + "\"");
      }
    }
    if (values.size() != expected_dim)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(expected_dim) + " values, got " + std::to_string(values.size()));
    RowVector vec = Eigen::Map<const RowVector>(values.data(), idx(values.size()));
    if (!out.vectors.emplace(token, std::move(vec)).second)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": duplicate token \"" + token + "\"");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Construction

SummaryModel build_model(const ExtractorConfig& config, Vocabulary vocab, Vocabulary asjc_vocab,
                         std::uint64_t seed, const PretrainedEmbeddings* pretrained) {
  config.validate();
  if (pretrained && pretrained->dim != config.embed_dim)
    throw Error("pretrained embeddings have dimension " + std::to_string(pretrained->dim) +
                ", config expects " + std::to_string(config.embed_dim));
  SummaryModel m{config, std::move(vocab), std::move(asjc_vocab), {}};
  Rng rng(seed);
  const double r = config.init_range;
  for (const auto& spec : parameter_specs(config, m.vocab.size(), m.asjc_vocab.size())) {
    Matrix value(spec.rows, spec.cols);
    if (spec.init == InitKind::kWordEmbedding) {
      for (Eigen::Index row = 0; row < spec.rows; ++row) {
        const std::string& token = m.vocab.tokens()[static_cast<std::size_t>(row)];
        if (pretrained) {
          if (auto it = pretrained->vectors.find(token); it != pretrained->vectors.end()) {
            value.row(row) = it->second;
            continue;
          }
        }
        Rng token_rng(splitmix64(config.oov_seed ^ splitmix64(fnv1a(token))));
        for (Eigen::Index c = 0; c < spec.cols; ++c) value(row, c) = uniform(token_rng, -r, r);
      }
    } else {
      for (Eigen::Index row = 0; row < spec.rows; ++row)
        for (Eigen::Index c = 0; c < spec.cols; ++c) value(row, c) = uniform(rng, -r, r);
      if (spec.init == InitKind::kLstmBias) {
        const Eigen::Index hidden = spec.cols / 4;
        value.middleCols(hidden, hidden).array() += 1.0;
      }
    }
    m.params.add(spec.name, std::move(value), spec.trainable);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Encoders

Var embed_tokens(Graph& g, const SummaryModel& model, std::span<const Token> tokens) {
  const auto indices = token_indices(model.vocab, tokens);
  return gather_rows(param(g, model, "embedding.words"), indices);
}

Var encode_mean(Var embedded) {
  if (embedded.rows() == 0) throw Error("encode_mean: empty sentence");
  return mean_rows(embedded);
}

Var encode_cnn(Var embedded, std::span<const ConvBank> banks) {
  if (embedded.rows() == 0) throw Error("encode_cnn: empty sentence");
  std::vector<Var> pooled;
  pooled.reserve(banks.size());
  for (const auto& b : banks) pooled.push_back(max_rows(relu(conv1d(embedded, b.weight, b.bias, b.width))));
  return concat_cols(pooled);
}

Var encode_rnn(Var embedded, const LstmWeights& forward, const LstmWeights& backward) {
  if (embedded.rows() == 0) throw Error("encode_rnn: empty sentence");
  Graph& g = embedded.graph();
  auto zero_state = [&g](const LstmWeights& w) {
    const Eigen::Index h = w.recurrent.rows();
    return LstmState{g.constant(Matrix::Zero(1, h)), g.constant(Matrix::Zero(1, h))};
  };
  const auto fwd = lstm_sequence(embedded, forward, zero_state(forward), false);
  const auto bwd = lstm_sequence(embedded, backward, zero_state(backward), true);
  return concat_cols(std::array{fwd.back(), bwd.front()});
}

Var encode_sentence(Graph& g, const SummaryModel& model, std::span<const Token> tokens) {
  if (tokens.empty()) throw Error("encode_sentence: empty sentence");
  Var embedded = embed_tokens(g, model, tokens);
  const auto& c = model.config;
  switch (c.encoder_kind) {
    case EncoderKind::kMean:
      return encode_mean(embedded);
    case EncoderKind::kCnn: {
      std::vector<ConvBank> banks;
      for (std::size_t w : c.cnn_widths) {
        const std::string prefix = "encoder.cnn.w" + std::to_string(w);
        banks.push_back({param(g, model, prefix + ".weight"), param(g, model, prefix + ".bias"), idx(w)});
      }
      return encode_cnn(embedded, banks);
    }
    case EncoderKind::kRnn:
      return encode_rnn(embedded, lstm_weights(g, model, "encoder.rnn.fwd"),
                        lstm_weights(g, model, "encoder.rnn.bwd"));
  }
  throw Error("encode_sentence: unknown encoder");
}

// ---------------------------------------------------------------------------
// Features

SentenceFeatures sentence_features(const Sentence& sentence, const Document& doc) {
  SentenceFeatures f;
  f.length = sentence.tokens.size();
  for (const auto& t : sentence.tokens) f.n_numbers += t.is_numeric ? 1 : 0;
  f.section_onehot[static_cast<std::size_t>(sentence.section)] = 1.0;

  std::unordered_set<std::string> title, phrases, abstract, own;
  for (const auto& t : doc.title_tokens) title.insert(t.text);
  for (const auto& kp : doc.key_phrases)
    for (const auto& t : kp) phrases.insert(t.text);
  for (const auto& t : doc.abstract_tokens) abstract.insert(t.text);
  for (const auto& t : sentence.tokens) own.insert(t.text);

  std::size_t shared_with_title = 0;
  for (const auto& w : own) shared_with_title += title.contains(w) ? 1 : 0;
  f.title_overlap = own.empty() ? 0.0 : static_cast<double>(shared_with_title) / static_cast<double>(own.size());
  for (const auto& t : sentence.tokens) {
    f.keyphrase_overlap += phrases.contains(t.text) ? 1 : 0;
    f.abstract_overlap += abstract.contains(t.text) ? 1 : 0;
  }
  return f;
}

RowVector feature_vector(const SentenceFeatures& f) {
  RowVector v(idx(kSentenceFeatureWidth));
  v(0) = kCountFeatureScale * static_cast<double>(f.n_numbers);
  v(1) = kCountFeatureScale * static_cast<double>(f.length);
  for (std::size_t i = 0; i < kNumSectionClasses; ++i) v(idx(2 + i)) = f.section_onehot[i];
  v(9) = f.title_overlap;
  v(10) = kCountFeatureScale * static_cast<double>(f.keyphrase_overlap);
  v(11) = kCountFeatureScale * static_cast<double>(f.abstract_overlap);
  return v;
}

namespace {

// Shared by the single-sentence and batched paths: rows of `features` are
// projected through the configured dense+relu stack.
Var project_features(Graph& g, const SummaryModel& model, Var features) {
  Var h = features;
  for (std::size_t l = 0; l < model.config.feature_proj_layers; ++l)
    h = relu(dense(g, model, "features.proj" + std::to_string(l), h));
  return h;
}

}  // namespace

Var fuse_sentence(Graph& g, const SummaryModel& model, Var encoding, const SentenceFeatures& feats) {
  if (!model.config.use_sentence_features) throw Error("fuse_sentence: model has no sentence features");
  Var projected = project_features(g, model, g.constant(feature_vector(feats)));
  return concat_cols(std::array{encoding, projected});
}

DocumentFeatures document_features(Graph& g, const SummaryModel& model, const Document& doc) {
  const auto& c = model.config;
  DocumentFeatures out;
  if (doc.asjc_codes.empty() || !model.params.contains("embedding.asjc")) {
    out.asjc = g.constant(Matrix::Zero(1, idx(c.asjc_dim)));
  } else {
    std::vector<std::size_t> codes;
    for (const auto& code : doc.asjc_codes) codes.push_back(model.asjc_vocab.lookup(code));
    Var rows = gather_rows(param(g, model, "embedding.asjc"), codes);
    out.asjc = l2_normalize(scale(mean_rows(rows), static_cast<double>(codes.size())));
  }
  out.title = mean_embedding_or_zero(g, model, doc.title_tokens);
  out.abstract = mean_embedding_or_zero(g, model, doc.abstract_tokens);
  return out;
}

// ---------------------------------------------------------------------------
// Extractors

Var sentence_matrix(Graph& g, const SummaryModel& model, const Document& doc, const ForwardOptions& options) {
  if (doc.sentences.empty()) throw Error("document \"" + doc.id + "\" has no sentences");
  const auto& c = model.config;
  Var encoded;
  if (c.encoder_kind == EncoderKind::kMean) {
    // One gather for the whole document, then a constant averaging matrix.
    std::vector<std::size_t> all;
    Matrix averaging = Matrix::Zero(idx(doc.sentences.size()), 0);
    std::size_t total = 0;
    for (const auto& s : doc.sentences) total += s.tokens.size();
    averaging.setZero(idx(doc.sentences.size()), idx(total));
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
      const auto& toks = doc.sentences[i].tokens;
      if (toks.empty()) throw Error("document \"" + doc.id + "\" has an empty sentence");
      for (const auto& t : toks) {
        averaging(idx(i), idx(all.size())) = 1.0 / static_cast<double>(toks.size());
        all.push_back(model.vocab.lookup(t.text));
      }
    }
    encoded = matmul(g.constant(std::move(averaging)), gather_rows(param(g, model, "embedding.words"), all));
  } else {
    std::vector<Var> rows;
    rows.reserve(doc.sentences.size());
    for (const auto& s : doc.sentences) rows.push_back(encode_sentence(g, model, s.tokens));
    encoded = concat_rows(rows);
  }
  if (c.use_sentence_features) {
    Matrix feats(idx(doc.sentences.size()), idx(kSentenceFeatureWidth));
    for (std::size_t i = 0; i < doc.sentences.size(); ++i)
      feats.row(idx(i)) = feature_vector(sentence_features(doc.sentences[i], doc));
    encoded = concat_cols(std::array{encoded, project_features(g, model, g.constant(std::move(feats)))});
  }
  return maybe_dropout(encoded, options);
}

Var sentence_probabilities(Graph& g, const SummaryModel& model, const Document& doc,
                           const ForwardOptions& options) {
  const auto& c = model.config;
  Var x = sentence_matrix(g, model, doc, options);
  if (x.cols() != idx(c.sentence_dim()))
    throw ShapeError("extractor input " + shape_string(x.value()) + " does not match sentence_dim " +
                     std::to_string(c.sentence_dim()));
  Var features = x;
  if (c.extractor_kind == ExtractorKind::kSequence) {
    const Eigen::Index h = idx(c.extractor_hidden);
    LstmState init_fwd{g.constant(Matrix::Zero(1, h)), g.constant(Matrix::Zero(1, h))};
    LstmState init_bwd = init_fwd;
    if (c.use_document_features) {
      const DocumentFeatures df = document_features(g, model, doc);
      Var docvec = concat_cols(std::array{df.asjc, df.title, df.abstract});
      init_fwd = {tanh(dense(g, model, "docinit.fwd.h", docvec)), dense(g, model, "docinit.fwd.c", docvec)};
      init_bwd = {tanh(dense(g, model, "docinit.bwd.h", docvec)), dense(g, model, "docinit.bwd.c", docvec)};
    }
    const auto fwd = lstm_sequence(x, lstm_weights(g, model, "extractor.fwd"), init_fwd, false);
    const auto bwd = lstm_sequence(x, lstm_weights(g, model, "extractor.bwd"), init_bwd, true);
    features = concat_cols(std::array{concat_rows(fwd), concat_rows(bwd)});
  }
  Var hidden = maybe_dropout(relu(dense(g, model, "head.hidden", features)), options);
  Var probs = softmax_rows(dense(g, model, "head.out", hidden));
  return slice_cols(probs, 1, 1);
}

namespace {

std::vector<double> run_inference(const SummaryModel& model, const Document& doc) {
  Graph g(false);
  Var p = sentence_probabilities(g, model, doc);
  const Matrix& v = p.value();
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

std::vector<double> extract(const SummaryModel& model, const Document& doc) {
  if (model.config.extractor_kind != ExtractorKind::kSequence)
    throw Error("extract: model was built with the independent extractor");
  return run_inference(model, doc);
}

std::vector<double> classify_baseline(const SummaryModel& model, const Document& doc) {
  if (model.config.extractor_kind != ExtractorKind::kIndependent)
    throw Error("classify_baseline: model was built with the sequence extractor");
  return run_inference(model, doc);
}

std::vector<double> predict(const SummaryModel& model, const Document& doc) { return run_inference(model, doc); }

std::vector<std::size_t> rank_top_k(std::span<const double> probabilities, std::size_t k) {
  if (k < 1) throw Error("rank_top_k: k must be >= 1");
  std::vector<std::size_t> order(probabilities.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probabilities[a] > probabilities[b]; });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

// ---------------------------------------------------------------------------
// Persistence

std::string encode_model(const SummaryModel& model) {
  CheckpointData data;
  json meta = {{"format", "seqsum-model"},
               {"model", to_json(model.config)},
               {"vocabulary", model.vocab.tokens()},
               {"asjc_vocabulary", model.asjc_vocab.tokens()}};
  data.config_json = meta.dump();
  for (const Parameter* p : model.params.all()) data.tensors.push_back({p->name, p->trainable, p->value});
  return encode_checkpoint(data);
}

void save_model(const std::filesystem::path& path, const SummaryModel& model) {
  write_file(path, encode_model(model));
}

SummaryModel decode_model(std::string_view bytes) {
  CheckpointData data = decode_checkpoint(bytes);
  json meta;
  try {
    meta = json::parse(data.config_json);
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  if (meta.value("format", "") != "seqsum-model") throw Error("checkpoint is not a seqsum model");
  ExtractorConfig config;
  for (const auto& [key, value] : meta.at("model").items()) apply_extractor_key(config, key, value);
  config.validate();
  Vocabulary vocab(meta.at("vocabulary").get<std::vector<std::string>>());
  Vocabulary asjc(meta.at("asjc_vocabulary").get<std::vector<std::string>>());

  const auto specs = parameter_specs(config, vocab.size(), asjc.size());
  std::unordered_map<std::string, NamedTensor*> by_name;
  for (auto& t : data.tensors) by_name.emplace(t.name, &t);
  SummaryModel m{config, std::move(vocab), std::move(asjc), {}};
  for (const auto& spec : specs) {
    auto it = by_name.find(spec.name);
    if (it == by_name.end()) throw Error("checkpoint is missing parameter \"" + spec.name + "\"");
    const Matrix& v = it->second->value;
    if (v.rows() != spec.rows || v.cols() != spec.cols)
      throw ShapeError("shape mismatch for parameter \"" + spec.name + "\": checkpoint has " +
                       shape_string(v) + ", config expects " + shape_string(spec.rows, spec.cols));
    m.params.add(spec.name, v, spec.trainable);
    by_name.erase(it);
  }
  if (!by_name.empty())
    throw Error("checkpoint has unexpected parameter \"" + by_name.begin()->first + "\"");
  return m;
}

SummaryModel load_model(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("checkpoint not found: " + path.string());
  return decode_model(read_file(path));
}

}  // namespace seqsum
