// seqsum: oracle labelling, training, summarisation and evaluation of
// extractive summarisers over JSONL corpora.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "seqsum/cli.hpp"

namespace {

template <class T>
void set_if(CLI::Option* opt, nlohmann::json& overrides, const char* key, const T& value) {
  if (opt->count() > 0) overrides[key] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extractive summarisation: oracle labels, training, summarisation, evaluation"};
  app.set_version_flag("--version", std::string(seqsum::kToolVersion));
  app.require_subcommand(0, 1);

  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::string verify_path;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--jobs", jobs, "Worker threads for per-document work")->check(CLI::Range(1u, 1024u))->capture_default_str();
  app.add_option("--verify", verify_path, "Re-check the digests recorded in a run manifest");

  // label
  seqsum::LabelArgs label;
  auto* label_cmd = app.add_subcommand("label", "Greedy ROUGE oracle labels for a corpus");
  label_cmd->add_option("corpus", label.corpus, "Corpus JSONL")->required();
  label_cmd->add_option("-o,--out", label.out, "Label JSONL output")->required();
  label_cmd->add_option("--cap", label.cap, "Maximum sentences selected per document")->capture_default_str();
  label_cmd->add_flag("--stop-on-no-gain", label.stop_on_no_gain, "Stop once no sentence improves the score");
  label_cmd->add_option("--metric", label.metric, "rouge_l_f, rouge_l_r or rouge_2_r")->capture_default_str();

  // train
  seqsum::TrainArgs train;
  std::string config_path, val_labels, embeddings;
  double learning_rate = 0, dropout = 0, clip_norm = 0;
  std::size_t max_epochs = 0, patience = 0, batch_size = 0;
  std::string weight_mode, encoder, extractor;
  bool shuffle = false, sentence_features = false, document_features = false, freeze = false;
  auto* train_cmd = app.add_subcommand("train", "Train an extractor on labelled documents");
  train_cmd->add_option("corpus", train.corpus, "Training corpus JSONL")->required();
  train_cmd->add_option("labels", train.labels, "Training labels JSONL")->required();
  train_cmd->add_option("val_corpus", train.val_corpus, "Validation corpus JSONL")->required();
  train_cmd->add_option("-o,--out-dir", train.out_dir, "Directory for checkpoint, report and manifest")->required();
  auto* config_opt = train_cmd->add_option("--config", config_path, "Flat JSON config (default $SEQSUM_CONFIG)");
  auto* val_labels_opt = train_cmd->add_option("--val-labels", val_labels, "Validation labels JSONL");
  auto* emb_opt = train_cmd->add_option("--embeddings", embeddings, "Pretrained word vectors (text format)");
  auto* lr_opt = train_cmd->add_option("--learning-rate", learning_rate);
  auto* dropout_opt = train_cmd->add_option("--dropout", dropout);
  auto* clip_opt = train_cmd->add_option("--clip-norm", clip_norm);
  auto* epochs_opt = train_cmd->add_option("--max-epochs", max_epochs);
  auto* patience_opt = train_cmd->add_option("--patience", patience);
  auto* batch_opt = train_cmd->add_option("--batch-size", batch_size);
  auto* weight_opt = train_cmd->add_option("--weight-mode", weight_mode, "paper or inverse_frequency");
  auto* encoder_opt = train_cmd->add_option("--encoder", encoder, "mean, cnn or rnn");
  auto* extractor_opt = train_cmd->add_option("--extractor", extractor, "sequence or independent");
  auto* shuffle_opt = train_cmd->add_flag("--shuffle-train-sentences", shuffle);
  auto* sf_opt = train_cmd->add_flag("--sentence-features", sentence_features);
  auto* df_opt = train_cmd->add_flag("--document-features", document_features);
  auto* freeze_opt = train_cmd->add_flag("--freeze-embeddings", freeze);
  train_cmd->add_flag("-v,--verbose", train.verbose, "Print one line per epoch");

  // summarize
  seqsum::SummarizeArgs summarize;
  auto* sum_cmd = app.add_subcommand("summarize", "Top-k sentences per document");
  sum_cmd->add_option("checkpoint", summarize.checkpoint)->required();
  sum_cmd->add_option("corpus", summarize.corpus)->required();
  sum_cmd->add_option("-o,--out", summarize.out, "Summary JSONL output")->required();
  sum_cmd->add_option("-k", summarize.k)->capture_default_str();

  // evaluate
  seqsum::EvaluateArgs evaluate;
  std::string scores_out, baseline;
  auto* eval_cmd = app.add_subcommand("evaluate", "rouge-l-f@k and optional significance test");
  eval_cmd->add_option("checkpoint", evaluate.checkpoint)->required();
  eval_cmd->add_option("corpus", evaluate.corpus)->required();
  eval_cmd->add_option("-o,--out", evaluate.out, "Evaluation JSON output")->required();
  auto* scores_opt = eval_cmd->add_option("--scores-out", scores_out, "Per-document CSV (default <out>.scores.csv)");
  auto* baseline_opt = eval_cmd->add_option("--baseline-scores", baseline, "CSV from a previous evaluate run");
  eval_cmd->add_option("--group-by", evaluate.group_by, "none or asjc")->capture_default_str();
  eval_cmd->add_option("-k", evaluate.k)->capture_default_str();
  eval_cmd->add_option("--iterations", evaluate.iterations, "Randomisation iterations")->capture_default_str();

  // stats
  seqsum::StatsArgs stats;
  std::string stats_labels;
  auto* stats_cmd = app.add_subcommand("stats", "Corpus statistics");
  stats_cmd->add_option("corpus", stats.corpus)->required();
  stats_cmd->add_option("-o,--out", stats.out, "Statistics JSON output")->required();
  auto* stats_labels_opt = stats_cmd->add_option("--labels", stats_labels);

  CLI11_PARSE(app, argc, argv);

  if (!verify_path.empty()) return seqsum::cmd_verify(verify_path, std::cout, std::cerr);

  if (label_cmd->parsed()) {
    label.seed = seed;
    label.jobs = jobs;
    return seqsum::cmd_label(label, std::cerr);
  }
  if (train_cmd->parsed()) {
    if (config_opt->count()) train.config = config_path;
    if (val_labels_opt->count()) train.val_labels = val_labels;
    if (emb_opt->count()) train.embeddings = embeddings;
    if (app.get_option("--seed")->count()) train.seed = seed;
    train.jobs = jobs;
    auto& o = train.overrides;
    set_if(lr_opt, o, "learning_rate", learning_rate);
    set_if(dropout_opt, o, "dropout", dropout);
    set_if(clip_opt, o, "clip_norm", clip_norm);
    set_if(epochs_opt, o, "max_epochs", max_epochs);
    set_if(patience_opt, o, "patience", patience);
    set_if(batch_opt, o, "batch_size", batch_size);
    set_if(weight_opt, o, "weight_mode", weight_mode);
    set_if(encoder_opt, o, "encoder_kind", encoder);
    set_if(extractor_opt, o, "extractor_kind", extractor);
    set_if(shuffle_opt, o, "shuffle_train_sentences", shuffle);
    set_if(sf_opt, o, "use_sentence_features", sentence_features);
    set_if(df_opt, o, "use_document_features", document_features);
    set_if(freeze_opt, o, "embeddings_trainable", !freeze);
    return seqsum::cmd_train(train, std::cerr);
  }
  if (sum_cmd->parsed()) {
    summarize.seed = seed;
    summarize.jobs = jobs;
    return seqsum::cmd_summarize(summarize, std::cerr);
  }
  if (eval_cmd->parsed()) {
    if (scores_opt->count()) evaluate.scores_out = scores_out;
    if (baseline_opt->count()) evaluate.baseline_scores = baseline;
    evaluate.seed = seed;
    evaluate.jobs = jobs;
    return seqsum::cmd_evaluate(evaluate, std::cerr);
  }
  if (stats_cmd->parsed()) {
    if (stats_labels_opt->count()) stats.labels = stats_labels;
    return seqsum::cmd_stats(stats, std::cerr);
  }
  std::cout << app.help();
  return 0;
}
