#include "seqsum/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "seqsum/checkpoint.hpp"
#include "seqsum/corpus.hpp"
#include "seqsum/evaluation.hpp"
#include "seqsum/model.hpp"
#include "seqsum/oracle.hpp"
#include "seqsum/parallel.hpp"
#include "seqsum/training.hpp"

namespace seqsum {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

OracleMetric parse_metric(const std::string& s) {
  if (s == "rouge_l_f") return OracleMetric::kRougeLF;
  if (s == "rouge_l_r") return OracleMetric::kRougeLR;
  if (s == "rouge_2_r") return OracleMetric::kRouge2R;
  throw Error("unknown oracle metric \"" + s + "\" (expected rouge_l_f, rouge_l_r or rouge_2_r)");
}

std::string labels_jsonl(std::span<const LabeledDocument> labeled) {
  std::string out;
  for (const auto& d : labeled) {
    out += serialize_labels(d);
    out += '\n';
  }
  return out;
}

void finish_manifest(RunManifest& m, const fs::path& path, const Stopwatch& clock) {
  m.wall_time_seconds = clock.seconds();
  write_manifest(path, m);
}

}  // namespace

json to_json(const RunManifest& m) {
  auto files = [](const std::vector<FileDigest>& v) {
    json arr = json::array();
    for (const auto& f : v) arr.push_back({{"path", f.path}, {"sha256", f.sha256}});
    return arr;
  };
  return {{"command", m.command},
          {"config", m.config},
          {"inputs", files(m.inputs)},
          {"outputs", files(m.outputs)},
          {"seed", m.seed},
          {"tool_version", m.tool_version},
          {"wall_time_seconds", m.wall_time_seconds}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    for (const char* key : {"inputs", "outputs"}) {
      auto& dst = std::string_view(key) == "inputs" ? m.inputs : m.outputs;
      for (const auto& f : j.at(key)) dst.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.wall_time_seconds = j.at("wall_time_seconds").get<double>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

FileDigest digest_of(const fs::path& path) { return {path.string(), sha256_file(path)}; }

void write_manifest(const fs::path& path, const RunManifest& manifest) {
  ensure_parent(path);
  write_file(path, to_json(manifest).dump(2) + "\n");
}

std::vector<std::string> verify_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error("manifest not found: " + path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
  const RunManifest m = manifest_from_json(j);
  std::vector<std::string> problems;
  for (const auto* list : {&m.inputs, &m.outputs}) {
    for (const auto& f : *list) {
      if (!fs::exists(f.path)) {
        problems.push_back(f.path + ": not found");
        continue;
      }
      const std::string actual = sha256_file(f.path);
      if (actual != f.sha256) problems.push_back(f.path + ": digest mismatch (recorded " + f.sha256 + ", now " + actual + ")");
    }
  }
  return problems;
}

fs::path manifest_path_for(const fs::path& output) {
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

int cmd_label(const LabelArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    Stopwatch clock;
    OracleOptions opts;
    opts.cap = args.cap;
    opts.stop_on_no_gain = args.stop_on_no_gain;
    opts.metric = parse_metric(args.metric);
    if (opts.cap == 0) throw Error("cap must be >= 1");
    const auto docs = load_corpus(args.corpus);
    const auto result = label_corpus(docs, opts, args.jobs);
    for (const auto& s : result.skipped) err << "warning: skipped document \"" << s.id << "\": " << s.reason << '\n';
    ensure_parent(args.out);
    write_file(args.out, labels_jsonl(result.labeled));

    RunManifest m;
    m.command = "label";
    m.config = {{"cap", args.cap},
                {"stop_on_no_gain", args.stop_on_no_gain},
                {"metric", args.metric},
                {"skipped", result.skipped.size()}};
    m.seed = args.seed;
    m.inputs = {digest_of(args.corpus)};
    m.outputs = {digest_of(args.out)};
    finish_manifest(m, manifest_path_for(args.out), clock);
  });
}

int cmd_train(const TrainArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    Stopwatch clock;
    RunConfig config;
    std::optional<fs::path> config_path = args.config;
    if (!config_path) {
      if (const char* env = std::getenv(std::string(kConfigEnvVar).c_str()); env && *env) config_path = fs::path(env);
    }
    if (config_path) config = load_run_config(*config_path, config);
    config = parse_run_config(args.overrides, config);
    if (args.seed) config.train.seed = *args.seed;
    config.model.validate();
    config.train.validate();

    const auto train_records = load_labels(args.labels.string());
    // Documents the labeller skipped have no record and are left out.
    std::unordered_set<std::string> labelled_ids;
    for (const auto& r : train_records) labelled_ids.insert(r.id);
    std::vector<Document> train_docs;
    for (auto& d : load_corpus(args.corpus)) {
      if (labelled_ids.contains(d.id)) train_docs.push_back(std::move(d));
      else err << "warning: no labels for training document \"" << d.id << "\"\n";
    }
    const auto train_labeled = attach_labels(train_docs, train_records);
    const auto val_docs = load_corpus(args.val_corpus);
    std::vector<LabeledDocument> val_labeled;
    if (args.val_labels) {
      val_labeled = attach_labels(val_docs, load_labels(args.val_labels->string()));
    } else {
      auto result = label_corpus(val_docs, {}, args.jobs);
      for (const auto& s : result.skipped)
        err << "warning: skipped validation document \"" << s.id << "\": " << s.reason << '\n';
      val_labeled = std::move(result.labeled);
    }

    std::optional<PretrainedEmbeddings> pretrained;
    if (args.embeddings) pretrained = load_embeddings(*args.embeddings, config.model.embed_dim);
    SummaryModel model = build_model(config.model, build_vocabulary(train_docs), build_asjc_vocabulary(train_docs),
                                     config.train.seed, pretrained ? &*pretrained : nullptr);

    fs::create_directories(args.out_dir);
    const fs::path checkpoint = args.out_dir / "model.ckpt";
    const fs::path report_path = args.out_dir / "train_report.json";
    TrainOptions options;
    options.checkpoint_path = checkpoint;
    if (args.verbose)
      options.on_epoch = [&err](const EpochRecord& e) {
        err << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss " << e.validation_loss
            << " val_rouge " << e.validation_rouge << '\n';
      };
    const TrainResult result = train(std::move(model), train_labeled, val_labeled, config.train, options);
    // Relative to the report, so reruns into other directories produce the same bytes.
    TrainReport report = result.report;
    report.checkpoint_path = checkpoint.filename().string();
    write_file(report_path, to_json(report).dump(2) + "\n");

    RunManifest m;
    m.command = "train";
    m.config = to_json(config);
    m.seed = config.train.seed;
    m.inputs = {digest_of(args.corpus), digest_of(args.labels), digest_of(args.val_corpus)};
    if (args.val_labels) m.inputs.push_back(digest_of(*args.val_labels));
    if (config_path) m.inputs.push_back(digest_of(*config_path));
    if (args.embeddings) m.inputs.push_back(digest_of(*args.embeddings));
    m.outputs = {digest_of(checkpoint), digest_of(report_path)};
    finish_manifest(m, args.out_dir / "manifest.json", clock);
  });
}

int cmd_summarize(const SummarizeArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    Stopwatch clock;
    if (args.k == 0) throw Error("k must be >= 1");
    const SummaryModel model = load_model(args.checkpoint);
    const auto docs = load_corpus(args.corpus);
    if (docs.empty()) throw Error("corpus " + args.corpus.string() + " has no documents");
    std::vector<std::string> lines(docs.size());
    parallel_for(docs.size(), args.jobs, [&](std::size_t i) {
      const auto probs = predict(model, docs[i]);
      const auto selected = rank_top_k(probs, args.k);
      json sentences = json::array();
      for (std::size_t s : selected) sentences.push_back(detokenize(docs[i].sentences[s].tokens));
      lines[i] = json{{"id", docs[i].id}, {"selected", selected}, {"sentences", std::move(sentences)},
                      {"probabilities", probs}}
                     .dump();
    });
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    ensure_parent(args.out);
    write_file(args.out, out);

    RunManifest m;
    m.command = "summarize";
    m.config = {{"k", args.k}};
    m.seed = args.seed;
    m.inputs = {digest_of(args.checkpoint), digest_of(args.corpus)};
    m.outputs = {digest_of(args.out)};
    finish_manifest(m, manifest_path_for(args.out), clock);
  });
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    Stopwatch clock;
    EvalOptions opts;
    opts.k = args.k;
    opts.group_by = parse_group_by(args.group_by);
    opts.jobs = args.jobs;
    if (opts.k == 0) throw Error("k must be >= 1");
    const SummaryModel model = load_model(args.checkpoint);
    const auto docs = load_corpus(args.corpus);
    const bool any_highlights =
        std::any_of(docs.begin(), docs.end(), [](const Document& d) { return !d.highlights.empty(); });
    if (!any_highlights)
      throw Error("corpus " + args.corpus.string() +
                  " has no documents with highlights; evaluation needs gold highlights to score against");
    const EvalResult result = rouge_l_f_at_k(model, docs, opts);
    for (const auto& s : result.skipped) err << "warning: skipped document \"" << s.id << "\": " << s.reason << '\n';

    json report = to_json(result);
    report["k"] = args.k;
    const fs::path scores_path = args.scores_out.value_or(fs::path(args.out.string() + ".scores.csv"));
    ensure_parent(scores_path);
    write_file(scores_path, scores_csv(result));

    RunManifest m;
    m.command = "evaluate";
    m.seed = args.seed;
    m.inputs = {digest_of(args.checkpoint), digest_of(args.corpus)};
    if (args.baseline_scores) {
      if (!fs::exists(*args.baseline_scores))
        throw Error("baseline scores not found: " + args.baseline_scores->string());
      std::ifstream in(*args.baseline_scores);
      const auto baseline = parse_scores_csv(in, args.baseline_scores->string());
      std::vector<std::pair<std::string, double>> ours;
      for (const auto& d : result.documents) ours.emplace_back(d.id, d.score);
      const auto [a, b] = pair_scores(ours, baseline);
      double mean_b = 0.0;
      for (double v : b) mean_b += v;
      mean_b /= static_cast<double>(b.size());
      report["approx_randomization"] = {{"baseline", args.baseline_scores->string()},
                                        {"baseline_mean", mean_b},
                                        {"iterations", args.iterations},
                                        {"seed", args.seed},
                                        {"p_value", approx_randomization(a, b, args.iterations, args.seed)}};
      m.inputs.push_back(digest_of(*args.baseline_scores));
    }
    ensure_parent(args.out);
    write_file(args.out, report.dump(2) + "\n");

    m.config = {{"k", args.k}, {"group_by", args.group_by}, {"iterations", args.iterations}};
    m.outputs = {digest_of(args.out), digest_of(scores_path)};
    finish_manifest(m, manifest_path_for(args.out), clock);
  });
}

int cmd_stats(const StatsArgs& args, std::ostream& err) {
  return guarded(err, [&] {
    Stopwatch clock;
    const auto docs = load_corpus(args.corpus);
    std::optional<std::vector<std::vector<int>>> labels;
    if (args.labels) {
      const auto labeled = attach_labels(docs, load_labels(args.labels->string()));
      labels.emplace();
      for (const auto& d : labeled) labels->push_back(d.labels);
    }
    const CorpusStats s = corpus_stats(docs, labels ? &*labels : nullptr);
    json report = {{"n_documents", s.n_documents},
                   {"avg_sentences", s.avg_sentences},
                   {"avg_sentence_length", s.avg_sentence_length}};
    if (labels) report["avg_labels"] = s.avg_labels;
    ensure_parent(args.out);
    write_file(args.out, report.dump(2) + "\n");

    RunManifest m;
    m.command = "stats";
    m.inputs = {digest_of(args.corpus)};
    if (args.labels) m.inputs.push_back(digest_of(*args.labels));
    m.outputs = {digest_of(args.out)};
    finish_manifest(m, manifest_path_for(args.out), clock);
  });
}

int cmd_verify(const fs::path& manifest, std::ostream& out, std::ostream& err) {
  int status = 0;
  const int rc = guarded(err, [&] {
    const auto problems = verify_manifest(manifest);
    for (const auto& p : problems) err << "mismatch: " << p << '\n';
    if (problems.empty()) out << "ok: " << manifest.string() << '\n';
    else status = 2;
  });
  return rc != 0 ? rc : status;
}

}  // namespace seqsum
