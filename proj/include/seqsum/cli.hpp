#pragma once

// Library side of the seqsum command line. Each cmd_* returns a process exit
// status and reports failures on `err` as "error: <message>".

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace seqsum {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kConfigEnvVar = "SEQSUM_CONFIG";

struct FileDigest {
  std::string path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::uint64_t seed = 0;
  std::string tool_version = std::string(kToolVersion);
  double wall_time_seconds = 0.0;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);
FileDigest digest_of(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// Recomputes every digest; returns one line per missing or changed file.
std::vector<std::string> verify_manifest(const std::filesystem::path& path);

std::filesystem::path manifest_path_for(const std::filesystem::path& output);

struct LabelArgs {
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::size_t cap = 10;
  bool stop_on_no_gain = false;
  std::string metric = "rouge_l_f";  // rouge_l_f | rouge_l_r | rouge_2_r
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct TrainArgs {
  std::filesystem::path corpus;
  std::filesystem::path labels;
  std::filesystem::path val_corpus;
  std::optional<std::filesystem::path> val_labels;  // oracle-labelled on the fly when absent
  std::optional<std::filesystem::path> config;      // falls back to $SEQSUM_CONFIG
  std::optional<std::filesystem::path> embeddings;
  std::filesystem::path out_dir;
  // Flat key/value overrides applied after the config file.
  nlohmann::json overrides = nlohmann::json::object();
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
  bool verbose = false;
};

struct SummarizeArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::size_t k = 4;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct EvaluateArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  std::filesystem::path out;                      // EvalResult JSON
  std::optional<std::filesystem::path> scores_out;  // per-document CSV, default <out>.scores.csv
  std::optional<std::filesystem::path> baseline_scores;
  std::string group_by = "none";
  std::size_t k = 4;
  std::size_t iterations = 10000;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct StatsArgs {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> labels;
  std::filesystem::path out;
};

int cmd_label(const LabelArgs& args, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& err);
int cmd_summarize(const SummarizeArgs& args, std::ostream& err);
int cmd_evaluate(const EvaluateArgs& args, std::ostream& err);
int cmd_stats(const StatsArgs& args, std::ostream& err);
int cmd_verify(const std::filesystem::path& manifest, std::ostream& out, std::ostream& err);

}  // namespace seqsum
