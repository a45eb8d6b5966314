#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrne/dist.hpp"
#include "lrne/evolve.hpp"
#include "lrne/layers.hpp"

namespace lrne {

struct DistributedConfig {
  bool enabled = false;
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  int min_workers = 1;
  double straggler_timeout_s = 30.0;
};

/// A full experiment description, loaded from JSON (schema in
/// docs/config_schema.md). File paths are resolved relative to the config
/// file's directory.
struct RunConfig {
  Seed experiment_seed{1};
  std::string mode = "lm";        // "lm" | "tiletrack"
  std::string representation;     // optional tag checked against the arch
  std::string arch_path;
  std::string output_dir = "run-out";
  GaConfig ga;
  LmTaskConfig lm;
  std::string corpus_path;
  TileTrackConfig track;
  DistributedConfig distributed;
  bool log_evals = false;
  std::string base_dir = ".";

  void validate() const;
  std::string resolve(const std::string& path) const;
};

RunConfig run_config_from_json(const std::string& json_text, const std::string& base_dir);
RunConfig load_run_config(const std::string& path);

/// Hash of the run-defining fields (everything except output locations);
/// stamped into logs and checked on resume.
std::uint64_t config_hash(const RunConfig& cfg);

std::uint64_t fnv1a64(const std::string& text);

struct RunPaths {
  std::string log;
  std::string state;
  std::string best;
  std::string evals;
};
RunPaths run_paths(const RunConfig& cfg);

/// Loads the architecture and assembles the task bundle: reads the corpus
/// and pre-trains the merge list for vocabularies beyond raw bytes, so
/// master and workers share one tokenizer.
TaskBundle build_task_bundle(const RunConfig& cfg);

struct RunResult {
  std::vector<GenerationReport> reports;
  std::optional<Individual> best;
  std::int64_t genotype_params = 0;
  std::int64_t phenotype_params = 0;
  RunPaths paths;
};

/// Runs (or resumes) the whole experiment: seeds or restores the GA state,
/// loops generations, appends one CSV row per stage, persists resumable
/// state after every generation, and writes the best genome as a
/// self-contained JSON file. With distributed.enabled the process acts as
/// master and waits for min_workers before evaluating.
RunResult run_experiment(const RunConfig& cfg, bool resume = false);

/// Parses a run log back into rows (skips '#' metadata and the header).
std::vector<RunLogRow> parse_run_log(const std::string& path);

// Persistence pieces, exposed for tests.
std::string ga_state_to_json(const GaState& state, std::uint64_t cfg_hash);
GaState ga_state_from_json(const std::string& text, std::uint64_t expected_hash);
std::string best_genome_json(const Individual& best, const TaskBundle& bundle);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace lrne
