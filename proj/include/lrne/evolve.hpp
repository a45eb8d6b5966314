#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrne/envs.hpp"
#include "lrne/genome.hpp"
#include "lrne/layers.hpp"
#include "lrne/rng.hpp"

namespace lrne {

/// Truncation-selection GA settings. Stages: every candidate is evaluated
/// with evaluations[0] episodes, the top truncation[0] advance, those are
/// evaluated with evaluations[1] more episodes, and so on; the final
/// stage's survivors are the parents of the next generation.
struct GaConfig {
  int population_size = 64;
  std::vector<int> truncation{8};
  std::vector<int> evaluations{1};
  int generations = 10;
  float sigma = 0.01f;
  /// Survivors carry over unmutated into the next generation.
  bool elitism = true;
  /// When false, carried survivors keep their stored fitness instead of
  /// being re-run; sensible only for deterministic fitness.
  bool reevaluate_survivors = true;
  std::uint32_t step_cap = 1000;
  Seed experiment_seed{1};

  void validate() const;
};

struct EvalOutcome {
  std::uint64_t genome_id = 0;
  int stage = 0;
  double fitness = 0.0;
  std::uint64_t env_steps = 0;
};

/// Evaluation backend: local in-process or a distributed master. Results
/// may come back in any order but must cover every requested genome
/// exactly once. Fitness depends only on (genome, job), never on which
/// backend or worker ran it.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual std::vector<EvalOutcome> evaluate(const std::vector<const Genome*>& genomes,
                                            const EvalJobSpec& job) = 0;
  /// Selection barrier notification; backends use it to evict caches.
  virtual void notify_survivors(std::span<const std::uint64_t> survivor_ids) { (void)survivor_ids; }
  /// Bytes moved since the last call (distributed backends only).
  virtual std::uint64_t take_bytes_transmitted() { return 0; }
};

/// In-process evaluation with incremental development through a parent
/// cache.
class LocalEvaluator : public Evaluator {
 public:
  LocalEvaluator(ArchitectureSpec arch, std::shared_ptr<FitnessEnv> env);

  std::vector<EvalOutcome> evaluate(const std::vector<const Genome*>& genomes,
                                    const EvalJobSpec& job) override;
  void notify_survivors(std::span<const std::uint64_t> survivor_ids) override;

  const ArchitectureSpec& arch() const { return arch_; }
  ParentCache& cache() { return cache_; }

 private:
  ArchitectureSpec arch_;
  std::shared_ptr<FitnessEnv> env_;
  ParentCache cache_;
};

struct CandidateScore {
  std::uint64_t genome_id = 0;
  double fitness = 0.0;
  /// False when a carried survivor's stored fitness was reused.
  bool evaluated = true;
};

struct StageReport {
  int stage = 0;
  int candidate_count = 0;
  std::vector<CandidateScore> ranking;  // descending fitness, ties by lower id
  std::vector<std::uint64_t> survivor_ids;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  double median_fitness = 0.0;
  double wall_time_s = 0.0;
  std::uint64_t env_steps = 0;
  std::uint64_t bytes_transmitted = 0;
};

struct GenerationReport {
  int generation = 0;
  std::vector<StageReport> stages;
  std::vector<std::uint64_t> survivor_ids;  // final stage
  double best_fitness = 0.0;                // final stage
  double mean_fitness = 0.0;
  double median_fitness = 0.0;
  double cumulative_best_fitness = 0.0;
  std::uint64_t cumulative_best_id = 0;
  double wall_time_s = 0.0;
  std::uint64_t env_steps = 0;
  std::uint64_t bytes_transmitted = 0;
};

struct Individual {
  Genome genome;
  double fitness = 0.0;
  bool has_fitness = false;
};

/// Everything needed to resume a run at a generation boundary.
struct GaState {
  std::vector<Individual> population;
  std::uint64_t next_genome_id = 1;
  int generation = 0;  // index of the next generation to run
  std::optional<Individual> best;
};

/// Seeds generation 0: member i draws its init seed from the experiment
/// stream label (population, i). Genome ids start at 1.
GaState ga_init(const ArchitectureSpec& arch, const GaConfig& cfg);

/// Runs one generation: staged evaluation, truncation, reproduction.
/// Parent choice and child mutation seeds come from the experiment stream
/// keyed by generation; episode seeds are shared by all candidates of a
/// (generation, stage, episode) triple. Throws without touching the state
/// if the evaluator fails.
GenerationReport ga_step(GaState& state, const ArchitectureSpec& arch, const GaConfig& cfg,
                         Evaluator& evaluator);

}  // namespace lrne
