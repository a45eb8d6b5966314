#include "lrne/evolve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <utility>

namespace lrne {

namespace {

std::uint64_t next_below(NoiseStream& stream, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t v = stream.next_u64();
  while (v >= limit) v = stream.next_u64();
  return v % n;
}

double median_of_ranking(const std::vector<CandidateScore>& ranking) {
  const std::size_t n = ranking.size();
  if (n == 0) return 0.0;
  if (n % 2 == 1) return ranking[n / 2].fitness;
  return 0.5 * (ranking[n / 2 - 1].fitness + ranking[n / 2].fitness);
}

}  // namespace

void GaConfig::validate() const {
  if (population_size < 2) throw std::invalid_argument("population_size must be at least 2");
  if (truncation.empty()) throw std::invalid_argument("truncation must list at least one stage");
  if (truncation.size() != evaluations.size())
    throw std::invalid_argument("truncation and evaluations must have the same length");
  int prev = population_size;
  for (std::size_t s = 0; s < truncation.size(); ++s) {
    if (truncation[s] < 1) throw std::invalid_argument("truncation sizes must be positive");
    if (truncation[s] > prev)
      throw std::invalid_argument("truncation sizes must be non-increasing and fit the population");
    if (evaluations[s] < 1) throw std::invalid_argument("evaluations per stage must be positive");
    prev = truncation[s];
  }
  if (generations < 0) throw std::invalid_argument("generations must be non-negative");
  if (!(sigma >= 0.0f)) throw std::invalid_argument("sigma must be non-negative");
  if (step_cap == 0) throw std::invalid_argument("step_cap must be positive");
}

LocalEvaluator::LocalEvaluator(ArchitectureSpec arch, std::shared_ptr<FitnessEnv> env)
    : arch_(std::move(arch)), env_(std::move(env)) {
  if (!env_) throw std::invalid_argument("LocalEvaluator requires an environment");
}

std::vector<EvalOutcome> LocalEvaluator::evaluate(const std::vector<const Genome*>& genomes,
                                                  const EvalJobSpec& job) {
  std::vector<EvalOutcome> out;
  out.reserve(genomes.size());
  for (const Genome* g : genomes) {
    std::shared_ptr<const GenotypeState> state = cache_.find(g->genome_id);
    if (!state) {
      std::optional<GenotypeState> inc = develop_state_incremental(*g, arch_, cache_);
      auto owned = std::make_shared<GenotypeState>(inc ? std::move(*inc)
                                                       : develop_state(*g, arch_));
      cache_.put(g->genome_id, owned);
      state = std::move(owned);
    }
    const Phenotype phenotype = develop_products(*state, arch_);
    const PolicyEvalResult r = env_->evaluate(arch_, phenotype, job);
    out.push_back(EvalOutcome{g->genome_id, job.stage, r.fitness, r.env_steps});
  }
  return out;
}

void LocalEvaluator::notify_survivors(std::span<const std::uint64_t> survivor_ids) {
  cache_.retain_only(survivor_ids);
}

GaState ga_init(const ArchitectureSpec& arch, const GaConfig& cfg) {
  cfg.validate();
  GaState state;
  state.population.reserve(static_cast<std::size_t>(cfg.population_size));
  for (int i = 0; i < cfg.population_size; ++i) {
    Genome g;
    g.genome_id = state.next_genome_id++;
    g.parent_id = 0;
    g.init_seed =
        Seed{derive_seed(cfg.experiment_seed, {kLabelPopulation, static_cast<std::uint64_t>(i)})};
    g.arch_ref = arch.name;
    state.population.push_back(Individual{std::move(g), 0.0, false});
  }
  return state;
}

GenerationReport ga_step(GaState& state, const ArchitectureSpec& arch, const GaConfig& cfg,
                         Evaluator& evaluator) {
  cfg.validate();
  if (static_cast<int>(state.population.size()) != cfg.population_size)
    throw std::invalid_argument("population size does not match the configuration");

  const std::uint64_t gen = static_cast<std::uint64_t>(state.generation);
  const std::size_t n_stages = cfg.truncation.size();

  GenerationReport report;
  report.generation = state.generation;

  std::vector<std::size_t> remaining(state.population.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;

  std::vector<double> stage_fitness(state.population.size(), 0.0);
  std::vector<bool> was_evaluated(state.population.size(), false);

  for (std::size_t s = 0; s < n_stages; ++s) {
    EvalJobSpec job;
    job.stage = static_cast<int>(s);
    job.step_cap = cfg.step_cap;
    job.env_seeds.reserve(static_cast<std::size_t>(cfg.evaluations[s]));
    for (int e = 0; e < cfg.evaluations[s]; ++e)
      job.env_seeds.push_back(derive_seed(
          cfg.experiment_seed, {kLabelEnv, gen, static_cast<std::uint64_t>(s),
                                static_cast<std::uint64_t>(e)}));

    std::vector<const Genome*> to_eval;
    for (std::size_t idx : remaining) {
      const Individual& ind = state.population[idx];
      const bool reuse = !cfg.reevaluate_survivors && ind.has_fitness;
      if (reuse) {
        stage_fitness[idx] = ind.fitness;
        was_evaluated[idx] = false;
      } else {
        to_eval.push_back(&ind.genome);
      }
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<EvalOutcome> outcomes = evaluator.evaluate(to_eval, job);
    const auto t1 = std::chrono::steady_clock::now();

    std::unordered_map<std::uint64_t, const EvalOutcome*> by_id;
    by_id.reserve(outcomes.size());
    for (const EvalOutcome& o : outcomes) by_id.emplace(o.genome_id, &o);

    StageReport stage;
    stage.stage = static_cast<int>(s);
    stage.candidate_count = static_cast<int>(remaining.size());
    stage.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
    stage.bytes_transmitted = evaluator.take_bytes_transmitted();

    for (const Genome* g : to_eval) {
      const auto it = by_id.find(g->genome_id);
      if (it == by_id.end())
        throw std::runtime_error("evaluator returned no result for genome " +
                                 std::to_string(g->genome_id));
      if (!std::isfinite(it->second->fitness))
        throw std::runtime_error("evaluator returned a non-finite fitness for genome " +
                                 std::to_string(g->genome_id));
    }

    stage.ranking.reserve(remaining.size());
    for (std::size_t idx : remaining) {
      const Individual& ind = state.population[idx];
      const auto it = by_id.find(ind.genome.genome_id);
      if (it != by_id.end()) {
        stage_fitness[idx] = it->second->fitness;
        was_evaluated[idx] = true;
        stage.env_steps += it->second->env_steps;
      }
      stage.ranking.push_back(
          CandidateScore{ind.genome.genome_id, stage_fitness[idx], was_evaluated[idx]});
    }

    std::sort(remaining.begin(), remaining.end(), [&](std::size_t a, std::size_t b) {
      if (stage_fitness[a] != stage_fitness[b]) return stage_fitness[a] > stage_fitness[b];
      return state.population[a].genome.genome_id < state.population[b].genome.genome_id;
    });
    std::sort(stage.ranking.begin(), stage.ranking.end(),
              [](const CandidateScore& a, const CandidateScore& b) {
                if (a.fitness != b.fitness) return a.fitness > b.fitness;
                return a.genome_id < b.genome_id;
              });

    const std::size_t keep =
        std::min(remaining.size(), static_cast<std::size_t>(cfg.truncation[s]));
    remaining.resize(keep);
    stage.survivor_ids.reserve(keep);
    for (std::size_t idx : remaining)
      stage.survivor_ids.push_back(state.population[idx].genome.genome_id);

    stage.best_fitness = stage.ranking.front().fitness;
    double sum = 0.0;
    for (const CandidateScore& c : stage.ranking) sum += c.fitness;
    stage.mean_fitness = sum / static_cast<double>(stage.ranking.size());
    stage.median_fitness = median_of_ranking(stage.ranking);

    report.wall_time_s += stage.wall_time_s;
    report.env_steps += stage.env_steps;
    report.bytes_transmitted += stage.bytes_transmitted;
    report.stages.push_back(std::move(stage));
  }

  const StageReport& final_stage = report.stages.back();
  report.survivor_ids = final_stage.survivor_ids;
  report.best_fitness = final_stage.best_fitness;
  report.mean_fitness = final_stage.mean_fitness;
  report.median_fitness = final_stage.median_fitness;

  // Commit: record survivor fitness, then reproduce.
  for (std::size_t idx : remaining) {
    Individual& ind = state.population[idx];
    ind.fitness = stage_fitness[idx];
    ind.has_fitness = true;
  }

  {
    const std::size_t best_idx = remaining.front();
    const Individual& gen_best = state.population[best_idx];
    if (!state.best || gen_best.fitness > state.best->fitness) state.best = gen_best;
  }
  report.cumulative_best_fitness = state.best->fitness;
  report.cumulative_best_id = state.best->genome.genome_id;

  NoiseStream repro = derive_substream(cfg.experiment_seed, {kLabelReproduce, gen});
  const std::size_t k = remaining.size();
  const std::size_t n_children = cfg.elitism
                                     ? state.population.size() - k
                                     : state.population.size();

  std::vector<Individual> next;
  next.reserve(state.population.size());
  if (cfg.elitism)
    for (std::size_t idx : remaining) next.push_back(state.population[idx]);
  for (std::size_t c = 0; c < n_children; ++c) {
    const std::size_t pick = static_cast<std::size_t>(next_below(repro, k));
    const Genome& parent = state.population[remaining[pick]].genome;
    const Seed child_seed{repro.next_u64()};
    next.push_back(
        Individual{mutate(parent, child_seed, cfg.sigma, state.next_genome_id++), 0.0, false});
  }

  evaluator.notify_survivors(report.survivor_ids);

  state.population = std::move(next);
  state.generation += 1;
  return report;
}

}  // namespace lrne
