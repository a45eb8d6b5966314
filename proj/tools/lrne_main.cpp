#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lrne/dist.hpp"
#include "lrne/envs.hpp"
#include "lrne/evolve.hpp"
#include "lrne/genome.hpp"
#include "lrne/harness.hpp"
#include "lrne/layers.hpp"
#include "lrne/stats.hpp"
#include "lrne/tokenizer.hpp"

namespace {

using nlohmann::json;

std::string layer_summary(const lrne::LayerSpec& layer) {
  std::ostringstream out;
  switch (layer.kind) {
    case lrne::LayerKind::dense:
      out << "dense " << layer.in << "->" << layer.out;
      break;
    case lrne::LayerKind::conv:
      out << "conv " << layer.in_ch << "->" << layer.out_ch << " " << layer.kh << "x" << layer.kw
          << "/" << layer.stride;
      break;
    case lrne::LayerKind::embedding:
      out << "embedding " << layer.vocab << "x" << layer.dim
          << (layer.tied_bias ? " (tied head bias)" : "");
      break;
    case lrne::LayerKind::attention:
      out << "attention h" << layer.heads << " d" << layer.head_dim << " @" << layer.hidden;
      break;
    case lrne::LayerKind::layernorm:
      out << "layernorm " << layer.norm_dim;
      break;
  }
  if (layer.rank > 0) out << " rank " << layer.rank;
  return out.str();
}

int cmd_count_params(const std::string& arch_path) {
  const lrne::ArchitectureSpec arch = lrne::load_arch(arch_path);
  const bool factorized = arch.mode == lrne::Representation::factorized;
  std::printf("architecture: %s (%s)\n", arch.name.c_str(), factorized ? "factorized" : "direct");
  std::printf("%-42s %12s %12s\n", "layer", "genotype", "phenotype");
  std::int64_t genotype = 0, phenotype = 0;
  for (const lrne::LayerSpec& layer : arch.layers) {
    const lrne::ParamCount c = lrne::count_layer_params(layer, arch.mode);
    std::printf("%-42s %12lld %12lld\n", layer_summary(layer).c_str(),
                static_cast<long long>(c.genotype), static_cast<long long>(c.phenotype));
    genotype += c.genotype;
    phenotype += c.phenotype;
  }
  std::printf("%-42s %12lld %12lld\n", "total", static_cast<long long>(genotype),
              static_cast<long long>(phenotype));

  std::printf("counting rule: direct tensors m*n; factor pairs k*(m+n); biases always direct; "
              "rank-0 layers stay direct in factorized mode\n");
  if (arch.transformer) {
    std::printf("interpretation:\n");
    std::printf("  embedding is a factorizable tensor (rank %d here); the tied output head\n",
                arch.transformer->embedding_rank);
    std::printf("  reuses it transposed and adds one direct per-token bias (%d params)\n",
                arch.transformer->tied_head ? arch.transformer->vocab_size : 0);
    std::printf("  positional encoding is sinusoidal: zero parameters\n");
    std::printf("  layer norms are parameter-free normalizations: zero parameters\n");
    std::printf("  attention counts Q,K,V as %d->%d and O as %d->%d, each with a direct bias\n",
                arch.transformer->hidden_dim, arch.transformer->inner_dim(),
                arch.transformer->inner_dim(), arch.transformer->hidden_dim);
  }
  if (factorized && arch.name.find("carracing") != std::string::npos) {
    std::printf("note: a commonly quoted genotype figure for this shape is 6,980; the rule above "
                "gives %lld (difference 63 comes down to bias-counting conventions)\n",
                static_cast<long long>(genotype));
  }
  return 0;
}

int cmd_run(const std::string& config_path, bool resume, bool force_distributed,
            int min_workers_override, int port_override) {
  lrne::RunConfig cfg = lrne::load_run_config(config_path);
  if (force_distributed) cfg.distributed.enabled = true;
  if (min_workers_override > 0) cfg.distributed.min_workers = min_workers_override;
  if (port_override > 0) cfg.distributed.port = static_cast<std::uint16_t>(port_override);

  if (cfg.distributed.enabled)
    std::printf("master: waiting for %d worker(s)\n", cfg.distributed.min_workers);
  const lrne::RunResult result = lrne::run_experiment(cfg, resume);

  std::printf("run complete: %zu generation(s)\n", result.reports.size());
  std::printf("genotype params: %lld, phenotype params: %lld\n",
              static_cast<long long>(result.genotype_params),
              static_cast<long long>(result.phenotype_params));
  for (const lrne::GenerationReport& r : result.reports)
    std::printf("generation %d: best %.6f mean %.6f (cumulative best %.6f)\n", r.generation,
                r.best_fitness, r.mean_fitness, r.cumulative_best_fitness);
  if (result.best)
    std::printf("best genome id %llu fitness %.6f -> %s\n",
                static_cast<unsigned long long>(result.best->genome.genome_id),
                result.best->fitness, result.paths.best.c_str());
  std::printf("log: %s\n", result.paths.log.c_str());

  const std::vector<lrne::RunLogRow> rows = lrne::parse_run_log(result.paths.log);
  const lrne::BandwidthReport bw =
      lrne::account_bandwidth(rows, static_cast<std::uint64_t>(result.phenotype_params));
  if (bw.total_bytes > 0) {
    std::printf("bandwidth: %llu bytes over %llu evaluations (%.1f bytes/evaluation)\n",
                static_cast<unsigned long long>(bw.total_bytes),
                static_cast<unsigned long long>(bw.total_evaluations), bw.bytes_per_evaluation);
    std::printf("hypothetical full-vector shipping: %llu bytes/genome\n",
                static_cast<unsigned long long>(bw.hypothetical_bytes_per_genome));
  }
  return 0;
}

int cmd_worker(const std::string& connect, int max_jobs) {
  const std::size_t colon = connect.rfind(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("--connect expects host:port, got " + connect);
  lrne::WorkerConfig cfg;
  cfg.host = connect.substr(0, colon);
  cfg.port = static_cast<std::uint16_t>(std::stoi(connect.substr(colon + 1)));
  cfg.max_jobs = max_jobs;
  const lrne::WorkerExit rc = lrne::run_worker(cfg);
  return static_cast<int>(rc);
}

int cmd_replay(const std::string& genome_path, std::vector<std::uint64_t> env_seeds,
               const std::string& trajectory_path) {
  const json doc = json::parse(lrne::read_text_file(genome_path));
  const lrne::ArchitectureSpec arch = lrne::arch_from_json(doc.at("arch").dump());
  const lrne::Genome genome = lrne::genome_from_json(doc.at("genome").dump());
  const lrne::Phenotype phenotype = lrne::develop(genome, arch);
  const std::string kind = doc.at("env").at("kind").get<std::string>();
  if (env_seeds.empty()) env_seeds.push_back(1);

  if (kind == "lm") {
    lrne::LmTaskConfig lm;
    lm.vocab_size = doc.at("env").at("vocab_size").get<int>();
    lm.max_seq_len = doc.at("env").at("max_seq_len").get<int>();
    lm.n_sequences = doc.at("env").at("n_sequences").get<int>();
    const std::string corpus = doc.at("env").at("corpus").get<std::string>();
    std::unique_ptr<lrne::LmEnv> env;
    if (doc.at("env").contains("bpe_model"))
      env = std::make_unique<lrne::LmEnv>(
          corpus, lm, lrne::bpe_from_text(doc.at("env").at("bpe_model").get<std::string>()));
    else
      env = std::make_unique<lrne::LmEnv>(corpus, lm);
    lrne::EvalJobSpec job;
    job.env_seeds = env_seeds;
    const lrne::PolicyEvalResult r = env->evaluate(arch, phenotype, job);
    std::printf("fitness %.17g over %llu scored positions\n", r.fitness,
                static_cast<unsigned long long>(r.env_steps));
    return 0;
  }

  if (kind != "tiletrack") throw std::invalid_argument("unknown env kind in genome file: " + kind);
  lrne::TileTrackConfig track;
  const json& tj = doc.at("env").at("config");
  track.grid_w = tj.at("grid_w").get<int>();
  track.grid_h = tj.at("grid_h").get<int>();
  track.window = tj.at("window").get<int>();
  track.frame_stack = tj.at("frame_stack").get<int>();
  track.min_tiles = tj.at("min_tiles").get<int>();
  track.max_tiles = tj.at("max_tiles").get<int>();
  track.no_progress_limit = tj.at("no_progress_limit").get<int>();
  track.step_cap = tj.at("step_cap").get<std::uint32_t>();
  track.done_fraction = tj.at("done_fraction").get<double>();

  std::ofstream trajectory;
  if (!trajectory_path.empty()) {
    trajectory.open(trajectory_path, std::ios::trunc);
    if (!trajectory) throw std::runtime_error("cannot write " + trajectory_path);
    trajectory << "episode,step,action,reward\n";
  }
  double total = 0.0;
  for (std::size_t e = 0; e < env_seeds.size(); ++e) {
    const lrne::EpisodeTrace trace =
        lrne::run_episode(arch, phenotype, lrne::Seed{env_seeds[e]}, track, track.step_cap);
    std::printf("episode seed %llu: score %.0f in %llu steps\n",
                static_cast<unsigned long long>(env_seeds[e]), trace.score,
                static_cast<unsigned long long>(trace.steps));
    if (trajectory.is_open()) {
      int step = 0;
      for (const auto& [action, reward] : trace.actions)
        trajectory << e << ',' << step++ << ',' << action << ',' << reward << '\n';
    }
    total += trace.score;
  }
  std::printf("fitness %.17g (mean over %zu episode(s))\n",
              total / static_cast<double>(env_seeds.size()), env_seeds.size());
  return 0;
}

int cmd_develop_hash(const std::string& arch_path, const std::string& genomes_path) {
  const lrne::ArchitectureSpec arch = lrne::load_arch(arch_path);
  const json doc = json::parse(lrne::read_text_file(genomes_path));
  const json& list = doc.is_array() ? doc : doc.at("genomes");
  for (const json& gj : list) {
    const lrne::Genome genome = lrne::genome_from_json(gj.dump());
    const lrne::Phenotype phenotype = lrne::develop(genome, arch);
    std::printf("%llu %016llx\n", static_cast<unsigned long long>(genome.genome_id),
                static_cast<unsigned long long>(lrne::phenotype_hash(phenotype)));
  }
  return 0;
}

struct CsvColumns {
  std::vector<std::string> order;  // header order
  std::map<std::string, std::vector<double>> values;
};

CsvColumns read_csv_columns(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv: " + path);
  CsvColumns columns;
  {
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) columns.order.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(row, cell, ',') && i < columns.order.size()) {
      if (!cell.empty()) columns.values[columns.order[i]].push_back(std::stod(cell));
      ++i;
    }
  }
  return columns;
}

int cmd_stats(const std::string& csv_path, const std::string& column_list) {
  const CsvColumns csv = read_csv_columns(csv_path);
  const std::map<std::string, std::vector<double>>& all = csv.values;
  std::vector<std::string> names;
  if (column_list.empty()) {
    names = csv.order;
  } else {
    std::istringstream ss(column_list);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (!all.count(name)) throw std::invalid_argument("no such column: " + name);
      names.push_back(name);
    }
  }
  if (names.size() < 2) throw std::invalid_argument("stats needs at least two columns");

  std::printf("test,groups,statistic,p_value,effect_size\n");
  const std::vector<double>& control = all.at(names[0]);
  for (std::size_t i = 1; i < names.size(); ++i) {
    const std::vector<double>& treatment = all.at(names[i]);
    const lrne::RankSumResult w = lrne::wilcoxon_rank_sum(treatment, control);
    const double delta = lrne::glass_delta(treatment, control);
    std::printf("wilcoxon_rank_sum%s,%s_vs_%s,%.17g,%.17g,%.17g\n", w.exact ? "_exact" : "",
                names[i].c_str(), names[0].c_str(), w.u_statistic, w.p_value, delta);
  }
  if (names.size() > 2) {
    std::vector<std::vector<double>> groups;
    std::string label;
    for (const std::string& name : names) {
      groups.push_back(all.at(name));
      label += (label.empty() ? "" : "+") + name;
    }
    const lrne::KruskalResult k = lrne::kruskal_wallis(groups);
    std::printf("kruskal_wallis,%s,%.17g,%.17g,\n", label.c_str(), k.h_statistic, k.p_value);
  }
  return 0;
}

int cmd_train_bpe(const std::string& corpus_path, int vocab, const std::string& out_path) {
  const std::string corpus = lrne::read_text_file(corpus_path);
  const lrne::BpeTrainResult trained = lrne::train_bpe(corpus, vocab);
  lrne::write_text_file(out_path, lrne::bpe_to_text(trained.model));
  std::printf("vocab %d (%s), model -> %s\n", trained.model.vocab_size(),
              trained.reached_target ? "reached target" : "merges exhausted early",
              out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"low-rank neuroevolution engine"};
  app.require_subcommand(1);

  std::string config_path, arch_path, genome_path, genomes_path, corpus_path;
  std::string connect, trajectory_path, csv_path, column_list, out_path;
  std::vector<std::uint64_t> env_seeds;
  bool resume = false;
  int max_jobs = -1, min_workers = 0, port = 0, vocab = 512;

  CLI::App* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", config_path, "run config JSON")->required();
  run->add_flag("--resume", resume, "continue from the saved state");

  CLI::App* master = app.add_subcommand("master", "run distributed: serve evaluation jobs");
  master->add_option("--config", config_path, "run config JSON")->required();
  master->add_flag("--resume", resume, "continue from the saved state");
  master->add_option("--port", port, "listen port (overrides config)");
  master->add_option("--min-workers", min_workers, "wait for this many workers");

  CLI::App* worker = app.add_subcommand("worker", "evaluate jobs for a master");
  worker->add_option("--connect", connect, "master address host:port")->required();
  worker->add_option("--max-jobs", max_jobs, "drop the connection after N jobs");

  CLI::App* count = app.add_subcommand("count-params", "print per-layer parameter counts");
  count->add_option("--arch", arch_path, "architecture JSON")->required();

  CLI::App* replay = app.add_subcommand("replay", "re-evaluate a saved genome");
  replay->add_option("--genome", genome_path, "best-genome JSON file")->required();
  replay->add_option("--env-seed", env_seeds, "episode seed(s)");
  replay->add_option("--trajectory", trajectory_path, "write (step, action, reward) CSV here");

  CLI::App* hash = app.add_subcommand("develop-hash", "print phenotype digests for genomes");
  hash->add_option("--arch", arch_path, "architecture JSON")->required();
  hash->add_option("--genomes", genomes_path, "JSON array of genomes")->required();

  CLI::App* stats = app.add_subcommand("stats", "compare csv columns");
  stats->add_option("--input", csv_path, "csv with one column per condition")->required();
  stats->add_option("--columns", column_list, "comma-separated column names (first = control)");

  CLI::App* bpe = app.add_subcommand("train-bpe", "train a tokenizer model on a corpus");
  bpe->add_option("--corpus", corpus_path, "corpus text file")->required();
  bpe->add_option("--vocab", vocab, "target vocabulary size");
  bpe->add_option("--out", out_path, "model output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, resume, false, 0, 0);
    if (master->parsed()) return cmd_run(config_path, resume, true, min_workers, port);
    if (worker->parsed()) return cmd_worker(connect, max_jobs);
    if (count->parsed()) return cmd_count_params(arch_path);
    if (replay->parsed()) return cmd_replay(genome_path, env_seeds, trajectory_path);
    if (hash->parsed()) return cmd_develop_hash(arch_path, genomes_path);
    if (stats->parsed()) return cmd_stats(csv_path, column_list);
    if (bpe->parsed()) return cmd_train_bpe(corpus_path, vocab, out_path);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
