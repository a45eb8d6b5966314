#include "lrne/harness.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "lrne/tokenizer.hpp"

namespace lrne {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

void RunConfig::validate() const {
  if (mode != "lm" && mode != "tiletrack")
    throw std::invalid_argument("mode must be \"lm\" or \"tiletrack\"");
  if (arch_path.empty()) throw std::invalid_argument("arch path is required");
  if (mode == "lm" && corpus_path.empty())
    throw std::invalid_argument("lm mode needs a corpus path");
  ga.validate();
  if (!representation.empty() && representation != "factorized" &&
      representation != "nonfactorized" && representation != "direct" && representation != "small")
    throw std::invalid_argument("unknown representation tag: " + representation);
}

std::string RunConfig::resolve(const std::string& path) const {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).string();
}

namespace {

GaConfig ga_from_json(const json& j) {
  GaConfig ga;
  ga.population_size = j.at("population_size").get<int>();
  ga.truncation = j.at("truncation").get<std::vector<int>>();
  ga.evaluations = j.at("evaluations").get<std::vector<int>>();
  ga.generations = j.at("generations").get<int>();
  ga.sigma = j.at("sigma").get<float>();
  if (j.contains("elitism")) ga.elitism = j.at("elitism").get<bool>();
  if (j.contains("reevaluate_survivors"))
    ga.reevaluate_survivors = j.at("reevaluate_survivors").get<bool>();
  if (j.contains("step_cap")) ga.step_cap = j.at("step_cap").get<std::uint32_t>();
  return ga;
}

json ga_to_json(const GaConfig& ga) {
  json j;
  j["population_size"] = ga.population_size;
  j["truncation"] = ga.truncation;
  j["evaluations"] = ga.evaluations;
  j["generations"] = ga.generations;
  j["sigma"] = ga.sigma;
  j["elitism"] = ga.elitism;
  j["reevaluate_survivors"] = ga.reevaluate_survivors;
  j["step_cap"] = ga.step_cap;
  return j;
}

TileTrackConfig track_from_json(const json& j) {
  TileTrackConfig t;
  if (j.contains("grid_w")) t.grid_w = j.at("grid_w").get<int>();
  if (j.contains("grid_h")) t.grid_h = j.at("grid_h").get<int>();
  if (j.contains("window")) t.window = j.at("window").get<int>();
  if (j.contains("frame_stack")) t.frame_stack = j.at("frame_stack").get<int>();
  if (j.contains("min_tiles")) t.min_tiles = j.at("min_tiles").get<int>();
  if (j.contains("max_tiles")) t.max_tiles = j.at("max_tiles").get<int>();
  if (j.contains("no_progress_limit")) t.no_progress_limit = j.at("no_progress_limit").get<int>();
  if (j.contains("step_cap")) t.step_cap = j.at("step_cap").get<std::uint32_t>();
  if (j.contains("done_fraction")) t.done_fraction = j.at("done_fraction").get<double>();
  return t;
}

json track_to_json(const TileTrackConfig& t) {
  json j;
  j["grid_w"] = t.grid_w;
  j["grid_h"] = t.grid_h;
  j["window"] = t.window;
  j["frame_stack"] = t.frame_stack;
  j["min_tiles"] = t.min_tiles;
  j["max_tiles"] = t.max_tiles;
  j["no_progress_limit"] = t.no_progress_limit;
  j["step_cap"] = t.step_cap;
  j["done_fraction"] = t.done_fraction;
  return j;
}

Individual individual_from_json(const json& j) {
  Individual ind;
  ind.genome = genome_from_json(j.at("genome").dump());
  ind.fitness = j.at("fitness").get<double>();
  ind.has_fitness = j.at("has_fitness").get<bool>();
  return ind;
}

json individual_to_json(const Individual& ind) {
  json j;
  j["genome"] = json::parse(genome_to_json(ind.genome));
  j["fitness"] = ind.fitness;
  j["has_fitness"] = ind.has_fitness;
  return j;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

RunConfig run_config_from_json(const std::string& json_text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("run config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  cfg.base_dir = base_dir.empty() ? "." : base_dir;
  try {
    cfg.experiment_seed = Seed{j.at("experiment_seed").get<std::uint64_t>()};
    cfg.mode = j.at("mode").get<std::string>();
    cfg.arch_path = j.at("arch").get<std::string>();
    cfg.output_dir = j.at("output_dir").get<std::string>();
    cfg.ga = ga_from_json(j.at("ga"));
    if (j.contains("representation")) cfg.representation = j.at("representation").get<std::string>();
    if (j.contains("lm")) {
      const json& lm = j.at("lm");
      cfg.lm.vocab_size = lm.at("vocab_size").get<int>();
      cfg.lm.max_seq_len = lm.at("max_seq_len").get<int>();
      cfg.lm.n_sequences = lm.at("n_sequences").get<int>();
      cfg.corpus_path = lm.at("corpus").get<std::string>();
    }
    if (j.contains("tiletrack")) cfg.track = track_from_json(j.at("tiletrack"));
    if (j.contains("distributed")) {
      const json& d = j.at("distributed");
      if (d.contains("enabled")) cfg.distributed.enabled = d.at("enabled").get<bool>();
      if (d.contains("port")) cfg.distributed.port = d.at("port").get<std::uint16_t>();
      if (d.contains("min_workers")) cfg.distributed.min_workers = d.at("min_workers").get<int>();
      if (d.contains("straggler_timeout_s"))
        cfg.distributed.straggler_timeout_s = d.at("straggler_timeout_s").get<double>();
    }
    if (j.contains("log_evals")) cfg.log_evals = j.at("log_evals").get<bool>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("run config field error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  const std::string text = read_text_file(path);
  return run_config_from_json(text, fs::path(path).parent_path().string());
}

std::uint64_t config_hash(const RunConfig& cfg) {
  // Everything that shapes the trajectory; the generation count is only a
  // stop condition, so runs can be resumed with a larger one.
  json j;
  j["experiment_seed"] = cfg.experiment_seed.value;
  j["mode"] = cfg.mode;
  j["representation"] = cfg.representation;
  j["arch"] = cfg.arch_path;
  j["ga"] = ga_to_json(cfg.ga);
  j["ga"].erase("generations");
  if (cfg.mode == "lm") {
    j["lm"]["vocab_size"] = cfg.lm.vocab_size;
    j["lm"]["max_seq_len"] = cfg.lm.max_seq_len;
    j["lm"]["n_sequences"] = cfg.lm.n_sequences;
    j["lm"]["corpus"] = cfg.corpus_path;
  } else {
    j["tiletrack"] = track_to_json(cfg.track);
  }
  return fnv1a64(j.dump());
}

RunPaths run_paths(const RunConfig& cfg) {
  const fs::path dir = cfg.resolve(cfg.output_dir);
  RunPaths p;
  p.log = (dir / "run_log.csv").string();
  p.state = (dir / "state.json").string();
  p.best = (dir / "best_genome.json").string();
  p.evals = (dir / "eval_log.csv").string();
  return p;
}

TaskBundle build_task_bundle(const RunConfig& cfg) {
  TaskBundle bundle;
  bundle.arch = load_arch(cfg.resolve(cfg.arch_path));

  if (!cfg.representation.empty()) {
    const bool want_factorized = cfg.representation == "factorized";
    const bool is_factorized = bundle.arch.mode == Representation::factorized;
    if (want_factorized != is_factorized)
      throw std::invalid_argument("representation tag \"" + cfg.representation +
                                  "\" does not match the architecture's mode");
  }

  if (cfg.mode == "lm") {
    bundle.env_kind = "lm";
    bundle.lm = cfg.lm;
    bundle.corpus_text = read_text_file(cfg.resolve(cfg.corpus_path));
    if (cfg.lm.vocab_size > 256) {
      const BpeTrainResult trained = train_bpe(bundle.corpus_text, cfg.lm.vocab_size);
      bundle.bpe_model_text = bpe_to_text(trained.model);
    }
  } else {
    bundle.env_kind = "tiletrack";
    bundle.track = cfg.track;
  }
  return bundle;
}

std::string ga_state_to_json(const GaState& state, std::uint64_t cfg_hash) {
  json j;
  j["config_hash"] = cfg_hash;
  j["generation"] = state.generation;
  j["next_genome_id"] = state.next_genome_id;
  j["population"] = json::array();
  for (const Individual& ind : state.population) j["population"].push_back(individual_to_json(ind));
  if (state.best)
    j["best"] = individual_to_json(*state.best);
  else
    j["best"] = nullptr;
  return j.dump(2);
}

GaState ga_state_from_json(const std::string& text, std::uint64_t expected_hash) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("state file is not valid JSON: ") + e.what());
  }
  const std::uint64_t stored = j.at("config_hash").get<std::uint64_t>();
  if (stored != expected_hash)
    throw std::invalid_argument("state file belongs to a different configuration");
  GaState state;
  state.generation = j.at("generation").get<int>();
  state.next_genome_id = j.at("next_genome_id").get<std::uint64_t>();
  for (const json& ind : j.at("population")) state.population.push_back(individual_from_json(ind));
  if (!j.at("best").is_null()) state.best = individual_from_json(j.at("best"));
  return state;
}

std::string best_genome_json(const Individual& best, const TaskBundle& bundle) {
  json j;
  j["fitness"] = best.fitness;
  j["genome"] = json::parse(genome_to_json(best.genome));
  j["arch"] = json::parse(arch_to_json(bundle.arch));
  j["env"]["kind"] = bundle.env_kind;
  if (bundle.env_kind == "lm") {
    j["env"]["vocab_size"] = bundle.lm.vocab_size;
    j["env"]["max_seq_len"] = bundle.lm.max_seq_len;
    j["env"]["n_sequences"] = bundle.lm.n_sequences;
    j["env"]["corpus"] = bundle.corpus_text;
    if (!bundle.bpe_model_text.empty()) j["env"]["bpe_model"] = bundle.bpe_model_text;
  } else {
    j["env"]["config"] = track_to_json(bundle.track);
  }
  return j.dump(2);
}

namespace {

std::string log_metadata(const RunConfig& cfg, const TaskBundle& bundle, std::uint64_t cfg_hash) {
  const std::int64_t genotype = count_params(bundle.arch, CountKind::genotype);
  const std::int64_t phenotype = count_params(bundle.arch, CountKind::phenotype);
  std::ostringstream out;
  out << "# config_hash=" << cfg_hash << "\n";
  out << "# experiment_seed=" << cfg.experiment_seed.value << "\n";
  out << "# mode=" << cfg.mode << "\n";
  out << "# arch=" << bundle.arch.name << "\n";
  out << "# representation="
      << (bundle.arch.mode == Representation::factorized ? "factorized" : "direct") << "\n";
  out << "# genotype_params=" << genotype << "\n";
  out << "# phenotype_params=" << phenotype << "\n";
  out << "# population_size=" << cfg.ga.population_size << "\n";
  out << "# truncation=";
  for (std::size_t i = 0; i < cfg.ga.truncation.size(); ++i)
    out << (i ? "," : "") << cfg.ga.truncation[i];
  out << "\n# evaluations=";
  for (std::size_t i = 0; i < cfg.ga.evaluations.size(); ++i)
    out << (i ? "," : "") << cfg.ga.evaluations[i];
  out << "\n# sigma=" << format_double(cfg.ga.sigma) << "\n";
  out << "# generations=" << cfg.ga.generations << "\n";
  out << "generation,stage,candidate_count,best_fitness,mean_fitness,median_fitness,"
         "wall_time_s,env_steps,bytes_transmitted\n";
  return out.str();
}

void append_report_rows(std::ofstream& log, const GenerationReport& report) {
  for (const StageReport& s : report.stages) {
    log << report.generation << ',' << s.stage << ',' << s.candidate_count << ','
        << format_double(s.best_fitness) << ',' << format_double(s.mean_fitness) << ','
        << format_double(s.median_fitness) << ',' << format_double(s.wall_time_s) << ','
        << s.env_steps << ',' << s.bytes_transmitted << '\n';
  }
  log.flush();
}

void append_eval_rows(std::ofstream& evals, const GenerationReport& report) {
  for (const StageReport& s : report.stages)
    for (const CandidateScore& c : s.ranking)
      evals << report.generation << ',' << s.stage << ',' << c.genome_id << ','
            << format_double(c.fitness) << ',' << (c.evaluated ? 1 : 0) << '\n';
  evals.flush();
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg, bool resume) {
  cfg.validate();
  const TaskBundle bundle = build_task_bundle(cfg);
  const ArchitectureSpec& arch = bundle.arch;
  const std::uint64_t cfg_hash = config_hash(cfg);
  const RunPaths paths = run_paths(cfg);
  fs::create_directories(cfg.resolve(cfg.output_dir));

  GaState state;
  if (resume) {
    state = ga_state_from_json(read_text_file(paths.state), cfg_hash);
    if (static_cast<int>(state.population.size()) != cfg.ga.population_size)
      throw std::invalid_argument("state population does not match the configuration");
  } else {
    state = ga_init(arch, cfg.ga);
    write_text_file(paths.log, log_metadata(cfg, bundle, cfg_hash));
    if (cfg.log_evals)
      write_text_file(paths.evals, "generation,stage,genome_id,fitness,evaluated\n");
    write_text_file(paths.state, ga_state_to_json(state, cfg_hash));
  }

  std::unique_ptr<Evaluator> evaluator;
  std::unique_ptr<MasterEvaluator> master;
  if (cfg.distributed.enabled) {
    MasterConfig mc;
    mc.port = cfg.distributed.port;
    mc.straggler_timeout_s = cfg.distributed.straggler_timeout_s;
    master = std::make_unique<MasterEvaluator>(bundle, mc);
    if (!master->wait_for_workers(cfg.distributed.min_workers, 600.0))
      throw std::runtime_error("timed out waiting for workers");
  } else {
    evaluator = std::make_unique<LocalEvaluator>(arch, make_env(bundle));
  }
  Evaluator& backend = master ? static_cast<Evaluator&>(*master) : *evaluator;

  std::ofstream log(paths.log, std::ios::app);
  if (!log) throw std::runtime_error("cannot append to " + paths.log);
  std::ofstream evals;
  if (cfg.log_evals) {
    evals.open(paths.evals, std::ios::app);
    if (!evals) throw std::runtime_error("cannot append to " + paths.evals);
  }

  RunResult result;
  result.paths = paths;
  result.genotype_params = count_params(arch, CountKind::genotype);
  result.phenotype_params = count_params(arch, CountKind::phenotype);

  while (state.generation < cfg.ga.generations) {
    const GenerationReport report = ga_step(state, arch, cfg.ga, backend);
    append_report_rows(log, report);
    if (cfg.log_evals) append_eval_rows(evals, report);
    write_text_file(paths.state, ga_state_to_json(state, cfg_hash));
    if (state.best) write_text_file(paths.best, best_genome_json(*state.best, bundle));
    result.reports.push_back(report);
  }

  result.best = state.best;
  if (master) master->shutdown();
  return result;
}

std::vector<RunLogRow> parse_run_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<RunLogRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("generation,", 0) == 0) continue;
    std::istringstream ss(line);
    RunLogRow row;
    char comma;
    ss >> row.generation >> comma >> row.stage >> comma >> row.candidate_count >> comma >>
        row.best_fitness >> comma >> row.mean_fitness >> comma >> row.median_fitness >> comma >>
        row.wall_time_s >> comma >> row.env_steps >> comma >> row.bytes_transmitted;
    if (ss.fail()) throw std::runtime_error("malformed run log row: " + line);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace lrne
