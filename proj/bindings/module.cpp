#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrne/envs.hpp"
#include "lrne/evolve.hpp"
#include "lrne/genome.hpp"
#include "lrne/harness.hpp"
#include "lrne/layers.hpp"
#include "lrne/rng.hpp"
#include "lrne/stats.hpp"
#include "lrne/tensor.hpp"
#include "lrne/tokenizer.hpp"
#include "lrne/transformer.hpp"

namespace py = pybind11;
using namespace lrne;

namespace {

Matrix matrix_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::array_t<float> matrix_to_array(const Matrix& m) {
  py::array_t<float> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

Volume volume_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw std::invalid_argument("expected a 3-D array (channels, h, w)");
  Volume v(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
           static_cast<int>(a.shape(2)));
  std::copy(a.data(), a.data() + a.size(), v.data.begin());
  return v;
}

py::array_t<float> volume_to_array(const Volume& v) {
  py::array_t<float> out({v.ch, v.h, v.w});
  std::copy(v.data.begin(), v.data.end(), out.mutable_data());
  return out;
}

py::array_t<float> conv2d_py(
    const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
    const py::array_t<float, py::array::c_style | py::array::forcecast>& w,
    const py::array_t<float, py::array::c_style | py::array::forcecast>& bias, int stride) {
  if (w.ndim() != 4) throw std::invalid_argument("weight must be 4-D (out, in, kh, kw)");
  ConvWeight cw;
  cw.out_ch = static_cast<int>(w.shape(0));
  cw.in_ch = static_cast<int>(w.shape(1));
  cw.kh = static_cast<int>(w.shape(2));
  cw.kw = static_cast<int>(w.shape(3));
  cw.data.assign(w.data(), w.data() + w.size());
  std::vector<float> b(bias.data(), bias.data() + bias.size());
  return volume_to_array(conv2d_forward(volume_from_array(x), cw, b, stride));
}

Genome genome_from_parts(std::uint64_t genome_id, std::uint64_t parent_id, std::uint64_t init_seed,
                         const std::vector<std::pair<std::uint64_t, float>>& lineage) {
  Genome g;
  g.genome_id = genome_id;
  g.parent_id = parent_id;
  g.init_seed = Seed{init_seed};
  for (const auto& [seed, sigma] : lineage) g.lineage.push_back({Seed{seed}, sigma});
  return g;
}

TileTrackConfig track_from_dict(const py::dict& d) {
  TileTrackConfig cfg;
  if (d.contains("grid_w")) cfg.grid_w = d["grid_w"].cast<int>();
  if (d.contains("grid_h")) cfg.grid_h = d["grid_h"].cast<int>();
  if (d.contains("window")) cfg.window = d["window"].cast<int>();
  if (d.contains("frame_stack")) cfg.frame_stack = d["frame_stack"].cast<int>();
  if (d.contains("min_tiles")) cfg.min_tiles = d["min_tiles"].cast<int>();
  if (d.contains("max_tiles")) cfg.max_tiles = d["max_tiles"].cast<int>();
  if (d.contains("no_progress_limit")) cfg.no_progress_limit = d["no_progress_limit"].cast<int>();
  if (d.contains("step_cap")) cfg.step_cap = d["step_cap"].cast<std::uint32_t>();
  if (d.contains("done_fraction")) cfg.done_fraction = d["done_fraction"].cast<double>();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(lrne, m) {
  m.doc() = "low-rank neuroevolution engine";

  // ---- deterministic randomness ----
  py::class_<NoiseStream>(m, "NoiseStream")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("next_u64", &NoiseStream::next_u64)
      .def("next_unit", &NoiseStream::next_unit)
      .def("standard_normal", &NoiseStream::standard_normal);

  m.def(
      "derive_seed",
      [](std::uint64_t root, const std::vector<std::uint64_t>& labels) {
        return derive_seed(Seed{root}, std::span<const std::uint64_t>(labels));
      },
      py::arg("root"), py::arg("labels"));
  m.def(
      "derive_substream",
      [](std::uint64_t root, const std::vector<std::uint64_t>& labels) {
        return derive_substream(Seed{root}, std::span<const std::uint64_t>(labels));
      },
      py::arg("root"), py::arg("labels"));

  // ---- tensor ops ----
  m.def(
      "matmul",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
        return matrix_to_array(matmul(matrix_from_array(a), matrix_from_array(b)));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "softmax_rows",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
        return matrix_to_array(softmax_rows(matrix_from_array(a)));
      },
      py::arg("m"));
  m.def("conv2d", &conv2d_py, py::arg("x"), py::arg("weight"), py::arg("bias"), py::arg("stride"),
        "Valid (unpadded) cross-correlation over a (channels, h, w) volume.");

  // ---- architectures ----
  py::enum_<CountKind>(m, "CountKind")
      .value("genotype", CountKind::genotype)
      .value("phenotype", CountKind::phenotype);

  py::class_<ArchitectureSpec>(m, "Architecture")
      .def_readonly("name", &ArchitectureSpec::name)
      .def_property_readonly(
          "representation",
          [](const ArchitectureSpec& a) {
            return a.mode == Representation::factorized ? "factorized" : "direct";
          })
      .def_property_readonly("n_layers",
                             [](const ArchitectureSpec& a) { return a.layers.size(); })
      .def("to_json", [](const ArchitectureSpec& a) { return arch_to_json(a); })
      .def("__repr__", [](const ArchitectureSpec& a) {
        return "<Architecture '" + a.name + "' " +
               (a.mode == Representation::factorized ? "factorized" : "direct") + ">";
      });

  m.def("load_arch", &load_arch, py::arg("path"));
  m.def("arch_from_json", &arch_from_json, py::arg("text"));
  m.def("count_params", &count_params, py::arg("arch"), py::arg("which"));

  // ---- genomes and development ----
  py::class_<Genome>(m, "Genome")
      .def(py::init(&genome_from_parts), py::arg("genome_id"), py::arg("parent_id"),
           py::arg("init_seed"), py::arg("lineage") = std::vector<std::pair<std::uint64_t, float>>{})
      .def_readonly("genome_id", &Genome::genome_id)
      .def_readonly("parent_id", &Genome::parent_id)
      .def_property_readonly("init_seed", [](const Genome& g) { return g.init_seed.value; })
      .def_property_readonly("lineage",
                             [](const Genome& g) {
                               std::vector<std::pair<std::uint64_t, float>> out;
                               for (const auto& r : g.lineage) out.emplace_back(r.seed.value, r.sigma);
                               return out;
                             })
      .def("to_json", [](const Genome& g) { return genome_to_json(g); })
      .def("__repr__", [](const Genome& g) {
        return "<Genome id=" + std::to_string(g.genome_id) +
               " depth=" + std::to_string(g.lineage.size()) + ">";
      });

  m.def("genome_from_json", &genome_from_json, py::arg("text"));
  m.def(
      "mutate",
      [](const Genome& parent, std::uint64_t seed, float sigma, std::uint64_t child_id) {
        return mutate(parent, Seed{seed}, sigma, child_id);
      },
      py::arg("parent"), py::arg("seed"), py::arg("sigma"), py::arg("child_id"));

  py::class_<Phenotype>(m, "Phenotype")
      .def_property_readonly("n_layers", [](const Phenotype& p) { return p.layers.size(); })
      .def(
          "weight",
          [](const Phenotype& p, std::size_t layer, std::size_t tensor) {
            if (layer >= p.layers.size() || tensor >= p.layers[layer].size())
              throw std::out_of_range("no such developed tensor");
            return matrix_to_array(p.layers[layer][tensor].weight);
          },
          py::arg("layer"), py::arg("tensor") = 0,
          "Developed weight matrix of one tensor (conv weights in matrix form).")
      .def(
          "bias",
          [](const Phenotype& p, std::size_t layer, std::size_t tensor) {
            if (layer >= p.layers.size() || tensor >= p.layers[layer].size())
              throw std::out_of_range("no such developed tensor");
            const auto& b = p.layers[layer][tensor].bias;
            py::array_t<float> out(static_cast<py::ssize_t>(b.size()));
            std::copy(b.begin(), b.end(), out.mutable_data());
            return out;
          },
          py::arg("layer"), py::arg("tensor") = 0);

  m.def("develop", &develop, py::arg("genome"), py::arg("arch"));
  m.def("phenotype_hash", &phenotype_hash, py::arg("phenotype"));

  // ---- transformer ----
  m.def(
      "transformer_forward",
      [](const ArchitectureSpec& arch, const Phenotype& p, const std::vector<int>& tokens) {
        return matrix_to_array(transformer_forward(arch, p, tokens));
      },
      py::arg("arch"), py::arg("phenotype"), py::arg("tokens"),
      "Next-token logits, one row per position.");
  m.def("lm_fitness", &lm_fitness, py::arg("arch"), py::arg("phenotype"), py::arg("sequences"),
        "Mean next-token log-probability over all positions.");

  // ---- tokenizer ----
  py::class_<BpeModel>(m, "BpeModel")
      .def_property_readonly("vocab_size", [](const BpeModel& m_) { return m_.vocab_size(); })
      .def("to_text", [](const BpeModel& m_) { return bpe_to_text(m_); });
  m.def(
      "train_bpe",
      [](const std::string& text, int vocab) {
        const BpeTrainResult r = train_bpe(text, vocab);
        return py::make_tuple(r.model, r.reached_target);
      },
      py::arg("text"), py::arg("vocab_size"), "Returns (model, reached_target).");
  m.def("bpe_from_text", &bpe_from_text, py::arg("text"));
  m.def(
      "bpe_encode",
      [](const BpeModel& model, const std::string& text) { return encode(model, text); },
      py::arg("model"), py::arg("text"));
  m.def(
      "bpe_decode",
      [](const BpeModel& model, const std::vector<int>& tokens) {
        return decode(model, tokens);
      },
      py::arg("model"), py::arg("tokens"));

  // ---- TileTrack ----
  py::class_<TileTrack>(m, "TileTrack")
      .def(py::init([](std::uint64_t seed, const py::dict& config) {
             return TileTrack(Seed{seed}, track_from_dict(config));
           }),
           py::arg("seed"), py::arg("config") = py::dict())
      .def(
          "step",
          [](TileTrack& env, int action) {
            const auto r = env.step(static_cast<TrackAction>(action));
            return py::make_tuple(r.reward, r.done);
          },
          py::arg("action"), "Actions: 0 forward, 1 left, 2 right, 3 noop. Returns (reward, done).")
      .def("observation", [](const TileTrack& env) { return volume_to_array(env.observation()); })
      .def_property_readonly("done", &TileTrack::done)
      .def_property_readonly("score", &TileTrack::score)
      .def_property_readonly("tile_count", &TileTrack::tile_count)
      .def_property_readonly("total_steps", &TileTrack::total_steps);

  m.def(
      "generate_track",
      [](std::uint64_t seed, const py::dict& config) {
        std::vector<std::pair<int, int>> tiles;
        for (const TrackTile& t : generate_track(Seed{seed}, track_from_dict(config)))
          tiles.emplace_back(t.x, t.y);
        return tiles;
      },
      py::arg("seed"), py::arg("config") = py::dict());
  m.def(
      "run_episode",
      [](const ArchitectureSpec& arch, const Phenotype& p, std::uint64_t env_seed,
         const py::dict& config, std::uint32_t step_cap) {
        const EpisodeTrace t =
            run_episode(arch, p, Seed{env_seed}, track_from_dict(config), step_cap);
        return py::make_tuple(t.score, t.steps);
      },
      py::arg("arch"), py::arg("phenotype"), py::arg("env_seed"), py::arg("config") = py::dict(),
      py::arg("step_cap") = 1000, "Greedy policy rollout; returns (score, steps).");

  // ---- statistics ----
  m.def(
      "wilcoxon_rank_sum",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const RankSumResult r = wilcoxon_rank_sum(a, b);
        py::dict out;
        out["u_statistic"] = r.u_statistic;
        out["rank_sum"] = r.rank_sum;
        out["p_value"] = r.p_value;
        out["exact"] = r.exact;
        return out;
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "kruskal_wallis",
      [](const std::vector<std::vector<double>>& groups) {
        const KruskalResult r = kruskal_wallis(groups);
        return py::make_tuple(r.h_statistic, r.p_value);
      },
      py::arg("groups"), "Returns (h_statistic, p_value).");
  m.def("glass_delta",
        [](const std::vector<double>& t, const std::vector<double>& c) {
          return glass_delta(t, c);
        },
        py::arg("treatment"), py::arg("control"));

  // ---- full experiment harness ----
  m.def(
      "run_experiment",
      [](const std::string& config_path, bool resume) {
        const RunConfig cfg = load_run_config(config_path);
        const RunResult r = run_experiment(cfg, resume);
        py::dict out;
        out["generations"] = r.reports.size();
        out["genotype_params"] = r.genotype_params;
        out["phenotype_params"] = r.phenotype_params;
        py::list best_per_gen;
        for (const auto& rep : r.reports) best_per_gen.append(rep.best_fitness);
        out["best_fitness_per_generation"] = best_per_gen;
        if (r.best) {
          out["best_fitness"] = r.best->fitness;
          out["best_genome_id"] = r.best->genome.genome_id;
        }
        out["log"] = r.paths.log;
        out["best_genome_path"] = r.paths.best;
        return out;
      },
      py::arg("config_path"), py::arg("resume") = false,
      "Runs (or resumes) a full GA experiment from a run-config JSON file.");
}
