#include "lrne/layers.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lrne {

namespace {

int effective_rank(const LayerSpec& layer, Representation mode) {
  return mode == Representation::factorized ? layer.rank : 0;
}

TensorShape weight_shape(std::string name, int m, int n, int rank, int bias_len) {
  TensorShape s;
  s.name = std::move(name);
  s.m = m;
  s.n = n;
  s.rank = rank;
  s.bias_len = bias_len;
  return s;
}

}  // namespace

std::vector<TensorShape> LayerSpec::tensor_shapes(Representation mode) const {
  const int k = effective_rank(*this, mode);
  std::vector<TensorShape> shapes;
  switch (kind) {
    case LayerKind::dense:
      shapes.push_back(weight_shape("weight", in, out, k, out));
      break;
    case LayerKind::conv:
      shapes.push_back(weight_shape("weight", in_ch * kh * kw, out_ch, k, out_ch));
      break;
    case LayerKind::embedding:
      shapes.push_back(weight_shape("weight", vocab, dim, k, 0));
      if (tied_bias) shapes.push_back(weight_shape("logit_bias", 0, 0, 0, vocab));
      break;
    case LayerKind::attention: {
      const int inner = heads * head_dim;
      shapes.push_back(weight_shape("q", hidden, inner, k, inner));
      shapes.push_back(weight_shape("k", hidden, inner, k, inner));
      shapes.push_back(weight_shape("v", hidden, inner, k, inner));
      shapes.push_back(weight_shape("o", inner, hidden, k, hidden));
      break;
    }
    case LayerKind::layernorm:
      break;
  }
  return shapes;
}

double direct_init_std(int columns) {
  if (columns <= 0) throw std::invalid_argument("init std needs a positive column count");
  return std::sqrt(2.0 / static_cast<double>(columns));
}

double factor_init_std(int columns) {
  if (columns <= 0) throw std::invalid_argument("init std needs a positive column count");
  return std::sqrt(std::sqrt(2.0) / static_cast<double>(columns));
}

namespace {

void fill_normal(Matrix& m, NoiseStream& stream, double std_dev) {
  for (auto& x : m.data) x = static_cast<float>(stream.standard_normal() * std_dev);
}

}  // namespace

TensorGenotype init_tensor(const TensorShape& shape, NoiseStream& stream) {
  TensorGenotype g;
  g.shape = shape;
  g.factorized = shape.rank > 0;
  if (shape.m > 0) {
    if (g.factorized) {
      g.factor_u = Matrix(shape.m, shape.rank);
      g.factor_v = Matrix(shape.rank, shape.n);
      fill_normal(g.factor_u, stream, factor_init_std(shape.rank));
      fill_normal(g.factor_v, stream, factor_init_std(shape.n));
    } else {
      g.weight = Matrix(shape.m, shape.n);
      fill_normal(g.weight, stream, direct_init_std(shape.n));
    }
  }
  g.bias.assign(static_cast<std::size_t>(shape.bias_len), 0.0f);
  return g;
}

void mutate_tensor(TensorGenotype& tensor, NoiseStream& stream, float sigma,
                   FactorNoise factor_noise) {
  const TensorShape& shape = tensor.shape;
  if (shape.m > 0) {
    if (tensor.factorized) {
      const double rate = std::sqrt(static_cast<double>(sigma));
      const double std_u = factor_noise == FactorNoise::factor_init
                               ? factor_init_std(shape.rank)
                               : direct_init_std(shape.rank);
      const double std_v = factor_noise == FactorNoise::factor_init
                               ? factor_init_std(shape.n)
                               : direct_init_std(shape.n);
      for (auto& x : tensor.factor_u.data)
        x += static_cast<float>(stream.standard_normal() * rate * std_u);
      for (auto& x : tensor.factor_v.data)
        x += static_cast<float>(stream.standard_normal() * rate * std_v);
    } else {
      const double std_w = direct_init_std(shape.n);
      for (auto& x : tensor.weight.data)
        x += static_cast<float>(stream.standard_normal() * sigma * std_w);
    }
  }
  if (!tensor.bias.empty()) {
    const double std_b = direct_init_std(static_cast<int>(tensor.bias.size()));
    for (auto& x : tensor.bias)
      x += static_cast<float>(stream.standard_normal() * sigma * std_b);
  }
}

DevelopedTensor develop_tensor(const TensorGenotype& g) {
  DevelopedTensor out;
  if (g.shape.m > 0) {
    out.weight = g.factorized ? matmul(g.factor_u, g.factor_v) : g.weight;
  }
  out.bias = g.bias;
  return out;
}

ParamCount count_layer_params(const LayerSpec& layer, Representation mode) {
  ParamCount count;
  for (const TensorShape& s : layer.tensor_shapes(mode)) {
    const std::int64_t dense = static_cast<std::int64_t>(s.m) * s.n;
    count.phenotype += dense + s.bias_len;
    if (s.rank > 0) {
      count.genotype += static_cast<std::int64_t>(s.rank) * (s.m + s.n) + s.bias_len;
    } else {
      count.genotype += dense + s.bias_len;
    }
  }
  return count;
}

std::int64_t count_params(const ArchitectureSpec& arch, CountKind which) {
  std::int64_t total = 0;
  for (const LayerSpec& layer : arch.layers) {
    const ParamCount c = count_layer_params(layer, arch.mode);
    total += which == CountKind::genotype ? c.genotype : c.phenotype;
  }
  return total;
}

ArchitectureSpec make_transformer_arch(const TransformerConfig& cfg, Representation mode,
                                       std::string name) {
  ArchitectureSpec arch;
  arch.name = std::move(name);
  arch.mode = mode;
  arch.transformer = cfg;

  LayerSpec embed;
  embed.kind = LayerKind::embedding;
  embed.vocab = cfg.vocab_size;
  embed.dim = cfg.hidden_dim;
  embed.tied_bias = cfg.tied_head;
  embed.rank = cfg.embedding_rank;
  arch.layers.push_back(embed);

  for (int b = 0; b < cfg.n_blocks; ++b) {
    LayerSpec ln;
    ln.kind = LayerKind::layernorm;
    ln.norm_dim = cfg.hidden_dim;
    arch.layers.push_back(ln);

    LayerSpec attn;
    attn.kind = LayerKind::attention;
    attn.hidden = cfg.hidden_dim;
    attn.heads = cfg.n_heads;
    attn.head_dim = cfg.head_dim;
    attn.rank = cfg.block_rank;
    arch.layers.push_back(attn);

    arch.layers.push_back(ln);

    LayerSpec ff1;
    ff1.kind = LayerKind::dense;
    ff1.in = cfg.hidden_dim;
    ff1.out = cfg.ff_dim;
    ff1.rank = cfg.block_rank;
    arch.layers.push_back(ff1);

    LayerSpec ff2;
    ff2.kind = LayerKind::dense;
    ff2.in = cfg.ff_dim;
    ff2.out = cfg.hidden_dim;
    ff2.rank = cfg.block_rank;
    arch.layers.push_back(ff2);
  }

  if (!cfg.tied_head) {
    LayerSpec head;
    head.kind = LayerKind::dense;
    head.in = cfg.hidden_dim;
    head.out = cfg.vocab_size;
    head.rank = cfg.embedding_rank;
    arch.layers.push_back(head);
  }
  return arch;
}

std::vector<float> feedforward(const ArchitectureSpec& arch, const Phenotype& p,
                               const Volume& input) {
  if (p.layers.size() != arch.layers.size())
    throw std::invalid_argument("phenotype does not match architecture");

  Volume vol = input;
  std::vector<float> vec;
  bool flat = false;

  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerSpec& layer = arch.layers[li];
    const bool last = li + 1 == arch.layers.size();
    if (layer.kind == LayerKind::conv) {
      if (flat) throw std::invalid_argument("conv layer after flatten");
      const DevelopedTensor& t = p.layers[li][0];
      vol = conv2d_forward(vol, t.conv, t.bias, layer.stride);
      if (!last)
        for (auto& x : vol.data) x = x > 0.0f ? x : 0.0f;
    } else if (layer.kind == LayerKind::dense) {
      if (!flat) {
        vec = vol.data;  // channel-major flatten
        flat = true;
      }
      const DevelopedTensor& t = p.layers[li][0];
      const Matrix& w = t.weight;
      if (static_cast<int>(vec.size()) != w.rows)
        throw std::invalid_argument("dense input size mismatch");
      std::vector<float> out(static_cast<std::size_t>(w.cols));
      for (int j = 0; j < w.cols; ++j) {
        double acc = t.bias.empty() ? 0.0 : static_cast<double>(t.bias[j]);
        for (int i = 0; i < w.rows; ++i)
          acc += static_cast<double>(vec[i]) * static_cast<double>(w.at(i, j));
        out[static_cast<std::size_t>(j)] = static_cast<float>(acc);
      }
      vec = std::move(out);
      if (!last)
        for (auto& x : vec) x = x > 0.0f ? x : 0.0f;
    } else {
      throw std::invalid_argument("feedforward supports conv and dense layers only");
    }
  }
  if (!flat) throw std::invalid_argument("feedforward network produced no vector output");
  return vec;
}

namespace {

using nlohmann::json;

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv: return "conv";
    case LayerKind::embedding: return "embedding";
    case LayerKind::attention: return "attention";
    case LayerKind::layernorm: return "layernorm";
  }
  return "?";
}

LayerKind kind_from_name(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "conv") return LayerKind::conv;
  if (s == "embedding") return LayerKind::embedding;
  if (s == "attention") return LayerKind::attention;
  if (s == "layernorm") return LayerKind::layernorm;
  throw std::runtime_error("unknown layer kind '" + s + "'");
}

json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = kind_name(l.kind);
  switch (l.kind) {
    case LayerKind::dense:
      j["in"] = l.in;
      j["out"] = l.out;
      break;
    case LayerKind::conv:
      j["in_ch"] = l.in_ch;
      j["out_ch"] = l.out_ch;
      j["kernel"] = {l.kh, l.kw};
      j["stride"] = l.stride;
      break;
    case LayerKind::embedding:
      j["vocab"] = l.vocab;
      j["dim"] = l.dim;
      j["tied_bias"] = l.tied_bias;
      break;
    case LayerKind::attention:
      j["hidden"] = l.hidden;
      j["heads"] = l.heads;
      j["head_dim"] = l.head_dim;
      break;
    case LayerKind::layernorm:
      j["dim"] = l.norm_dim;
      break;
  }
  if (l.kind != LayerKind::layernorm) j["rank"] = l.rank;
  return j;
}

int get_positive(const json& j, const char* field, const std::string& ctx) {
  if (!j.contains(field))
    throw std::runtime_error("architecture " + ctx + ": missing field '" + field + "'");
  const int v = j.at(field).get<int>();
  if (v <= 0)
    throw std::runtime_error("architecture " + ctx + ": field '" + field + "' must be positive");
  return v;
}

LayerSpec layer_from_json(const json& j, std::size_t index) {
  const std::string ctx = "layers[" + std::to_string(index) + "]";
  LayerSpec l;
  l.kind = kind_from_name(j.at("kind").get<std::string>());
  switch (l.kind) {
    case LayerKind::dense:
      l.in = get_positive(j, "in", ctx);
      l.out = get_positive(j, "out", ctx);
      break;
    case LayerKind::conv: {
      l.in_ch = get_positive(j, "in_ch", ctx);
      l.out_ch = get_positive(j, "out_ch", ctx);
      const auto kernel = j.at("kernel");
      if (!kernel.is_array() || kernel.size() != 2)
        throw std::runtime_error("architecture " + ctx + ": 'kernel' must be [kh, kw]");
      l.kh = kernel[0].get<int>();
      l.kw = kernel[1].get<int>();
      if (l.kh <= 0 || l.kw <= 0)
        throw std::runtime_error("architecture " + ctx + ": kernel dims must be positive");
      l.stride = j.value("stride", 1);
      if (l.stride <= 0)
        throw std::runtime_error("architecture " + ctx + ": stride must be positive");
      break;
    }
    case LayerKind::embedding:
      l.vocab = get_positive(j, "vocab", ctx);
      l.dim = get_positive(j, "dim", ctx);
      l.tied_bias = j.value("tied_bias", false);
      break;
    case LayerKind::attention:
      l.hidden = get_positive(j, "hidden", ctx);
      l.heads = get_positive(j, "heads", ctx);
      l.head_dim = get_positive(j, "head_dim", ctx);
      break;
    case LayerKind::layernorm:
      l.norm_dim = get_positive(j, "dim", ctx);
      break;
  }
  l.rank = j.value("rank", 0);
  if (l.rank < 0) throw std::runtime_error("architecture " + ctx + ": rank must be >= 0");
  return l;
}

TransformerConfig transformer_from_json(const json& j) {
  TransformerConfig cfg;
  cfg.n_blocks = j.value("n_blocks", cfg.n_blocks);
  cfg.n_heads = j.value("n_heads", cfg.n_heads);
  cfg.head_dim = j.value("head_dim", cfg.head_dim);
  cfg.hidden_dim = j.value("hidden_dim", cfg.hidden_dim);
  cfg.ff_dim = j.value("ff_dim", cfg.ff_dim);
  cfg.vocab_size = j.value("vocab_size", cfg.vocab_size);
  cfg.max_seq_len = j.value("max_seq_len", cfg.max_seq_len);
  cfg.tied_head = j.value("tied_head", cfg.tied_head);
  cfg.embedding_rank = j.value("embedding_rank", cfg.embedding_rank);
  cfg.block_rank = j.value("block_rank", cfg.block_rank);
  for (int v : {cfg.n_blocks, cfg.n_heads, cfg.head_dim, cfg.hidden_dim, cfg.ff_dim,
                cfg.vocab_size, cfg.max_seq_len})
    if (v <= 0) throw std::runtime_error("architecture transformer: dims must be positive");
  return cfg;
}

json transformer_to_json(const TransformerConfig& cfg) {
  return json{{"n_blocks", cfg.n_blocks},
              {"n_heads", cfg.n_heads},
              {"head_dim", cfg.head_dim},
              {"hidden_dim", cfg.hidden_dim},
              {"ff_dim", cfg.ff_dim},
              {"vocab_size", cfg.vocab_size},
              {"max_seq_len", cfg.max_seq_len},
              {"tied_head", cfg.tied_head},
              {"embedding_rank", cfg.embedding_rank},
              {"block_rank", cfg.block_rank}};
}

}  // namespace

std::string arch_to_json(const ArchitectureSpec& arch) {
  json j;
  j["name"] = arch.name;
  j["representation"] = arch.mode == Representation::factorized ? "factorized" : "direct";
  j["activation"] = arch.activation;
  j["factor_noise"] =
      arch.factor_noise == FactorNoise::factor_init ? "factor_init" : "direct_init";
  if (arch.transformer) {
    j["transformer"] = transformer_to_json(*arch.transformer);
  } else {
    json layers = json::array();
    for (const LayerSpec& l : arch.layers) layers.push_back(layer_to_json(l));
    j["layers"] = layers;
  }
  return j.dump(2);
}

ArchitectureSpec arch_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  ArchitectureSpec arch;
  arch.name = j.value("name", "unnamed");
  const std::string rep = j.value("representation", "direct");
  if (rep == "direct" || rep == "nonfactorized") {
    arch.mode = Representation::direct;
  } else if (rep == "factorized") {
    arch.mode = Representation::factorized;
  } else {
    throw std::runtime_error("architecture: unknown representation '" + rep + "'");
  }
  arch.activation = j.value("activation", "relu");
  if (arch.activation != "relu")
    throw std::runtime_error("architecture: only relu activation is supported");
  const std::string fn = j.value("factor_noise", "factor_init");
  if (fn == "factor_init") {
    arch.factor_noise = FactorNoise::factor_init;
  } else if (fn == "direct_init") {
    arch.factor_noise = FactorNoise::direct_init;
  } else {
    throw std::runtime_error("architecture: unknown factor_noise '" + fn + "'");
  }
  if (j.contains("transformer")) {
    const TransformerConfig cfg = transformer_from_json(j.at("transformer"));
    ArchitectureSpec built = make_transformer_arch(cfg, arch.mode, arch.name);
    built.activation = arch.activation;
    built.factor_noise = arch.factor_noise;
    return built;
  }
  if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").empty())
    throw std::runtime_error("architecture: needs a non-empty 'layers' array or 'transformer'");
  std::size_t idx = 0;
  for (const json& lj : j.at("layers")) arch.layers.push_back(layer_from_json(lj, idx++));
  return arch;
}

ArchitectureSpec load_arch(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open architecture file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return arch_from_json(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("architecture file '" + path + "': " + e.what());
  }
}

}  // namespace lrne
