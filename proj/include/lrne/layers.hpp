#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrne/rng.hpp"
#include "lrne/tensor.hpp"

namespace lrne {

enum class Representation { direct, factorized };

enum class LayerKind { dense, conv, embedding, attention, layernorm };

/// Which init distribution scales factor mutation noise. `factor_init`
/// (default) draws mutation noise from the factor's own init distribution,
/// std sqrt(sqrt(2)/c); `direct_init` uses the non-factored rule
/// sqrt(2/c). Part of the wire contract: it changes phenotypes.
enum class FactorNoise { factor_init, direct_init };

/// Shape of one evolvable tensor: an optional m x n weight (possibly
/// factorized at rank k) plus an optional direct bias vector. m == 0 marks
/// a bias-only tensor (used for the tied LM head's logit bias).
struct TensorShape {
  std::string name;
  int m = 0;
  int n = 0;
  int rank = 0;  // 0 = direct even when the architecture is factorized
  int bias_len = 0;
};

struct TransformerConfig {
  int n_blocks = 3;
  int n_heads = 4;
  int head_dim = 4;
  int hidden_dim = 32;
  int ff_dim = 128;
  int vocab_size = 2048;
  int max_seq_len = 256;
  bool tied_head = true;  // logits via embedding transpose + vocab bias
  int embedding_rank = 32;
  int block_rank = 4;

  int inner_dim() const { return n_heads * head_dim; }
};

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  // dense
  int in = 0;
  int out = 0;
  // conv
  int in_ch = 0;
  int out_ch = 0;
  int kh = 0;
  int kw = 0;
  int stride = 1;
  // embedding
  int vocab = 0;
  int dim = 0;
  bool tied_bias = false;
  // attention
  int hidden = 0;
  int heads = 0;
  int head_dim = 0;
  // layernorm
  int norm_dim = 0;
  // factorization rank when the architecture is factorized; 0 keeps the
  // layer direct (RL output layers)
  int rank = 0;

  std::vector<TensorShape> tensor_shapes(Representation mode) const;
};

/// Declarative network description shared by every individual in a run.
struct ArchitectureSpec {
  std::string name;
  Representation mode = Representation::direct;
  std::string activation = "relu";
  FactorNoise factor_noise = FactorNoise::factor_init;
  std::vector<LayerSpec> layers;
  std::optional<TransformerConfig> transformer;

  std::vector<TensorShape> layer_tensor_shapes(std::size_t layer) const {
    return layers[layer].tensor_shapes(mode);
  }
};

/// One evolvable tensor: the mutated representation (direct weight or a
/// low-rank factor pair) plus its direct bias.
struct TensorGenotype {
  TensorShape shape;
  bool factorized = false;
  Matrix weight;          // direct mode
  Matrix factor_u;        // m x k
  Matrix factor_v;        // k x n
  std::vector<float> bias;
};

struct LayerGenotype {
  std::vector<TensorGenotype> tensors;
};

/// The full evolved parameter set of one individual (genotype side).
struct GenotypeState {
  std::vector<LayerGenotype> layers;
};

/// One developed tensor: the weight products, materialized. Conv layers
/// additionally carry the 4-D reshape of the developed matrix.
struct DevelopedTensor {
  Matrix weight;
  ConvWeight conv;
  bool is_conv = false;
  std::vector<float> bias;
};

/// Fully materialized parameter set, ready for forward evaluation.
struct Phenotype {
  std::vector<std::vector<DevelopedTensor>> layers;
};

/// Kaiming-style init std for a direct matrix with c columns: sqrt(2/c).
double direct_init_std(int columns);
/// Factor init std: sqrt(sqrt(2)/c). The product of two factors initialized
/// this way has entry variance matching the direct rule.
double factor_init_std(int columns);

/// Draws one tensor's initial genotype from `stream`. Direct weights are
/// N(0, 2/c); each factor is N(0, sqrt(2)/c) with c its own column count;
/// biases start at zero and consume no draws. Draw order (row-major weight
/// or U then V, never the bias) is part of the wire contract.
TensorGenotype init_tensor(const TensorShape& shape, NoiseStream& stream);

/// Adds one mutation step to a tensor in place. Direct weights and all
/// biases move by sigma times their init-rule std per entry; factors move
/// by sqrt(sigma) times the std chosen by `factor_noise`.
void mutate_tensor(TensorGenotype& tensor, NoiseStream& stream, float sigma,
                   FactorNoise factor_noise);

/// Develops one tensor: direct passes through, factorized multiplies U*V.
DevelopedTensor develop_tensor(const TensorGenotype& g);

struct ParamCount {
  std::int64_t genotype = 0;
  std::int64_t phenotype = 0;
};

enum class CountKind { genotype, phenotype };

ParamCount count_layer_params(const LayerSpec& layer, Representation mode);
std::int64_t count_params(const ArchitectureSpec& arch, CountKind which);

/// Builds the decoder-transformer layer list for a TransformerConfig:
/// embedding, then per block [layernorm, attention, layernorm, ff1, ff2],
/// plus an untied head layer when tied_head is off.
ArchitectureSpec make_transformer_arch(const TransformerConfig& cfg, Representation mode,
                                       std::string name);

/// Runs a conv/dense policy stack on a 3-D input: ReLU after every layer
/// except the last, channel-major flatten between conv and dense.
std::vector<float> feedforward(const ArchitectureSpec& arch, const Phenotype& p,
                               const Volume& input);

// JSON (de)serialization of ArchitectureSpec; schema in docs/config_schema.md.
std::string arch_to_json(const ArchitectureSpec& arch);
ArchitectureSpec arch_from_json(const std::string& json_text);
ArchitectureSpec load_arch(const std::string& path);

}  // namespace lrne
