#pragma once

#include <span>
#include <vector>

#include "lrne/layers.hpp"
#include "lrne/tensor.hpp"

namespace lrne {

/// Runs the forward-only decoder on one token sequence and returns the
/// next-token logits, one row per position. Pre-norm blocks: x plus
/// attention of layernorm(x), then x plus feedforward of layernorm(x).
/// Attention is causal by construction: row i only reads rows 0..i.
/// Requires arch.transformer to be set and the phenotype to match.
Matrix transformer_forward(const ArchitectureSpec& arch, const Phenotype& p,
                           std::span<const int> tokens);

/// Mean log-probability of the next token across all positions of all
/// sequences: sum over sequences of sum_i ln p(t[i+1] | t[..i]), divided by
/// the total number of predicted positions. Always <= 0; sequences longer
/// than max_seq_len are truncated, and every sequence needs length >= 2.
double lm_fitness(const ArchitectureSpec& arch, const Phenotype& p,
                  const std::vector<std::vector<int>>& sequences);

/// Sinusoidal positional encoding value at (position, channel).
float positional_encoding(int position, int channel, int dim);

/// Row-wise standardization (mean 0, variance 1, epsilon 1e-5), the frozen
/// layernorm used between blocks. No learned scale or shift.
void layernorm_rows(Matrix& m);

}  // namespace lrne
