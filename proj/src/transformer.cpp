#include "lrne/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lrne {

namespace {

constexpr float kLnEpsilon = 1e-5f;

Matrix affine(const Matrix& x, const Matrix& w, const std::vector<float>& bias) {
  Matrix out = matmul(x, w);
  if (!bias.empty()) {
    if (static_cast<int>(bias.size()) != out.cols)
      throw std::invalid_argument("bias length does not match output width");
    for (int i = 0; i < out.rows; ++i)
      for (int j = 0; j < out.cols; ++j) out.at(i, j) += bias[static_cast<std::size_t>(j)];
  }
  return out;
}

/// Multi-head attention with causal masking by construction: the score and
/// context loops for row i never touch rows past i.
Matrix attention(const Matrix& h, const std::vector<DevelopedTensor>& tensors, int heads,
                 int head_dim) {
  const Matrix q = affine(h, tensors[0].weight, tensors[0].bias);
  const Matrix k = affine(h, tensors[1].weight, tensors[1].bias);
  const Matrix v = affine(h, tensors[2].weight, tensors[2].bias);
  const int len = h.rows;
  const int inner = heads * head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Matrix ctx(len, inner);
  std::vector<double> scores;
  for (int hd = 0; hd < heads; ++hd) {
    const int off = hd * head_dim;
    for (int i = 0; i < len; ++i) {
      scores.assign(static_cast<std::size_t>(i) + 1, 0.0);
      double max_score = -std::numeric_limits<double>::infinity();
      for (int j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (int d = 0; d < head_dim; ++d)
          dot += static_cast<double>(q.at(i, off + d)) * static_cast<double>(k.at(j, off + d));
        scores[static_cast<std::size_t>(j)] = dot * scale;
        if (scores[static_cast<std::size_t>(j)] > max_score)
          max_score = scores[static_cast<std::size_t>(j)];
      }
      double denom = 0.0;
      for (int j = 0; j <= i; ++j) {
        scores[static_cast<std::size_t>(j)] = std::exp(scores[static_cast<std::size_t>(j)] - max_score);
        denom += scores[static_cast<std::size_t>(j)];
      }
      for (int d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (int j = 0; j <= i; ++j)
          acc += scores[static_cast<std::size_t>(j)] * static_cast<double>(v.at(j, off + d));
        ctx.at(i, off + d) = static_cast<float>(acc / denom);
      }
    }
  }
  return affine(ctx, tensors[3].weight, tensors[3].bias);
}

}  // namespace

float positional_encoding(int position, int channel, int dim) {
  const int pair = channel / 2;
  const double angle =
      position / std::pow(10000.0, 2.0 * pair / static_cast<double>(dim));
  return static_cast<float>(channel % 2 == 0 ? std::sin(angle) : std::cos(angle));
}

void layernorm_rows(Matrix& m) {
  for (int i = 0; i < m.rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) sum += m.at(i, j);
    const double mean = sum / m.cols;
    double var = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      const double d = m.at(i, j) - mean;
      var += d * d;
    }
    var /= m.cols;
    const double inv = 1.0 / std::sqrt(var + kLnEpsilon);
    for (int j = 0; j < m.cols; ++j)
      m.at(i, j) = static_cast<float>((m.at(i, j) - mean) * inv);
  }
}

Matrix transformer_forward(const ArchitectureSpec& arch, const Phenotype& p,
                           std::span<const int> tokens) {
  if (!arch.transformer)
    throw std::invalid_argument("architecture has no transformer configuration");
  const TransformerConfig& cfg = *arch.transformer;
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  if (static_cast<int>(tokens.size()) > cfg.max_seq_len)
    throw std::invalid_argument("sequence exceeds max_seq_len");
  if (p.layers.size() != arch.layers.size())
    throw std::invalid_argument("phenotype does not match architecture");

  const int len = static_cast<int>(tokens.size());
  const Matrix& embed = p.layers[0][0].weight;
  Matrix x(len, cfg.hidden_dim);
  for (int i = 0; i < len; ++i) {
    const int t = tokens[static_cast<std::size_t>(i)];
    if (t < 0 || t >= cfg.vocab_size)
      throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary");
    for (int j = 0; j < cfg.hidden_dim; ++j)
      x.at(i, j) = embed.at(t, j) + positional_encoding(i, j, cfg.hidden_dim);
  }

  for (int b = 0; b < cfg.n_blocks; ++b) {
    const std::size_t base = 1 + 5 * static_cast<std::size_t>(b);
    Matrix h = x;
    layernorm_rows(h);
    const Matrix attn = attention(h, p.layers[base + 1], cfg.n_heads, cfg.head_dim);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += attn.data[i];

    Matrix h2 = x;
    layernorm_rows(h2);
    Matrix ff = affine(h2, p.layers[base + 3][0].weight, p.layers[base + 3][0].bias);
    relu_inplace(ff.data);
    const Matrix ff2 = affine(ff, p.layers[base + 4][0].weight, p.layers[base + 4][0].bias);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += ff2.data[i];
  }

  if (cfg.tied_head) {
    Matrix logits = matmul(x, transpose(embed));
    const std::vector<float>& logit_bias = p.layers[0][1].bias;
    for (int i = 0; i < logits.rows; ++i)
      for (int j = 0; j < logits.cols; ++j)
        logits.at(i, j) += logit_bias[static_cast<std::size_t>(j)];
    return logits;
  }
  const auto& head = p.layers.back()[0];
  return affine(x, head.weight, head.bias);
}

double lm_fitness(const ArchitectureSpec& arch, const Phenotype& p,
                  const std::vector<std::vector<int>>& sequences) {
  if (!arch.transformer)
    throw std::invalid_argument("architecture has no transformer configuration");
  const TransformerConfig& cfg = *arch.transformer;
  double total = 0.0;
  std::int64_t positions = 0;
  for (const std::vector<int>& seq : sequences) {
    if (seq.size() < 2)
      throw std::invalid_argument("language-model sequences need at least two tokens");
    const std::size_t len =
        std::min(seq.size(), static_cast<std::size_t>(cfg.max_seq_len));
    const Matrix logits =
        transformer_forward(arch, p, std::span<const int>(seq.data(), len));
    for (std::size_t i = 0; i + 1 < len; ++i) {
      const int target = seq[i + 1];
      if (target < 0 || target >= cfg.vocab_size)
        throw std::out_of_range("target token outside vocabulary");
      double max_logit = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < logits.cols; ++j)
        max_logit = std::max(max_logit, static_cast<double>(logits.at(static_cast<int>(i), j)));
      double denom = 0.0;
      for (int j = 0; j < logits.cols; ++j)
        denom += std::exp(static_cast<double>(logits.at(static_cast<int>(i), j)) - max_logit);
      total += static_cast<double>(logits.at(static_cast<int>(i), target)) - max_logit -
               std::log(denom);
      ++positions;
    }
  }
  if (positions == 0) throw std::invalid_argument("no next-token positions to score");
  return total / static_cast<double>(positions);
}

}  // namespace lrne
