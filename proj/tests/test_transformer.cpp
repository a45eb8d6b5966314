#include <doctest.h>

#include <cmath>
#include <vector>

#include "lrne/genome.hpp"
#include "lrne/layers.hpp"
#include "lrne/transformer.hpp"

using namespace lrne;

namespace {

TransformerConfig small_cfg() {
  TransformerConfig cfg;
  cfg.n_blocks = 2;
  cfg.n_heads = 2;
  cfg.head_dim = 3;
  cfg.hidden_dim = 8;
  cfg.ff_dim = 16;
  cfg.vocab_size = 11;
  cfg.max_seq_len = 32;
  return cfg;
}

/// Phenotype with every parameter zero, matching the arch's shapes.
Phenotype zero_phenotype(const ArchitectureSpec& arch) {
  Phenotype p;
  p.layers.resize(arch.layers.size());
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    for (const TensorShape& s : arch.layer_tensor_shapes(li)) {
      DevelopedTensor t;
      if (s.m > 0) t.weight = Matrix(s.m, s.n);
      t.bias.assign(static_cast<std::size_t>(s.bias_len), 0.0f);
      p.layers[li].push_back(std::move(t));
    }
  }
  return p;
}

}  // namespace

TEST_CASE("positional encoding endpoints") {
  CHECK(positional_encoding(0, 0, 32) == 0.0f);   // sin(0)
  CHECK(positional_encoding(0, 1, 32) == 1.0f);   // cos(0)
  CHECK(positional_encoding(2, 0, 32) == doctest::Approx(std::sin(2.0)));
  CHECK(positional_encoding(2, 1, 32) == doctest::Approx(std::cos(2.0)));
  CHECK(positional_encoding(3, 2, 32) ==
        doctest::Approx(std::sin(3.0 / std::pow(10000.0, 2.0 / 32.0))));
  CHECK(positional_encoding(3, 3, 32) ==
        doctest::Approx(std::cos(3.0 / std::pow(10000.0, 2.0 / 32.0))));
}

TEST_CASE("layernorm standardizes each row") {
  Matrix m(2, 4);
  m.data = {1, 2, 3, 4, 10, 10, 10, 10};
  layernorm_rows(m);
  for (int i = 0; i < 2; ++i) {
    double sum = 0.0, sq = 0.0;
    for (int j = 0; j < 4; ++j) {
      sum += m.at(i, j);
      sq += static_cast<double>(m.at(i, j)) * m.at(i, j);
    }
    CHECK(sum == doctest::Approx(0.0).epsilon(1e-5));
    if (i == 0) CHECK(sq / 4.0 == doctest::Approx(1.0).epsilon(1e-4));
  }
  // constant rows collapse to zero rather than dividing by zero
  for (int j = 0; j < 4; ++j) CHECK(m.at(1, j) == doctest::Approx(0.0));
  CHECK(m.at(0, 0) == doctest::Approx((1.0 - 2.5) / std::sqrt(1.25 + 1e-5)));
}

TEST_CASE("zero phenotype gives uniform logits and fitness -ln(vocab)") {
  const TransformerConfig cfg = small_cfg();
  const ArchitectureSpec arch = make_transformer_arch(cfg, Representation::direct, "t");
  const Phenotype p = zero_phenotype(arch);
  const std::vector<std::vector<int>> seqs{{1, 2, 3, 4}, {5, 6}};
  const double f = lm_fitness(arch, p, seqs);
  CHECK(f == doctest::Approx(-std::log(11.0)).epsilon(1e-9));

  TransformerConfig big = cfg;
  big.vocab_size = 2048;
  const ArchitectureSpec arch2 = make_transformer_arch(big, Representation::direct, "t2");
  const double f2 = lm_fitness(arch2, zero_phenotype(arch2), {{0, 1, 2}});
  CHECK(f2 == doctest::Approx(-std::log(2048.0)).epsilon(1e-9));
}

TEST_CASE("logit bias shapes the distribution exactly when weights are zero") {
  const TransformerConfig cfg = small_cfg();
  const ArchitectureSpec arch = make_transformer_arch(cfg, Representation::direct, "t");
  Phenotype p = zero_phenotype(arch);
  // bias = ln(1..11): softmax gives p(j) = (j+1)/66
  std::vector<float>& bias = p.layers[0][1].bias;
  for (int j = 0; j < 11; ++j) bias[static_cast<std::size_t>(j)] = std::log(j + 1.0f);
  const std::vector<std::vector<int>> seqs{{0, 3}};  // predict token 3 once
  const double f = lm_fitness(arch, p, seqs);
  CHECK(f == doctest::Approx(std::log(4.0 / 66.0)).epsilon(1e-6));
}

TEST_CASE("blocks that output zero leave the tied head readable in closed form") {
  const TransformerConfig cfg = small_cfg();
  const ArchitectureSpec arch = make_transformer_arch(cfg, Representation::direct, "t");
  Phenotype p = zero_phenotype(arch);
  Matrix& e = p.layers[0][0].weight;
  for (int t = 0; t < e.rows; ++t)
    for (int j = 0; j < e.cols; ++j)
      e.at(t, j) = 0.01f * static_cast<float>(t) - 0.02f * static_cast<float>(j);

  const std::vector<int> tokens{4, 9};
  const Matrix logits = transformer_forward(arch, p, tokens);
  REQUIRE(logits.rows == 2);
  REQUIRE(logits.cols == 11);
  for (int i = 0; i < 2; ++i)
    for (int v = 0; v < 11; ++v) {
      double expected = 0.0;
      for (int j = 0; j < cfg.hidden_dim; ++j) {
        const double xj = e.at(tokens[static_cast<std::size_t>(i)], j) +
                          positional_encoding(i, j, cfg.hidden_dim);
        expected += xj * e.at(v, j);
      }
      CHECK(logits.at(i, v) == doctest::Approx(expected).epsilon(1e-5));
    }
}

TEST_CASE("attention is causal: a future token cannot change earlier logits") {
  const TransformerConfig cfg = small_cfg();
  const ArchitectureSpec arch = make_transformer_arch(cfg, Representation::factorized, "t");
  Genome g;
  g.init_seed = Seed{301};
  const Phenotype p = develop(g, arch);

  const std::vector<int> a{5, 6, 7, 8};
  const std::vector<int> b{5, 6, 9, 10};
  const Matrix la = transformer_forward(arch, p, a);
  const Matrix lb = transformer_forward(arch, p, b);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < la.cols; ++j) CHECK(la.at(i, j) == lb.at(i, j));
  // the diverging position must actually diverge
  bool row2_differs = false;
  for (int j = 0; j < la.cols; ++j)
    if (la.at(2, j) != lb.at(2, j)) row2_differs = true;
  CHECK(row2_differs);

  // extending the sequence leaves existing rows bit-identical
  const std::vector<int> prefix{5, 6, 7};
  const Matrix lp = transformer_forward(arch, p, prefix);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < la.cols; ++j) CHECK(lp.at(i, j) == la.at(i, j));
}

TEST_CASE("forward on a developed genome is finite and shaped") {
  const TransformerConfig cfg = small_cfg();
  const ArchitectureSpec arch = make_transformer_arch(cfg, Representation::direct, "t");
  Genome g;
  g.init_seed = Seed{17};
  const Phenotype p = develop(mutate(g, Seed{18}, 0.01f, 2), arch);
  const std::vector<int> tokens{0, 10, 3, 7, 1};
  const Matrix logits = transformer_forward(arch, p, tokens);
  REQUIRE(logits.rows == 5);
  REQUIRE(logits.cols == 11);
  for (float v : logits.data) CHECK(std::isfinite(v));
  const double f = lm_fitness(arch, p, {{0, 10, 3, 7, 1}});
  CHECK(f <= 0.0);
  CHECK(std::isfinite(f));
}

TEST_CASE("sequences beyond max_seq_len are truncated for fitness") {
  TransformerConfig cfg = small_cfg();
  cfg.max_seq_len = 4;
  const ArchitectureSpec arch = make_transformer_arch(cfg, Representation::direct, "t");
  Genome g;
  g.init_seed = Seed{23};
  const Phenotype p = develop(g, arch);
  std::vector<int> long_seq{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> cut{1, 2, 3, 4};
  CHECK(lm_fitness(arch, p, {long_seq}) == lm_fitness(arch, p, {cut}));
}

TEST_CASE("input validation") {
  const TransformerConfig cfg = small_cfg();
  const ArchitectureSpec arch = make_transformer_arch(cfg, Representation::direct, "t");
  const Phenotype p = zero_phenotype(arch);
  CHECK_THROWS(lm_fitness(arch, p, {{5}}));                        // too short
  CHECK_THROWS(lm_fitness(arch, p, {{5, 11}}));                    // target out of vocab
  CHECK_THROWS(transformer_forward(arch, p, std::vector<int>{11}));  // token out of vocab
  CHECK_THROWS(transformer_forward(arch, p, std::vector<int>{}));
  ArchitectureSpec no_tfr;
  LayerSpec d;
  d.kind = LayerKind::dense;
  d.in = 2;
  d.out = 2;
  no_tfr.layers = {d};
  CHECK_THROWS(transformer_forward(no_tfr, zero_phenotype(no_tfr), std::vector<int>{1}));
}

TEST_CASE("untied head uses the trailing dense layer") {
  TransformerConfig cfg = small_cfg();
  cfg.tied_head = false;
  const ArchitectureSpec arch = make_transformer_arch(cfg, Representation::direct, "t");
  Phenotype p = zero_phenotype(arch);
  // only the head bias is nonzero: logits equal that bias everywhere
  std::vector<float>& head_bias = p.layers.back()[0].bias;
  for (int j = 0; j < 11; ++j) head_bias[static_cast<std::size_t>(j)] = 0.5f * j;
  const Matrix logits = transformer_forward(arch, p, std::vector<int>{2, 3});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 11; ++j) CHECK(logits.at(i, j) == doctest::Approx(0.5f * j));
}
