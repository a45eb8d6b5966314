#include <doctest.h>

#include <cmath>
#include <vector>

#include "lrne/tensor.hpp"

using namespace lrne;

namespace {

Matrix make(int r, int c, std::initializer_list<float> vals) {
  Matrix m(r, c);
  std::size_t i = 0;
  for (float v : vals) m.data[i++] = v;
  return m;
}

}  // namespace

TEST_CASE("matmul 2x2 hand-checked example") {
  // [[1,2],[3,4]] * [[5,6],[7,8]] = [[19,22],[43,50]]
  const Matrix a = make(2, 2, {1, 2, 3, 4});
  const Matrix b = make(2, 2, {5, 6, 7, 8});
  const Matrix c = matmul(a, b);
  CHECK(c.at(0, 0) == 19.0f);
  CHECK(c.at(0, 1) == 22.0f);
  CHECK(c.at(1, 0) == 43.0f);
  CHECK(c.at(1, 1) == 50.0f);
}

TEST_CASE("matmul identity and outer shapes") {
  const Matrix a = make(1, 3, {1, 1, 1});
  const Matrix b = make(3, 1, {1, 1, 1});
  const Matrix c = matmul(a, b);
  CHECK(c.rows == 1);
  CHECK(c.cols == 1);
  CHECK(c.at(0, 0) == 3.0f);

  Matrix eye(3, 3);
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0f;
  const Matrix m = make(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Matrix me = matmul(m, eye);
  for (int i = 0; i < 9; ++i) CHECK(me.data[i] == m.data[i]);
}

TEST_CASE("matmul rejects dimension mismatch") {
  CHECK_THROWS(matmul(Matrix(2, 3), Matrix(2, 3)));
}

TEST_CASE("matmul associativity within tolerance") {
  Matrix a(4, 6), b(6, 5), c(5, 3);
  std::uint32_t x = 123456789;
  auto next = [&x]() {
    x ^= x << 13;
    x ^= x >> 17;
    x ^= x << 5;
    return static_cast<float>(static_cast<double>(x) / 4294967296.0 - 0.5);
  };
  for (auto& v : a.data) v = next();
  for (auto& v : b.data) v = next();
  for (auto& v : c.data) v = next();
  const Matrix left = matmul(matmul(a, b), c);
  const Matrix right = matmul(a, matmul(b, c));
  for (std::size_t i = 0; i < left.data.size(); ++i)
    CHECK(left.data[i] == doctest::Approx(right.data[i]).epsilon(1e-4));
}

TEST_CASE("transpose") {
  const Matrix m = make(2, 3, {1, 2, 3, 4, 5, 6});
  const Matrix t = transpose(m);
  CHECK(t.rows == 3);
  CHECK(t.cols == 2);
  CHECK(t.at(0, 0) == 1.0f);
  CHECK(t.at(2, 1) == 6.0f);
}

TEST_CASE("conv reshape round-trips bit-exactly and maps indices correctly") {
  const int in = 2, out = 2, kh = 2, kw = 2;
  Matrix w(in * kh * kw, out);
  for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] = static_cast<float>(i) * 0.25f;
  const ConvWeight c = reshape_to_conv(w, in, out, kh, kw);
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < in; ++i)
      for (int r = 0; r < kh; ++r)
        for (int s = 0; s < kw; ++s)
          CHECK(c.at(o, i, r, s) == w.at(i * kh * kw + r * kw + s, o));
  const Matrix back = reshape_from_conv(c);
  REQUIRE(back.data.size() == w.data.size());
  for (std::size_t i = 0; i < w.data.size(); ++i) CHECK(back.data[i] == w.data[i]);
}

TEST_CASE("conv2d on a counting patch with 2x2 ones kernel stride 2") {
  // x[0][i][j] = 4*i + j over 4x4; valid conv, stride 2:
  // sums of each 2x2 patch: [[10, 18], [42, 50]]
  Volume x(1, 4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) x.at(0, i, j) = static_cast<float>(4 * i + j);
  ConvWeight w;
  w.in_ch = 1;
  w.out_ch = 1;
  w.kh = 2;
  w.kw = 2;
  w.data.assign(4, 1.0f);
  const std::vector<float> bias{0.0f};
  const Volume y = conv2d_forward(x, w, bias, 2);
  CHECK(y.ch == 1);
  CHECK(y.h == 2);
  CHECK(y.w == 2);
  CHECK(y.at(0, 0, 0) == 10.0f);
  CHECK(y.at(0, 0, 1) == 18.0f);
  CHECK(y.at(0, 1, 0) == 42.0f);
  CHECK(y.at(0, 1, 1) == 50.0f);
}

TEST_CASE("conv2d bias is added per output channel") {
  Volume x(1, 2, 2);
  ConvWeight w;
  w.in_ch = 1;
  w.out_ch = 2;
  w.kh = 2;
  w.kw = 2;
  w.data.assign(8, 0.0f);
  const std::vector<float> bias{1.5f, -2.0f};
  const Volume y = conv2d_forward(x, w, bias, 1);
  CHECK(y.at(0, 0, 0) == 1.5f);
  CHECK(y.at(1, 0, 0) == -2.0f);
}

TEST_CASE("conv2d matches a dense layer on full-size kernels") {
  // A conv whose kernel covers the whole input equals a dense product with
  // the reshaped matrix on the flattened input.
  const int in = 3, out = 5, kh = 2, kw = 2;
  Matrix w(in * kh * kw, out);
  Volume x(in, kh, kw);
  std::uint32_t st = 42;
  auto next = [&st]() {
    st ^= st << 13;
    st ^= st >> 17;
    st ^= st << 5;
    return static_cast<float>(static_cast<double>(st) / 4294967296.0 - 0.5);
  };
  for (auto& v : w.data) v = next();
  for (auto& v : x.data) v = next();
  const ConvWeight cw = reshape_to_conv(w, in, out, kh, kw);
  const std::vector<float> bias(out, 0.0f);
  const Volume y = conv2d_forward(x, cw, bias, 1);
  REQUIRE(y.ch == out);
  REQUIRE(y.h == 1);
  REQUIRE(y.w == 1);
  Matrix flat(1, in * kh * kw);
  flat.data = x.data;  // channel-major flatten matches the reshape row order
  const Matrix ref = matmul(flat, w);
  for (int o = 0; o < out; ++o)
    CHECK(y.at(o, 0, 0) == doctest::Approx(ref.at(0, o)).epsilon(1e-6));
}

TEST_CASE("conv2d rejects kernels larger than the input") {
  Volume x(1, 2, 2);
  ConvWeight w;
  w.in_ch = 1;
  w.out_ch = 1;
  w.kh = 3;
  w.kw = 3;
  w.data.assign(9, 0.0f);
  const std::vector<float> bias{0.0f};
  CHECK_THROWS(conv2d_forward(x, w, bias, 1));
}

TEST_CASE("softmax rows") {
  Matrix m(1, 3);
  m.data = {std::log(1.0f), std::log(2.0f), std::log(3.0f)};
  const Matrix p = softmax_rows(m);
  CHECK(p.at(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
  CHECK(p.at(0, 1) == doctest::Approx(2.0 / 6.0).epsilon(1e-6));
  CHECK(p.at(0, 2) == doctest::Approx(3.0 / 6.0).epsilon(1e-6));

  Matrix big(1, 2);
  big.data = {1000.0f, 0.0f};
  const Matrix q = softmax_rows(big);
  CHECK(q.at(0, 0) == doctest::Approx(1.0));
  CHECK(q.at(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("softmax rejects NaN input") {
  Matrix m(1, 2);
  m.data = {0.0f, std::nanf("")};
  CHECK_THROWS(softmax_rows(m));
}

TEST_CASE("relu") {
  std::vector<float> v{-1.0f, 0.0f, 2.5f};
  relu_inplace(v);
  CHECK(v[0] == 0.0f);
  CHECK(v[1] == 0.0f);
  CHECK(v[2] == 2.5f);
}

TEST_CASE("bits_hash is sensitive to any bit flip") {
  std::vector<float> a{1.0f, 2.0f, 3.0f};
  std::vector<float> b{1.0f, 2.0f, 3.0000002f};
  CHECK(bits_hash(a) == bits_hash(a));
  CHECK(bits_hash(a) != bits_hash(b));
}
