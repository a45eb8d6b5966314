#include "lrne/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace lrne {

namespace {

void check_finite(std::span<const float> v, const char* op) {
  for (const float x : v) {
    if (!std::isfinite(x)) throw std::runtime_error(std::string(op) + ": non-finite output");
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: inner dimensions differ (" +
                                std::to_string(a.cols) + " vs " + std::to_string(b.rows) + ")");
  }
  Matrix c(a.rows, b.cols);
  std::vector<double> acc(static_cast<std::size_t>(b.cols));
  for (int i = 0; i < a.rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* arow = a.data.data() + static_cast<std::size_t>(i) * a.cols;
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const float* brow = b.data.data() + static_cast<std::size_t>(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) acc[j] += aik * brow[j];
    }
    float* crow = c.data.data() + static_cast<std::size_t>(i) * c.cols;
    for (int j = 0; j < b.cols; ++j) crow[j] = static_cast<float>(acc[j]);
  }
  check_finite(c.data, "matmul");
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
  return t;
}

ConvWeight reshape_to_conv(const Matrix& w, int in_ch, int out_ch, int kh, int kw) {
  if (w.rows != in_ch * kh * kw || w.cols != out_ch) {
    throw std::invalid_argument("reshape_to_conv: matrix is " + std::to_string(w.rows) + "x" +
                                std::to_string(w.cols) + ", expected " +
                                std::to_string(in_ch * kh * kw) + "x" + std::to_string(out_ch));
  }
  ConvWeight c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kh = kh;
  c.kw = kw;
  c.data.resize(w.data.size());
  for (int i = 0; i < in_ch; ++i)
    for (int r = 0; r < kh; ++r)
      for (int s = 0; s < kw; ++s) {
        const int row = (i * kh + r) * kw + s;
        for (int o = 0; o < out_ch; ++o) {
          c.data[((static_cast<std::size_t>(o) * in_ch + i) * kh + r) * kw + s] = w.at(row, o);
        }
      }
  return c;
}

Matrix reshape_from_conv(const ConvWeight& w) {
  Matrix m(w.in_ch * w.kh * w.kw, w.out_ch);
  for (int i = 0; i < w.in_ch; ++i)
    for (int r = 0; r < w.kh; ++r)
      for (int s = 0; s < w.kw; ++s) {
        const int row = (i * w.kh + r) * w.kw + s;
        for (int o = 0; o < w.out_ch; ++o) m.at(row, o) = w.at(o, i, r, s);
      }
  return m;
}

Volume conv2d_forward(const Volume& x, const ConvWeight& w,
                      std::span<const float> bias, int stride) {
  if (x.ch != w.in_ch) throw std::invalid_argument("conv2d: channel mismatch");
  if (w.kh > x.h || w.kw > x.w) throw std::invalid_argument("conv2d: kernel larger than input");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (!bias.empty() && static_cast<int>(bias.size()) != w.out_ch) {
    throw std::invalid_argument("conv2d: bias length mismatch");
  }
  const int oh = (x.h - w.kh) / stride + 1;
  const int ow = (x.w - w.kw) / stride + 1;
  Volume out(w.out_ch, oh, ow);
  for (int o = 0; o < w.out_ch; ++o) {
    const double b = bias.empty() ? 0.0 : bias[o];
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        double acc = b;
        for (int c = 0; c < x.ch; ++c)
          for (int r = 0; r < w.kh; ++r)
            for (int s = 0; s < w.kw; ++s)
              acc += static_cast<double>(x.at(c, i * stride + r, j * stride + s)) *
                     w.at(o, c, r, s);
        out.at(o, i, j) = static_cast<float>(acc);
      }
    }
  }
  check_finite(out.data, "conv2d_forward");
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    float mx = -std::numeric_limits<float>::infinity();
    for (int j = 0; j < m.cols; ++j) {
      const float v = m.at(i, j);
      if (std::isnan(v)) throw std::runtime_error("softmax_rows: NaN input");
      if (v > mx) mx = v;
    }
    double denom = 0.0;
    for (int j = 0; j < m.cols; ++j) denom += std::exp(static_cast<double>(m.at(i, j)) - mx);
    for (int j = 0; j < m.cols; ++j) {
      out.at(i, j) = static_cast<float>(std::exp(static_cast<double>(m.at(i, j)) - mx) / denom);
    }
  }
  return out;
}

void relu_inplace(std::span<float> v) {
  for (float& x : v)
    if (x < 0.0f) x = 0.0f;
}

std::uint64_t bits_hash(std::span<const float> v, std::uint64_t h) {
  for (const float x : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    for (int shift = 0; shift < 32; shift += 8) {
      h ^= (bits >> shift) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace lrne
