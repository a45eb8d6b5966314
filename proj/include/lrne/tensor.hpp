#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lrne {

/// Dense row-major matrix of 32-bit floats. Row-major layout is the
/// canonical order for every serialization and noise-draw sequence in the
/// engine, so it must never change.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;  // length rows*cols

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

  float& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  float at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

/// 4-D convolution weight, laid out out-channel-major:
/// data[((o*in + i)*kh + r)*kw + s].
struct ConvWeight {
  int in_ch = 0;
  int out_ch = 0;
  int kh = 0;
  int kw = 0;
  std::vector<float> data;

  float at(int o, int i, int r, int s) const {
    return data[((static_cast<std::size_t>(o) * in_ch + i) * kh + r) * kw + s];
  }
};

/// 3-D activation volume, channel-major: data[(c*h + i)*w + j].
struct Volume {
  int ch = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;

  Volume() = default;
  Volume(int c, int hh, int ww)
      : ch(c), h(hh), w(ww), data(static_cast<std::size_t>(c) * hh * ww, 0.0f) {}

  float at(int c, int i, int j) const {
    return data[(static_cast<std::size_t>(c) * h + i) * w + j];
  }
  float& at(int c, int i, int j) {
    return data[(static_cast<std::size_t>(c) * h + i) * w + j];
  }
};

/// c = a*b. Accumulates in double to keep results independent of summation
/// tricks the optimizer might otherwise pick. Throws on dimension mismatch
/// or non-finite output.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

/// Reinterprets an (in*kh*kw) x out matrix as a conv weight. Matrix element
/// (i*kh*kw + r*kw + s, o) lands at conv index (o, i, r, s). Bijective with
/// reshape_from_conv, bit-exactly.
ConvWeight reshape_to_conv(const Matrix& w, int in_ch, int out_ch, int kh, int kw);
Matrix reshape_from_conv(const ConvWeight& w);

/// Valid (no padding) 2-D cross-correlation. Output spatial dims are
/// floor((H-kh)/stride)+1 by floor((W-kw)/stride)+1. Throws if the kernel
/// does not fit inside the input.
Volume conv2d_forward(const Volume& x, const ConvWeight& w,
                      std::span<const float> bias, int stride);

/// Row-wise softmax with max subtraction. NaN input is a hard error.
Matrix softmax_rows(const Matrix& m);

void relu_inplace(std::span<float> v);

/// FNV-1a over the raw little-endian float bytes; used by determinism checks.
std::uint64_t bits_hash(std::span<const float> v, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace lrne
