#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace svqa {

// Scalar type for all tensor math. Double by default so finite-difference
// checks have headroom; define SVQA_REAL_FLOAT for a single-precision build.
#ifdef SVQA_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor. Values are immutable once a node owns them; all
// primitives return fresh tensors.
struct Tensor {
  std::vector<int> shape;
  std::vector<real> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<real> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
      throw TensorError("tensor: shape/data size mismatch");
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw TensorError("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    const auto n = numel_of(s);
    return Tensor(std::move(s), std::vector<real>(static_cast<std::size_t>(n), real(0)));
  }

  static Tensor full(std::vector<int> s, real v) {
    const auto n = numel_of(s);
    return Tensor(std::move(s), std::vector<real>(static_cast<std::size_t>(n), v));
  }

  static Tensor scalar(real v) { return Tensor({1}, {v}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  bool empty() const { return data.empty(); }
  bool is_scalar() const { return data.size() == 1; }
  real scalar_value() const {
    if (!is_scalar()) throw TensorError("tensor: not a scalar");
    return data[0];
  }

  bool is_matrix() const { return shape.size() == 2; }
  int rows() const {
    require_matrix();
    return shape[0];
  }
  int cols() const {
    require_matrix();
    return shape[1];
  }
  void require_matrix() const {
    if (!is_matrix()) throw TensorError("tensor: expected 2-d");
  }

  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(shape[1]) +
           static_cast<std::size_t>(c);
  }
  real& at(int r, int c) { return data[index(r, c)]; }
  real at(int r, int c) const { return data[index(r, c)]; }

  const real* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * shape[1]; }
  real* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * shape[1]; }

  bool all_finite() const {
    for (real v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw TensorError(std::string(where) + ": non-finite value");
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) throw TensorError(std::string(where) + ": shape mismatch");
}

// ---------------------------------------------------------------------------
// Raw kernels. The tape primitives and the no-tape inference path share these
// so the two forward routes stay bit-identical.
// ---------------------------------------------------------------------------

inline Tensor matmul_raw(const Tensor& a, const Tensor& b) {
  if (!a.is_matrix() || !b.is_matrix() || a.shape[1] != b.shape[0])
    throw TensorError("matmul: shape mismatch");
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const real* arow = a.data.data() + static_cast<std::size_t>(i) * k;
    real* orow = out.data.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const real av = arow[p];
      const real* brow = b.data.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

inline Tensor transpose_raw(const Tensor& a) {
  a.require_matrix();
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline Tensor add_raw(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Tensor add_row_raw(const Tensor& a, const Tensor& row) {
  a.require_matrix();
  if (!row.is_matrix() || row.shape[0] != 1 || row.shape[1] != a.shape[1])
    throw TensorError("add_row: need a 1-row tensor matching columns");
  Tensor out = a;
  for (int i = 0; i < a.shape[0]; ++i) {
    real* orow = out.row_ptr(i);
    for (int j = 0; j < a.shape[1]; ++j) orow[j] += row.data[static_cast<std::size_t>(j)];
  }
  return out;
}

inline Tensor scale_raw(const Tensor& a, real c) {
  Tensor out = a;
  for (real& v : out.data) v *= c;
  return out;
}

inline Tensor mul_raw(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows_raw(const Tensor& a) {
  a.require_matrix();
  if (a.shape[0] < 1 || a.shape[1] < 1) throw TensorError("softmax: empty input");
  Tensor out = a;
  const int n = a.shape[1];
  for (int i = 0; i < a.shape[0]; ++i) {
    real* row = out.row_ptr(i);
    real mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    real sum = 0;
    for (int j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < n; ++j) row[j] /= sum;
  }
  return out;
}

inline constexpr real kLayerNormEps = real(1e-5);

// Row-wise layer norm: normalize to mean 0 / variance 1 (epsilon-guarded),
// then affine gain/bias.
inline Tensor layer_norm_raw(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  x.require_matrix();
  const int m = x.shape[0], n = x.shape[1];
  if (!gain.is_matrix() || gain.shape[0] != 1 || gain.shape[1] != n)
    throw TensorError("layer_norm: gain shape");
  if (!bias.is_matrix() || bias.shape[0] != 1 || bias.shape[1] != n)
    throw TensorError("layer_norm: bias shape");
  Tensor out = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i) {
    const real* row = x.row_ptr(i);
    real mean = 0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    real var = 0;
    for (int j = 0; j < n; ++j) {
      const real d = row[j] - mean;
      var += d * d;
    }
    var /= n;
    const real inv = real(1) / std::sqrt(var + kLayerNormEps);
    real* orow = out.row_ptr(i);
    for (int j = 0; j < n; ++j)
      orow[j] = (row[j] - mean) * inv * gain.data[static_cast<std::size_t>(j)] +
                bias.data[static_cast<std::size_t>(j)];
  }
  return out;
}

inline constexpr real kGeluCoef = real(0.044715);
inline const real kGeluScale = std::sqrt(real(2) / real(kPi));

inline real gelu_scalar(real x) {
  const real u = kGeluScale * (x + kGeluCoef * x * x * x);
  return real(0.5) * x * (real(1) + std::tanh(u));
}

inline real gelu_grad_scalar(real x) {
  const real u = kGeluScale * (x + kGeluCoef * x * x * x);
  const real t = std::tanh(u);
  const real du = kGeluScale * (real(1) + real(3) * kGeluCoef * x * x);
  return real(0.5) * (real(1) + t) + real(0.5) * x * (real(1) - t * t) * du;
}

inline Tensor gelu_raw(const Tensor& a) {
  Tensor out = a;
  for (real& v : out.data) v = gelu_scalar(v);
  return out;
}

// Mean of -log softmax(logits)[target] over unmasked rows.
inline real cross_entropy_raw(const Tensor& logits, const std::vector<int>& targets,
                              const std::vector<bool>& mask) {
  logits.require_matrix();
  const int t = logits.shape[0], v = logits.shape[1];
  if (static_cast<int>(targets.size()) != t || static_cast<int>(mask.size()) != t)
    throw TensorError("cross_entropy: targets/mask length mismatch");
  int count = 0;
  real total = 0;
  for (int i = 0; i < t; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    if (targets[static_cast<std::size_t>(i)] < 0 || targets[static_cast<std::size_t>(i)] >= v)
      throw TensorError("cross_entropy: target out of range");
    const real* row = logits.row_ptr(i);
    real mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    real sum = 0;
    for (int j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    total += std::log(sum) + mx - row[targets[static_cast<std::size_t>(i)]];
    ++count;
  }
  if (count == 0) throw TensorError("cross_entropy: all positions masked");
  return total / count;
}

inline real sigmoid_scalar(real z) {
  return z >= 0 ? real(1) / (real(1) + std::exp(-z)) : std::exp(z) / (real(1) + std::exp(z));
}

}  // namespace svqa
