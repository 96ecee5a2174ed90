#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vitprobe {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

// Raised on any extent mismatch. Carries both offending shapes.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& what, Shape lhs, Shape rhs)
      : std::invalid_argument(what + ": " + shape_str(lhs) + " vs " + shape_str(rhs)),
        lhs_(std::move(lhs)),
        rhs_(std::move(rhs)) {}

  const Shape& lhs() const noexcept { return lhs_; }
  const Shape& rhs() const noexcept { return rhs_; }

 private:
  Shape lhs_;
  Shape rhs_;
};

// Dense row-major float32 array.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, float fill = 0.0f) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_numel(shape_))
      throw DimensionError("data length does not match shape", shape_, Shape{data_.size()});
  }

  Tensor(Shape shape, std::initializer_list<float> data)
      : Tensor(std::move(shape), std::vector<float>(data)) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& vec() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

  // Contiguous view of row r when the tensor is viewed as [size/last, last].
  std::span<const float> row(std::size_t r) const {
    const std::size_t n = shape_.back();
    return std::span<const float>(data_).subspan(r * n, n);
  }
  std::span<float> row(std::size_t r) {
    const std::size_t n = shape_.back();
    return std::span<float>(data_).subspan(r * n, n);
  }
  std::size_t rows() const { return shape_.empty() ? 0 : data_.size() / shape_.back(); }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
      throw DimensionError("reshape changes element count", shape_, shape);
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_extents() const {
    for (auto e : shape_)
      if (e == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<float> data_;
};

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank), t.shape(), Shape(rank, 0));
}

// [m,k] x [k,n] (+ bias) into out. Each output element is accumulated in
// double with k ascending; the bias is added last.
inline void gemm(const Tensor& a, const Tensor& b, const float* bias, Tensor& out) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* arow = a.data().data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const float* brow = b.data().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
    }
    auto orow = out.row(i);
    if (bias) {
      for (std::size_t j = 0; j < n; ++j) orow[j] = static_cast<float>(acc[j] + static_cast<double>(bias[j]));
    } else {
      for (std::size_t j = 0; j < n; ++j) orow[j] = static_cast<float>(acc[j]);
    }
  }
}

}  // namespace detail

// [m,k] x [k,n] -> [m,n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul lhs");
  detail::require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0)) throw DimensionError("matmul inner extents differ", a.shape(), b.shape());
  Tensor out({a.dim(0), b.dim(1)});
  detail::gemm(a, b, nullptr, out);
  return out;
}

// a x w + bias, bias broadcast over rows.
inline Tensor linear(const Tensor& a, const Tensor& w, const Tensor& bias) {
  detail::require_rank(a, 2, "linear input");
  detail::require_rank(w, 2, "linear weight");
  if (a.dim(1) != w.dim(0)) throw DimensionError("linear inner extents differ", a.shape(), w.shape());
  if (bias.size() != w.dim(1)) throw DimensionError("linear bias length", bias.shape(), Shape{w.dim(1)});
  Tensor out({a.dim(0), w.dim(1)});
  detail::gemm(a, w, bias.data().data(), out);
  return out;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("add shape mismatch", a.shape(), b.shape());
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

// Adds a [n] bias to every row of a [..., n] tensor.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (a.empty() || bias.size() != a.shape().back())
    throw DimensionError("bias length must equal last extent", a.shape(), bias.shape());
  Tensor out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
  return out;
}

inline Tensor scale(const Tensor& a, float s) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

// Numerically stable softmax along `axis`.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw std::out_of_range("softmax axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  const auto& s = x.shape();
  const std::size_t len = s[axis];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t outer = x.size() / (len * inner);

  Tensor out(s);
  std::vector<double> e(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      float mx = x[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        e[i] = std::exp(static_cast<double>(x[base + i * inner]) - mx);
        sum += e[i];
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] = static_cast<float>(e[i] / sum);
    }
  }
  return out;
}

inline Tensor softmax(const Tensor& x) { return softmax(x, x.rank() - 1); }

inline constexpr float kLayerNormEps = 1e-6f;

// Per row over the last extent: (x - mean) / sqrt(var + eps) * gamma + beta,
// var is the biased (population) variance.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = kLayerNormEps) {
  if (x.empty()) throw DimensionError("layer_norm on empty tensor", x.shape(), gamma.shape());
  const std::size_t d = x.shape().back();
  if (gamma.size() != d) throw DimensionError("layer_norm gamma length", gamma.shape(), Shape{d});
  if (beta.size() != d) throw DimensionError("layer_norm beta length", beta.shape(), Shape{d});
  if (!(eps > 0.0f)) throw std::invalid_argument("layer_norm eps must be positive");

  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (float v : in) {
      const double c = v - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t j = 0; j < d; ++j)
      o[j] = static_cast<float>((in[j] - mean) * inv * gamma[j] + beta[j]);
  }
  return out;
}

// Exact GELU, x * Phi(x). The float overload rounds the double result once.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline float gelu(float x) { return static_cast<float>(gelu(static_cast<double>(x))); }

inline Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = gelu(v);
  return out;
}

}  // namespace vitprobe
