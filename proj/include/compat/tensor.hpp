#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "compat/error.hpp"
#include "compat/random.hpp"

namespace compat {

using Vec = std::vector<double>;

// Rank-1 (len,) or rank-2 (rows, cols) dense tensor, row-major, 64-bit.
class Tensor {
 public:
  Tensor() = default;

  static Tensor vector(std::size_t len) { return Tensor(1, len, 1); }
  static Tensor matrix(std::size_t rows, std::size_t cols) { return Tensor(rows, cols, 2); }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::vector<std::size_t> shape() const {
    if (rank_ == 1) return {cols_};
    return {rows_, cols_};
  }

  bool same_shape(const Tensor& o) const noexcept {
    return rank_ == o.rank_ && rows_ == o.rows_ && cols_ == o.cols_;
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor zeros_like() const { return Tensor(rows_, cols_, rank_); }

  bool operator==(const Tensor&) const = default;

 private:
  Tensor(std::size_t rows, std::size_t cols, std::size_t rank)
      : rows_(rows), cols_(cols), rank_(rank), data_(rows * cols, 0.0) {}

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t rank_ = 0;
  std::vector<double> data_;
};

// --- small dense kernels ---------------------------------------------------

// out = W x
inline void matvec(const Tensor& w, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
    out[r] = acc;
  }
}

// out += W^T y
inline void matvec_transposed_add(const Tensor& w, std::span<const double> y,
                                  std::span<double> out) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (y[r] == 0.0) continue;
    const auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * y[r];
  }
}

// G += a b^T
inline void outer_add(Tensor& g, std::span<const double> a, std::span<const double> b) {
  for (std::size_t r = 0; r < g.rows(); ++r) {
    if (a[r] == 0.0) continue;
    double* row = g.data().data() + r * g.cols();
    for (std::size_t c = 0; c < g.cols(); ++c) row[c] += a[r] * b[c];
  }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline void add_to(std::span<double> dst, std::span<const double> src, double scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Named parameters

enum class ParamRole {
  weight,     // Glorot-uniform init, L2-regularized
  bias,       // zero init, not regularized
  edge_logit  // zero init (uniform neighbor weighting), not regularized
};

struct ParamSpec {
  std::string name;
  std::vector<std::size_t> shape;  // {len} or {rows, cols}
  ParamRole role = ParamRole::weight;
};

// Insertion-ordered name -> tensor map. `revision()` changes whenever a
// tensor is handed out for mutation; forward caches use it to detect staleness.
class ParamSet {
 public:
  std::size_t add(std::string name, Tensor t, ParamRole role = ParamRole::weight) {
    if (!index_.emplace(name, entries_.size()).second)
      throw ArgumentError("duplicate parameter name '" + name + "'");
    entries_.push_back({std::move(name), role, std::move(t)});
    ++revision_;
    return entries_.size() - 1;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  ParamRole role(std::size_t i) const { return entries_[i].role; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].tensor; }
  Tensor& mutable_tensor(std::size_t i) {
    ++revision_;
    return entries_[i].tensor;
  }

  std::optional<std::size_t> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw LookupError("unknown parameter '" + std::string(name) + "'");
  }

  const Tensor& tensor(std::string_view name) const { return tensor(index_of(name)); }

  std::uint64_t revision() const noexcept { return revision_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  // Same names, roles and shapes; every entry zero.
  ParamSet zeros_like() const {
    ParamSet out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.zeros_like(), e.role);
    return out;
  }

  bool same_layout(const ParamSet& o) const {
    if (o.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (o.name(i) != name(i) || !o.tensor(i).same_shape(tensor(i))) return false;
    return true;
  }

  bool values_equal(const ParamSet& o) const {
    if (!same_layout(o)) return false;
    for (std::size_t i = 0; i < size(); ++i)
      if (!(o.tensor(i) == tensor(i))) return false;
    return true;
  }

 private:
  struct Entry {
    std::string name;
    ParamRole role;
    Tensor tensor;
  };
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t revision_ = 0;
};

inline Tensor make_tensor(const std::vector<std::size_t>& shape) {
  for (auto d : shape)
    if (d == 0) throw ArgumentError("tensor dimensions must be positive");
  if (shape.size() == 1) return Tensor::vector(shape[0]);
  if (shape.size() == 2) return Tensor::matrix(shape[0], shape[1]);
  throw ArgumentError("tensors have rank 1 or 2");
}

// Weights ~ U(-a, a), a = sqrt(6 / (fan_in + fan_out)); a (len,) weight is
// treated as a 1 x len map. Biases and edge logits start at zero.
inline ParamSet init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  ParamSet params;
  Rng rng(derive_seed(seed, {0x1417}));
  for (const auto& spec : specs) {
    Tensor t = make_tensor(spec.shape);
    if (spec.role == ParamRole::weight) {
      const double fan_out = t.rank() == 1 ? 1.0 : static_cast<double>(t.rows());
      const double fan_in = static_cast<double>(t.cols());
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& x : t.data()) x = rng.uniform(-a, a);
    }
    params.add(spec.name, std::move(t), spec.role);
  }
  return params;
}

// ---------------------------------------------------------------------------
// Sparse-by-tensor gradients

// Gradient slots aligned with a ParamSet. A slot nobody wrote to stays empty
// and means "all zero"; this keeps per-outfit gradients small when only a
// few category maps are involved.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamSet& layout) {
    shapes_.reserve(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) shapes_.push_back(layout.tensor(i).shape());
    slots_.resize(layout.size());
  }

  std::size_t size() const noexcept { return slots_.size(); }
  bool touched(std::size_t i) const { return !slots_[i].empty(); }

  Tensor& touch(std::size_t i) {
    if (slots_[i].empty()) slots_[i] = make_tensor(shapes_[i]);
    return slots_[i];
  }

  // Empty tensor when untouched.
  const Tensor& slot(std::size_t i) const { return slots_[i]; }

  void add(const Gradients& other, double scale = 1.0) {
    if (other.size() != size()) throw StructuralError("gradient layouts differ");
    for (std::size_t i = 0; i < size(); ++i) {
      if (!other.touched(i)) continue;
      add_to(touch(i).data(), other.slots_[i].data(), scale);
    }
  }

  void scale(double s) {
    for (auto& t : slots_)
      for (auto& x : t.data()) x *= s;
  }

  ParamSet to_dense(const ParamSet& layout) const {
    ParamSet out = layout.zeros_like();
    for (std::size_t i = 0; i < size(); ++i)
      if (touched(i)) out.mutable_tensor(i) = slots_[i];
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& t : slots_)
      for (double x : t.data()) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  std::vector<std::vector<std::size_t>> shapes_;
  std::vector<Tensor> slots_;
};

}  // namespace compat
