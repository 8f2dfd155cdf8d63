#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hcvae/errors.hpp"
#include "hcvae/rng.hpp"

namespace hcvae {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // sized lazily, same length as data
  bool requires_grad = false;
  uint64_t id = 0;  // creation order; parents always precede children
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense 64-bit tensor with reverse-mode autodiff. Copies are shallow
/// handles onto a shared node; data is immutable once an op has consumed
/// it (only gradients accumulate). Every committed op validates that its
/// output is finite.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Entries drawn i.i.d. N(0, stddev^2).
  static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  size_t size() const { return impl_->data.size(); }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  /// Rows/cols of a rank-2 tensor.
  int rows() const;
  int cols() const;

  bool requires_grad() const { return impl_->requires_grad; }

  std::span<const double> values() const { return impl_->data; }
  /// Mutable access to leaf data (finite-difference probes, loaders).
  /// Mutating a non-leaf would desynchronize the tape, so it is refused.
  std::span<double> values_mut();

  double value_at(size_t i) const { return impl_->data[i]; }
  double at(int r, int c) const;
  /// The single element of a one-element tensor.
  double item() const;

  bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  std::span<const double> grad() const;
  double grad_at(size_t i) const;
  void zero_grad();

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  friend Tensor wrap_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::TensorImpl&)>, const char*);
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// While alive, ops do not record the tape (forward values only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// ---- ops (all record the tape when gradients are enabled) ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);

/// Broadcasts a one-element tensor against a; gradient flows to both.
Tensor mul_scalar_t(const Tensor& a, const Tensor& s);
Tensor div_scalar_t(const Tensor& a, const Tensor& s);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor clamp_min(const Tensor& a, double lo);

/// Row-wise softmax of a rank-2 tensor, max-subtracted for stability.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);

Tensor sum(const Tensor& a);   // -> shape {1}
Tensor mean(const Tensor& a);  // -> shape {1}
Tensor row_sum(const Tensor& a);  // [m x n] -> [m x 1]

/// [m x n] + [1 x n], the bias-add pattern.
Tensor add_rowvec(const Tensor& m, const Tensor& row);
/// [m x n] * [m x 1] / [m x n] / [m x 1], column broadcast.
Tensor mul_colvec(const Tensor& m, const Tensor& col);
Tensor div_colvec(const Tensor& m, const Tensor& col);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& a, int start, int len);
Tensor slice_cols(const Tensor& a, int start, int len);

/// Rows of `table` selected by index, duplicates allowed (embedding lookup).
Tensor gather_rows(const Tensor& table, const std::vector<int>& idx);
/// One element per row, column chosen per row (target log-prob pick).
Tensor gather_cols(const Tensor& a, const std::vector<int>& idx);

/// Same data, new logical shape; element count must match.
Tensor reshape(const Tensor& a, Shape shape);

/// Reverse-mode sweep from a one-element loss. Leaf gradients accumulate
/// across calls; interior gradients are reset per sweep.
void backward(const Tensor& loss);

struct FiniteDiffOptions {
  double step = 1e-5;
  /// 0 checks every coordinate; otherwise per-parameter cap, half chosen
  /// by largest analytic gradient, half sampled by seed.
  int max_coords_per_param = 0;
  uint64_t seed = 17;
};

/// Central-difference gradient audit. `build_loss` must rebuild the loss
/// from the live parameter values on every call. Returns
/// max over checked coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
double finite_diff_check(const std::function<Tensor()>& build_loss,
                         const std::vector<Tensor>& params,
                         const FiniteDiffOptions& opts = {});

}  // namespace hcvae
