#include "hcvae/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace hcvae {

namespace {

std::atomic<uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

void validate_shape(const Shape& s) {
  if (s.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (int d : s)
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(s));
}

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
}

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<double> data,
                                              bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got shape " +
                     shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

// ---- construction ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  validate_shape(shape);
  size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  if (!std::isfinite(value)) throw NumericError("Tensor::full: non-finite fill value");
  size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != data.size())
    throw ShapeError("Tensor::from_data: shape " + shape_str(shape) + " wants " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  check_finite(data, "from_data");
  return Tensor(make_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  validate_shape(shape);
  std::vector<double> d(shape_numel(shape));
  for (double& x : d) x = rng.normal() * stddev;
  return Tensor(make_impl(std::move(shape), std::move(d), requires_grad));
}

int Tensor::rows() const {
  require_rank2(*this, "rows");
  return impl_->shape[0];
}

int Tensor::cols() const {
  require_rank2(*this, "cols");
  return impl_->shape[1];
}

std::span<double> Tensor::values_mut() {
  if (!impl_->is_leaf())
    throw ContractError("values_mut: only leaf tensors may be mutated");
  return impl_->data;
}

double Tensor::at(int r, int c) const {
  require_rank2(*this, "at");
  return impl_->data[static_cast<size_t>(r) * static_cast<size_t>(impl_->shape[1]) +
                     static_cast<size_t>(c)];
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item: tensor has " + std::to_string(size()) + " elements");
  return impl_->data[0];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad: no gradient has been accumulated");
  return impl_->grad;
}

double Tensor::grad_at(size_t i) const { return grad()[i]; }

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

// ---- op plumbing ----

Tensor wrap_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(detail::TensorImpl&)> backward_fn, const char* op) {
  check_finite(data, op);
  bool needs = false;
  if (g_grad_enabled)
    for (const Tensor& p : parents)
      if (p.requires_grad()) needs = true;
  auto impl = make_impl(std::move(shape), std::move(data), needs);
  if (needs) {
    impl->parents.reserve(parents.size());
    for (const Tensor& p : parents) impl->parents.push_back(p.impl());
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(impl);
}

namespace {

// Accumulate g into p's gradient buffer if p wants one.
inline void acc(detail::TensorImpl& p, size_t i, double g) {
  p.grad[i] += g;
}

inline bool wants(const std::shared_ptr<detail::TensorImpl>& p) {
  return p->requires_grad;
}

inline void prep(const std::shared_ptr<detail::TensorImpl>& p) {
  if (p->requires_grad) p->ensure_grad();
}

}  // namespace

// ---- matrix ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m) * static_cast<size_t>(n), 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const size_t brow = static_cast<size_t>(p) * n;
      const size_t orow = static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) out[orow + j] += aip * bv[brow + j];
    }
  return wrap_result(
      {m, n}, std::move(out), {a, b},
      [m, k, n](detail::TensorImpl& o) {
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        prep(o.parents[0]);
        prep(o.parents[1]);
        // dA += G B^T ; dB += A^T G
        if (wants(o.parents[0]))
          for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
              double s = 0.0;
              for (int j = 0; j < n; ++j)
                s += o.grad[static_cast<size_t>(i) * n + j] * pb.data[static_cast<size_t>(p) * n + j];
              acc(pa, static_cast<size_t>(i) * k + p, s);
            }
        if (wants(o.parents[1]))
          for (int p = 0; p < k; ++p)
            for (int i = 0; i < m; ++i) {
              const double aip = pa.data[static_cast<size_t>(i) * k + p];
              if (aip == 0.0) continue;
              for (int j = 0; j < n; ++j)
                acc(pb, static_cast<size_t>(p) * n + j,
                    aip * o.grad[static_cast<size_t>(i) * n + j]);
            }
      },
      "matmul");
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = av[static_cast<size_t>(i) * n + j];
  return wrap_result(
      {n, m}, std::move(out), {a},
      [m, n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            acc(pa, static_cast<size_t>(i) * n + j, o.grad[static_cast<size_t>(j) * m + i]);
      },
      "transpose");
}

// ---- elementwise ----

namespace {

using UnaryFwd = double (*)(double);

Tensor binary_op(const Tensor& a, const Tensor& b, const char* name,
                 double (*fwd)(double, double),
                 void (*bwd)(detail::TensorImpl&, detail::TensorImpl&, detail::TensorImpl&)) {
  require_same_shape(a, b, name);
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return wrap_result(
      a.shape(), std::move(out), {a, b},
      [bwd](detail::TensorImpl& o) {
        prep(o.parents[0]);
        prep(o.parents[1]);
        bwd(o, *o.parents[0], *o.parents[1]);
      },
      name);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](detail::TensorImpl& o, detail::TensorImpl& pa, detail::TensorImpl& pb) {
        for (size_t i = 0; i < o.grad.size(); ++i) {
          if (pa.requires_grad) acc(pa, i, o.grad[i]);
          if (pb.requires_grad) acc(pb, i, o.grad[i]);
        }
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](detail::TensorImpl& o, detail::TensorImpl& pa, detail::TensorImpl& pb) {
        for (size_t i = 0; i < o.grad.size(); ++i) {
          if (pa.requires_grad) acc(pa, i, o.grad[i]);
          if (pb.requires_grad) acc(pb, i, -o.grad[i]);
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](detail::TensorImpl& o, detail::TensorImpl& pa, detail::TensorImpl& pb) {
        for (size_t i = 0; i < o.grad.size(); ++i) {
          if (pa.requires_grad) acc(pa, i, o.grad[i] * pb.data[i]);
          if (pb.requires_grad) acc(pb, i, o.grad[i] * pa.data[i]);
        }
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](detail::TensorImpl& o, detail::TensorImpl& pa, detail::TensorImpl& pb) {
        for (size_t i = 0; i < o.grad.size(); ++i) {
          const double inv = 1.0 / pb.data[i];
          if (pa.requires_grad) acc(pa, i, o.grad[i] * inv);
          if (pb.requires_grad) acc(pb, i, -o.grad[i] * pa.data[i] * inv * inv);
        }
      });
}

namespace {

Tensor unary_op(const Tensor& a, const char* name, const std::function<double(double)>& fwd,
                // dx given (upstream grad, input value, output value)
                const std::function<double(double, double, double)>& dfn) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  std::vector<double> saved_out = out;
  return wrap_result(
      a.shape(), std::move(out), {a},
      [dfn, saved_out = std::move(saved_out)](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (size_t i = 0; i < o.grad.size(); ++i)
          acc(pa, i, dfn(o.grad[i], pa.data[i], saved_out[i]));
      },
      name);
}

}  // namespace

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, "add_scalar", [c](double x) { return x + c; },
      [](double g, double, double) { return g; });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      a, "scale", [c](double x) { return x * c; },
      [c](double g, double, double) { return g * c; });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a, "exp", [](double x) { return std::exp(x); },
      [](double g, double, double y) { return g * y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a, "log", [](double x) { return std::log(x); },
      [](double g, double x, double) { return g / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double g, double, double y) { return g / (2.0 * y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double g, double, double y) { return g * (1.0 - y * y); });
}

Tensor neg(const Tensor& a) {
  return unary_op(
      a, "neg", [](double x) { return -x; }, [](double g, double, double) { return -g; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  return unary_op(
      a, "clamp", [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double g, double x, double) { return (x >= lo && x <= hi) ? g : 0.0; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(
      a, "clamp_min", [lo](double x) { return std::max(x, lo); },
      [lo](double g, double x, double) { return x >= lo ? g : 0.0; });
}

Tensor mul_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("mul_scalar_t: scalar operand has shape " + shape_str(s.shape()));
  std::vector<double> out(a.size());
  const double sv = s.value_at(0);
  const auto av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * sv;
  return wrap_result(
      a.shape(), std::move(out), {a, s},
      [](detail::TensorImpl& o) {
        prep(o.parents[0]);
        prep(o.parents[1]);
        auto& pa = *o.parents[0];
        auto& ps = *o.parents[1];
        const double sv2 = ps.data[0];
        for (size_t i = 0; i < o.grad.size(); ++i) {
          if (pa.requires_grad) acc(pa, i, o.grad[i] * sv2);
          if (ps.requires_grad) acc(ps, 0, o.grad[i] * pa.data[i]);
        }
      },
      "mul_scalar_t");
}

Tensor div_scalar_t(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeError("div_scalar_t: scalar operand has shape " + shape_str(s.shape()));
  std::vector<double> out(a.size());
  const double sv = s.value_at(0);
  const auto av = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] / sv;
  return wrap_result(
      a.shape(), std::move(out), {a, s},
      [](detail::TensorImpl& o) {
        prep(o.parents[0]);
        prep(o.parents[1]);
        auto& pa = *o.parents[0];
        auto& ps = *o.parents[1];
        const double inv = 1.0 / ps.data[0];
        for (size_t i = 0; i < o.grad.size(); ++i) {
          if (pa.requires_grad) acc(pa, i, o.grad[i] * inv);
          if (ps.requires_grad) acc(ps, 0, -o.grad[i] * pa.data[i] * inv * inv);
        }
      },
      "div_scalar_t");
}

// ---- softmax family ----

Tensor softmax_rows(const Tensor& a) {
  require_rank2(a, "softmax_rows");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (int i = 0; i < m; ++i) {
    const size_t base = static_cast<size_t>(i) * n;
    double mx = av[base];
    for (int j = 1; j < n; ++j) mx = std::max(mx, av[base + j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      out[base + j] = std::exp(av[base + j] - mx);
      z += out[base + j];
    }
    for (int j = 0; j < n; ++j) out[base + j] /= z;
  }
  std::vector<double> saved = out;
  return wrap_result(
      {m, n}, std::move(out), {a},
      [m, n, saved = std::move(saved)](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (int i = 0; i < m; ++i) {
          const size_t base = static_cast<size_t>(i) * n;
          double dot = 0.0;
          for (int j = 0; j < n; ++j) dot += o.grad[base + j] * saved[base + j];
          for (int j = 0; j < n; ++j)
            acc(pa, base + j, saved[base + j] * (o.grad[base + j] - dot));
        }
      },
      "softmax_rows");
}

Tensor log_softmax_rows(const Tensor& a) {
  require_rank2(a, "log_softmax_rows");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (int i = 0; i < m; ++i) {
    const size_t base = static_cast<size_t>(i) * n;
    double mx = av[base];
    for (int j = 1; j < n; ++j) mx = std::max(mx, av[base + j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(av[base + j] - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < n; ++j) out[base + j] = av[base + j] - lse;
  }
  std::vector<double> saved = out;
  return wrap_result(
      {m, n}, std::move(out), {a},
      [m, n, saved = std::move(saved)](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (int i = 0; i < m; ++i) {
          const size_t base = static_cast<size_t>(i) * n;
          double gsum = 0.0;
          for (int j = 0; j < n; ++j) gsum += o.grad[base + j];
          for (int j = 0; j < n; ++j)
            acc(pa, base + j, o.grad[base + j] - std::exp(saved[base + j]) * gsum);
        }
      },
      "log_softmax_rows");
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  return wrap_result(
      {1}, {s}, {a},
      [](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (size_t i = 0; i < pa.data.size(); ++i) acc(pa, i, o.grad[0]);
      },
      "sum");
}

Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  const double n = static_cast<double>(a.size());
  return wrap_result(
      {1}, {s / n}, {a},
      [n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        const double g = o.grad[0] / n;
        for (size_t i = 0; i < pa.data.size(); ++i) acc(pa, i, g);
      },
      "mean");
}

Tensor row_sum(const Tensor& a) {
  require_rank2(a, "row_sum");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<size_t>(m), 0.0);
  const auto av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i)] += av[static_cast<size_t>(i) * n + j];
  return wrap_result(
      {m, 1}, std::move(out), {a},
      [m, n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            acc(pa, static_cast<size_t>(i) * n + j, o.grad[static_cast<size_t>(i)]);
      },
      "row_sum");
}

// ---- broadcasting helpers ----

Tensor add_rowvec(const Tensor& m, const Tensor& row) {
  require_rank2(m, "add_rowvec");
  require_rank2(row, "add_rowvec");
  if (row.rows() != 1 || row.cols() != m.cols())
    throw ShapeError("add_rowvec: " + shape_str(m.shape()) + " + " + shape_str(row.shape()));
  const int r = m.rows(), n = m.cols();
  std::vector<double> out(m.size());
  const auto mv = m.values();
  const auto rv = row.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] = mv[static_cast<size_t>(i) * n + j] + rv[static_cast<size_t>(j)];
  return wrap_result(
      {r, n}, std::move(out), {m, row},
      [r, n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        prep(o.parents[1]);
        auto& pm = *o.parents[0];
        auto& pr = *o.parents[1];
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < n; ++j) {
            const double g = o.grad[static_cast<size_t>(i) * n + j];
            if (pm.requires_grad) acc(pm, static_cast<size_t>(i) * n + j, g);
            if (pr.requires_grad) acc(pr, static_cast<size_t>(j), g);
          }
      },
      "add_rowvec");
}

Tensor mul_colvec(const Tensor& m, const Tensor& col) {
  require_rank2(m, "mul_colvec");
  require_rank2(col, "mul_colvec");
  if (col.cols() != 1 || col.rows() != m.rows())
    throw ShapeError("mul_colvec: " + shape_str(m.shape()) + " * " + shape_str(col.shape()));
  const int r = m.rows(), n = m.cols();
  std::vector<double> out(m.size());
  const auto mv = m.values();
  const auto cv = col.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] = mv[static_cast<size_t>(i) * n + j] * cv[static_cast<size_t>(i)];
  return wrap_result(
      {r, n}, std::move(out), {m, col},
      [r, n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        prep(o.parents[1]);
        auto& pm = *o.parents[0];
        auto& pc = *o.parents[1];
        for (int i = 0; i < r; ++i) {
          const double c = pc.data[static_cast<size_t>(i)];
          double s = 0.0;
          for (int j = 0; j < n; ++j) {
            const size_t k = static_cast<size_t>(i) * n + j;
            if (pm.requires_grad) acc(pm, k, o.grad[k] * c);
            s += o.grad[k] * pm.data[k];
          }
          if (pc.requires_grad) acc(pc, static_cast<size_t>(i), s);
        }
      },
      "mul_colvec");
}

Tensor div_colvec(const Tensor& m, const Tensor& col) {
  require_rank2(m, "div_colvec");
  require_rank2(col, "div_colvec");
  if (col.cols() != 1 || col.rows() != m.rows())
    throw ShapeError("div_colvec: " + shape_str(m.shape()) + " / " + shape_str(col.shape()));
  const int r = m.rows(), n = m.cols();
  std::vector<double> out(m.size());
  const auto mv = m.values();
  const auto cv = col.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] = mv[static_cast<size_t>(i) * n + j] / cv[static_cast<size_t>(i)];
  return wrap_result(
      {r, n}, std::move(out), {m, col},
      [r, n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        prep(o.parents[1]);
        auto& pm = *o.parents[0];
        auto& pc = *o.parents[1];
        for (int i = 0; i < r; ++i) {
          const double inv = 1.0 / pc.data[static_cast<size_t>(i)];
          double s = 0.0;
          for (int j = 0; j < n; ++j) {
            const size_t k = static_cast<size_t>(i) * n + j;
            if (pm.requires_grad) acc(pm, k, o.grad[k] * inv);
            s += o.grad[k] * pm.data[k];
          }
          if (pc.requires_grad) acc(pc, static_cast<size_t>(i), -s * inv * inv);
        }
      },
      "div_colvec");
}

// ---- structure ops ----

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const int n = parts[0].cols();
  int total = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != n)
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(total) * n);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  std::vector<int> row_counts;
  row_counts.reserve(parts.size());
  for (const Tensor& p : parts) row_counts.push_back(p.rows());
  return wrap_result(
      {total, n}, std::move(out), parts,
      [n, row_counts = std::move(row_counts)](detail::TensorImpl& o) {
        size_t off = 0;
        for (size_t pi = 0; pi < o.parents.size(); ++pi) {
          prep(o.parents[pi]);
          auto& p = *o.parents[pi];
          const size_t cnt = static_cast<size_t>(row_counts[pi]) * n;
          if (p.requires_grad)
            for (size_t i = 0; i < cnt; ++i) acc(p, i, o.grad[off + i]);
          off += cnt;
        }
      },
      "concat_rows");
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  if (a.rows() != b.rows())
    throw ShapeError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const int m = a.rows(), na = a.cols(), nb = b.cols();
  std::vector<double> out(static_cast<size_t>(m) * (na + nb));
  const auto av = a.values();
  const auto bv = b.values();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < na; ++j)
      out[static_cast<size_t>(i) * (na + nb) + j] = av[static_cast<size_t>(i) * na + j];
    for (int j = 0; j < nb; ++j)
      out[static_cast<size_t>(i) * (na + nb) + na + j] = bv[static_cast<size_t>(i) * nb + j];
  }
  return wrap_result(
      {m, na + nb}, std::move(out), {a, b},
      [m, na, nb](detail::TensorImpl& o) {
        prep(o.parents[0]);
        prep(o.parents[1]);
        auto& pa = *o.parents[0];
        auto& pb = *o.parents[1];
        for (int i = 0; i < m; ++i) {
          if (pa.requires_grad)
            for (int j = 0; j < na; ++j)
              acc(pa, static_cast<size_t>(i) * na + j,
                  o.grad[static_cast<size_t>(i) * (na + nb) + j]);
          if (pb.requires_grad)
            for (int j = 0; j < nb; ++j)
              acc(pb, static_cast<size_t>(i) * nb + j,
                  o.grad[static_cast<size_t>(i) * (na + nb) + na + j]);
        }
      },
      "concat_cols");
}

Tensor slice_rows(const Tensor& a, int start, int len) {
  require_rank2(a, "slice_rows");
  const int m = a.rows(), n = a.cols();
  if (start < 0 || len <= 0 || start + len > m)
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for " + shape_str(a.shape()));
  std::vector<double> out(static_cast<size_t>(len) * n);
  const auto av = a.values();
  std::copy(av.begin() + static_cast<size_t>(start) * n,
            av.begin() + static_cast<size_t>(start + len) * n, out.begin());
  return wrap_result(
      {len, n}, std::move(out), {a},
      [start, len, n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        const size_t cnt = static_cast<size_t>(len) * n;
        const size_t off = static_cast<size_t>(start) * n;
        for (size_t i = 0; i < cnt; ++i) acc(pa, off + i, o.grad[i]);
      },
      "slice_rows");
}

Tensor slice_cols(const Tensor& a, int start, int len) {
  require_rank2(a, "slice_cols");
  const int m = a.rows(), n = a.cols();
  if (start < 0 || len <= 0 || start + len > n)
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for " + shape_str(a.shape()));
  std::vector<double> out(static_cast<size_t>(m) * len);
  const auto av = a.values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j)
      out[static_cast<size_t>(i) * len + j] = av[static_cast<size_t>(i) * n + start + j];
  return wrap_result(
      {m, len}, std::move(out), {a},
      [m, n, start, len](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < len; ++j)
            acc(pa, static_cast<size_t>(i) * n + start + j, o.grad[static_cast<size_t>(i) * len + j]);
      },
      "slice_cols");
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& idx) {
  require_rank2(table, "gather_rows");
  const int v = table.rows(), n = table.cols();
  for (int i : idx)
    if (i < 0 || i >= v)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                       shape_str(table.shape()));
  std::vector<double> out(idx.size() * static_cast<size_t>(n));
  const auto tv = table.values();
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(tv.begin() + static_cast<size_t>(idx[r]) * n,
              tv.begin() + static_cast<size_t>(idx[r] + 1) * n, out.begin() + r * n);
  return wrap_result(
      {static_cast<int>(idx.size()), n}, std::move(out), {table},
      [idx, n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pt = *o.parents[0];
        for (size_t r = 0; r < idx.size(); ++r)
          for (int j = 0; j < n; ++j)
            acc(pt, static_cast<size_t>(idx[r]) * n + j, o.grad[r * n + j]);
      },
      "gather_rows");
}

Tensor gather_cols(const Tensor& a, const std::vector<int>& idx) {
  require_rank2(a, "gather_cols");
  const int m = a.rows(), n = a.cols();
  if (static_cast<int>(idx.size()) != m)
    throw ShapeError("gather_cols: need one index per row, got " + std::to_string(idx.size()) +
                     " for " + shape_str(a.shape()));
  for (int i : idx)
    if (i < 0 || i >= n) throw ShapeError("gather_cols: column index out of range");
  std::vector<double> out(static_cast<size_t>(m));
  const auto av = a.values();
  for (int i = 0; i < m; ++i)
    out[static_cast<size_t>(i)] = av[static_cast<size_t>(i) * n + idx[static_cast<size_t>(i)]];
  return wrap_result(
      {m, 1}, std::move(out), {a},
      [idx, n](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (size_t i = 0; i < idx.size(); ++i)
          acc(pa, i * n + static_cast<size_t>(idx[i]), o.grad[i]);
      },
      "gather_cols");
}

Tensor reshape(const Tensor& a, Shape shape) {
  validate_shape(shape);
  if (shape_numel(shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return wrap_result(
      std::move(shape), std::move(out), {a},
      [](detail::TensorImpl& o) {
        prep(o.parents[0]);
        if (!wants(o.parents[0])) return;
        auto& pa = *o.parents[0];
        for (size_t i = 0; i < o.grad.size(); ++i) acc(pa, i, o.grad[i]);
      },
      "reshape");
}

// ---- backward ----

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward: loss must be a one-element tensor");
  auto root = loss.impl();

  // Reachable interior set; creation ids give a valid topological order.
  std::vector<std::shared_ptr<detail::TensorImpl>> nodes;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::shared_ptr<detail::TensorImpl>> stack{root};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    nodes.push_back(cur);
    for (auto& p : cur->parents)
      if (seen.insert(p.get()).second) stack.push_back(p);
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });

  // Interior grads are per-sweep scratch; leaves accumulate across sweeps.
  for (auto& n : nodes)
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  root->ensure_grad();
  if (root->is_leaf()) {
    root->grad[0] += 1.0;
    return;
  }
  root->grad[0] = 1.0;

  for (auto& n : nodes)
    if (n->backward_fn) n->backward_fn(*n);
}

// ---- finite differences ----

double finite_diff_check(const std::function<Tensor()>& build_loss,
                         const std::vector<Tensor>& params, const FiniteDiffOptions& opts) {
  // Analytic pass.
  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
  Tensor loss = build_loss();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    if (p.has_grad())
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    else
      analytic.emplace_back(p.size(), 0.0);
  }

  const double h = opts.step;
  double worst = 0.0;
  Rng rng(opts.seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto vals = p.values_mut();
    std::vector<size_t> coords;
    const size_t n = vals.size();
    if (opts.max_coords_per_param <= 0 || n <= static_cast<size_t>(opts.max_coords_per_param)) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      // Half by largest analytic magnitude, half seeded-uniform.
      const size_t cap = static_cast<size_t>(opts.max_coords_per_param);
      std::vector<size_t> order(n);
      for (size_t i = 0; i < n; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return std::abs(analytic[pi][a]) > std::abs(analytic[pi][b]);
      });
      std::unordered_set<size_t> picked;
      for (size_t i = 0; i < cap / 2 && i < n; ++i) picked.insert(order[i]);
      while (picked.size() < cap) picked.insert(static_cast<size_t>(rng.uniform_int(static_cast<int>(n))));
      coords.assign(picked.begin(), picked.end());
      std::sort(coords.begin(), coords.end());
    }
    for (size_t ci : coords) {
      const double orig = vals[ci];
      vals[ci] = orig + h;
      const double fp = build_loss().item();
      vals[ci] = orig - h;
      const double fm = build_loss().item();
      vals[ci] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][ci];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace hcvae
