#include "advnlg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace advnlg {

namespace {

thread_local Tape* g_active_tape = nullptr;

bool tracked(const Tensor& t) {
  return t.impl()->node >= 0 || t.impl()->requires_grad;
}

std::vector<double>& grad_of(const std::shared_ptr<TensorData>& d) {
  if (d->grad.empty()) d->grad.assign(d->values.size(), 0.0);
  return d->grad;
}

void check_finite_shape(const Shape& s) {
  for (std::size_t dim : s) {
    if (dim == 0) throw DimensionError("zero-sized dimension in shape " + shape_str(s));
  }
}

// Broadcast classification for binary elementwise ops: the rhs must have the
// same shape, be a scalar, or match the trailing dimensions of the lhs.
enum class Broadcast { kSame, kScalar, kTrailing };

Broadcast classify(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kSame;
  if (numel(b) == 1) return Broadcast::kScalar;
  if (b.size() <= a.size() &&
      std::equal(b.rbegin(), b.rend(), a.rbegin())) {
    return Broadcast::kTrailing;
  }
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                       " and " + shape_str(b));
}

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  check_finite_shape(shape);
  if (numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.d_ = std::make_shared<TensorData>();
  t.d_->shape = std::move(shape);
  t.d_->values = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::leaf(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.d_->requires_grad = true;
  return t;
}

double Tensor::value() const {
  if (size() != 1) throw UsageError("Tensor::value on non-scalar " + shape_str(shape()));
  return d_->values[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!d_ || d_->grad.empty()) throw UsageError("gradient not populated");
  return d_->grad;
}

std::vector<double>& Tensor::grad_buffer() { return grad_of(d_); }

void Tensor::zero_grad() { d_->grad.clear(); }

// ---- Tape -------------------------------------------------------------------

Tape* Tape::active() { return g_active_tape; }

int Tape::record(std::function<void()> backprop) {
  nodes_.push_back(std::move(backprop));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw UsageError("backward requires a scalar loss");
  }
  loss.impl()->grad.assign(1, 1.0);
  int start = loss.impl()->node;
  for (int i = start; i >= 0; --i) nodes_[static_cast<std::size_t>(i)]();
}

GradientTape::GradientTape() : prev_(g_active_tape) { g_active_tape = &tape_; }
GradientTape::~GradientTape() { g_active_tape = prev_; }

ScopedNoTape::ScopedNoTape() : prev_(g_active_tape) { g_active_tape = nullptr; }
ScopedNoTape::~ScopedNoTape() { g_active_tape = prev_; }

// ---- Op plumbing --------------------------------------------------------------

namespace {

// Records `backprop` when a tape is active and any input is tracked.
template <typename MakeBackprop>
void maybe_record(Tensor& out, std::initializer_list<const Tensor*> inputs,
                  MakeBackprop make_backprop) {
  Tape* tape = Tape::active();
  if (!tape) return;
  bool any = false;
  for (const Tensor* t : inputs) any = any || tracked(*t);
  if (!any) return;
  out.impl()->node = tape->record(make_backprop());
}

bool want_grad(const std::shared_ptr<TensorData>& d) {
  return d->node >= 0 || d->requires_grad;
}

}  // namespace

// ---- Core ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = av[i * k + l];
      if (ail == 0.0) continue;
      const double* brow = bv + l * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += ail * brow[j];
    }
  }
  Tensor res = Tensor::constant({m, n}, std::move(out));
  maybe_record(res, {&a, &b}, [&] {
    auto od = res.impl(), ad = a.impl(), bd = b.impl();
    return [od, ad, bd, m, k, n]() {
      const auto& g = od->grad;
      if (g.empty()) return;
      if (want_grad(ad)) {
        auto& da = grad_of(ad);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const double gij = g[i * n + j];
            if (gij == 0.0) continue;
            for (std::size_t l = 0; l < k; ++l)
              da[i * k + l] += gij * bd->values[l * n + j];
          }
      }
      if (want_grad(bd)) {
        auto& db = grad_of(bd);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t l = 0; l < k; ++l) {
            const double ail = ad->values[i * k + l];
            if (ail == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j)
              db[l * n + j] += ail * g[i * n + j];
          }
      }
    };
  });
  return res;
}

namespace {

Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          bool is_mul) {
  Broadcast bc = classify(a.shape(), b.shape(), name);
  const std::size_t n = a.size();
  const std::size_t bn = b.size();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    const double rhs = bc == Broadcast::kScalar ? bv[0] : bv[i % bn];
    out[i] = is_mul ? av[i] * rhs : av[i] + rhs;
  }
  Tensor res = Tensor::constant(a.shape(), std::move(out));
  maybe_record(res, {&a, &b}, [&] {
    auto od = res.impl(), ad = a.impl(), bd = b.impl();
    return [od, ad, bd, n, bn, is_mul]() {
      const auto& g = od->grad;
      if (g.empty()) return;
      if (want_grad(ad)) {
        auto& da = grad_of(ad);
        if (is_mul) {
          for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bd->values[i % bn];
        } else {
          for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
        }
      }
      if (want_grad(bd)) {
        auto& db = grad_of(bd);
        if (is_mul) {
          for (std::size_t i = 0; i < n; ++i) db[i % bn] += g[i] * ad->values[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) db[i % bn] += g[i];
        }
      }
    };
  });
  return res;
}

template <typename Fwd, typename Dydx>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Dydx dydx) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x.values()[i]);
  Tensor res = Tensor::constant(x.shape(), std::move(out));
  maybe_record(res, {&x}, [&] {
    auto od = res.impl(), xd = x.impl();
    return [od, xd, n, dydx]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(xd)) return;
      auto& dx = grad_of(xd);
      for (std::size_t i = 0; i < n; ++i)
        dx[i] += g[i] * dydx(xd->values[i], od->values[i]);
    };
  });
  return res;
}

double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "add", false); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, "mul", true); }
Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor neg(const Tensor& x) {
  return unary_elementwise(x, [](double v) { return -v; },
                           [](double, double) { return -1.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(x, sigmoid_stable,
                           [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(x, [](double v) { return std::tanh(v); },
                           [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(x, [](double v) { return std::exp(v); },
                           [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) {
      throw DomainError("log of nonpositive value " + std::to_string(v));
    }
  }
  return unary_elementwise(x, [](double v) { return std::log(v); },
                           [](double v, double) { return 1.0 / v; });
}

Tensor safe_log(const Tensor& x) {
  // NaN propagates; only genuine nonpositive values clamp.
  return unary_elementwise(
      x,
      [](double v) {
        if (std::isnan(v)) return v;
        return v > 0.0 ? std::max(std::log(v), -1e10) : -1e10;
      },
      [](double v, double) { return v > 0.0 ? 1.0 / v : 0.0; });
}

Tensor scale(const Tensor& x, double c) {
  return unary_elementwise(x, [c](double v) { return c * v; },
                           [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_elementwise(x, [c](double v) { return v + c; },
                           [](double, double) { return 1.0; });
}

Tensor softmax(const Tensor& x) {
  if (x.shape().empty()) throw DimensionError("softmax on empty shape");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  std::vector<double> out(x.size());
  const auto& xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double* orow = out.data() + r * d;
    double mx = row[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    for (std::size_t j = 0; j < d; ++j) orow[j] /= total;
  }
  Tensor res = Tensor::constant(x.shape(), std::move(out));
  maybe_record(res, {&x}, [&] {
    auto od = res.impl(), xd = x.impl();
    return [od, xd, rows, d]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(xd)) return;
      auto& dx = grad_of(xd);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = od->values.data() + r * d;
        const double* gr = g.data() + r * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += gr[j] * y[j];
        for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += y[j] * (gr[j] - dot);
      }
    };
  });
  return res;
}

Tensor embed(const Tensor& table, std::span<const int> ids) {
  if (table.shape().size() != 2) {
    throw DimensionError("embed: table must be 2-d, got " + shape_str(table.shape()));
  }
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<double> out;
  out.reserve(ids.size() * d);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw IndexError("embed: token id " + std::to_string(id) +
                       " out of range for vocabulary of " + std::to_string(v));
    }
    const double* row = table.values().data() + static_cast<std::size_t>(id) * d;
    out.insert(out.end(), row, row + d);
  }
  Tensor res = Tensor::constant({ids.size(), d}, std::move(out));
  std::vector<int> idv(ids.begin(), ids.end());
  maybe_record(res, {&table}, [&] {
    auto od = res.impl(), td = table.impl();
    return [od, td, idv = std::move(idv), d]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(td)) return;
      auto& dt = grad_of(td);
      for (std::size_t i = 0; i < idv.size(); ++i) {
        double* drow = dt.data() + static_cast<std::size_t>(idv[i]) * d;
        const double* grow = g.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) drow[j] += grow[j];
      }
    };
  });
  return res;
}

Tensor embed(const Tensor& table, const Tensor& rows) {
  if (rows.shape().size() != 2 || rows.dim(1) != table.dim(0)) {
    throw DimensionError("embed: distribution rows " + shape_str(rows.shape()) +
                         " do not match table " + shape_str(table.shape()));
  }
  const std::size_t n = rows.dim(0), v = rows.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += rows.values()[i * v + j];
    if (std::abs(s - 1.0) > 1e-6) {
      throw UsageError("embed: distribution row " + std::to_string(i) +
                       " sums to " + std::to_string(s));
    }
  }
  return matmul(rows, table);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " +
                         shape_str(shape) + " changes element count");
  }
  Tensor res = Tensor::constant(std::move(shape), x.values());
  maybe_record(res, {&x}, [&] {
    auto od = res.impl(), xd = x.impl();
    return [od, xd]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(xd)) return;
      auto& dx = grad_of(xd);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    };
  });
  return res;
}

namespace {

// Vectors and single-row matrices are interchangeable for concat/stack.
std::size_t flat_len(const Tensor& t, const char* op) {
  const Shape& s = t.shape();
  if (s.size() == 1 || (s.size() == 2 && s[0] == 1)) return t.size();
  throw DimensionError(std::string(op) + ": expected vector or row, got " +
                       shape_str(s));
}

}  // namespace

Tensor concat(const Tensor& a, const Tensor& b) {
  const std::size_t la = flat_len(a, "concat"), lb = flat_len(b, "concat");
  std::vector<double> out;
  out.reserve(la + lb);
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  Shape shape = a.shape().size() == 2 ? Shape{1, la + lb} : Shape{la + lb};
  Tensor res = Tensor::constant(std::move(shape), std::move(out));
  maybe_record(res, {&a, &b}, [&] {
    auto od = res.impl(), ad = a.impl(), bd = b.impl();
    return [od, ad, bd, la, lb]() {
      const auto& g = od->grad;
      if (g.empty()) return;
      if (want_grad(ad)) {
        auto& da = grad_of(ad);
        for (std::size_t i = 0; i < la; ++i) da[i] += g[i];
      }
      if (want_grad(bd)) {
        auto& db = grad_of(bd);
        for (std::size_t i = 0; i < lb; ++i) db[i] += g[la + i];
      }
    };
  });
  return res;
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw UsageError("stack_rows: no rows");
  const std::size_t d = flat_len(rows[0], "stack_rows");
  std::vector<double> out;
  out.reserve(rows.size() * d);
  for (const Tensor& r : rows) {
    if (flat_len(r, "stack_rows") != d) {
      throw DimensionError("stack_rows: row length mismatch");
    }
    out.insert(out.end(), r.values().begin(), r.values().end());
  }
  Tensor res = Tensor::constant({rows.size(), d}, std::move(out));
  Tape* tape = Tape::active();
  bool any = false;
  for (const Tensor& r : rows) any = any || tracked(r);
  if (tape && any) {
    std::vector<std::shared_ptr<TensorData>> parents;
    parents.reserve(rows.size());
    for (const Tensor& r : rows) parents.push_back(r.impl());
    auto od = res.impl();
    res.impl()->node = tape->record([od, parents = std::move(parents), d]() {
      const auto& g = od->grad;
      if (g.empty()) return;
      for (std::size_t i = 0; i < parents.size(); ++i) {
        if (!want_grad(parents[i])) continue;
        auto& dp = grad_of(parents[i]);
        const double* grow = g.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dp[j] += grow[j];
      }
    });
  }
  return res;
}

Tensor pick(const Tensor& x, std::size_t i) {
  if (i >= x.size()) {
    throw IndexError("pick: index " + std::to_string(i) + " out of range for " +
                     shape_str(x.shape()));
  }
  Tensor res = Tensor::scalar(x.values()[i]);
  maybe_record(res, {&x}, [&] {
    auto od = res.impl(), xd = x.impl();
    return [od, xd, i]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(xd)) return;
      grad_of(xd)[i] += g[0];
    };
  });
  return res;
}

Tensor narrow(const Tensor& x, std::size_t start, std::size_t len) {
  if (x.shape().size() != 1 || start + len > x.size() || len == 0) {
    throw DimensionError("narrow: invalid range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") for " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(x.values().begin() + static_cast<std::ptrdiff_t>(start),
                          x.values().begin() + static_cast<std::ptrdiff_t>(start + len));
  Tensor res = Tensor::constant({len}, std::move(out));
  maybe_record(res, {&x}, [&] {
    auto od = res.impl(), xd = x.impl();
    return [od, xd, start, len]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(xd)) return;
      auto& dx = grad_of(xd);
      for (std::size_t i = 0; i < len; ++i) dx[start + i] += g[i];
    };
  });
  return res;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor res = Tensor::scalar(total);
  maybe_record(res, {&x}, [&] {
    auto od = res.impl(), xd = x.impl();
    return [od, xd]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(xd)) return;
      auto& dx = grad_of(xd);
      for (double& v : dx) v += g[0];
    };
  });
  return res;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor dropout(const Tensor& x, double rate, RngStream& rng, bool train) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x.values()[i] * mask[i];
  Tensor res = Tensor::constant(x.shape(), std::move(out));
  maybe_record(res, {&x}, [&] {
    auto od = res.impl(), xd = x.impl();
    return [od, xd, mask = std::move(mask)]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(xd)) return;
      auto& dx = grad_of(xd);
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
    };
  });
  return res;
}

Tensor straight_through(const Tensor& hard, const Tensor& relaxed) {
  if (hard.shape() != relaxed.shape()) {
    throw DimensionError("straight_through: shape mismatch " + shape_str(hard.shape()) +
                         " vs " + shape_str(relaxed.shape()));
  }
  Tensor res = Tensor::constant(hard.shape(), hard.values());
  maybe_record(res, {&relaxed}, [&] {
    auto od = res.impl(), rd = relaxed.impl();
    return [od, rd]() {
      const auto& g = od->grad;
      if (g.empty() || !want_grad(rd)) return;
      auto& dr = grad_of(rd);
      for (std::size_t i = 0; i < g.size(); ++i) dr[i] += g[i];
    };
  });
  return res;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool train, double eps, double momentum) {
  if (x.shape().size() != 2) {
    throw DimensionError("batch_norm: input must be [batch x features], got " +
                         shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), d = x.dim(1);
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("batch_norm: gamma/beta size mismatch");
  }
  if (state.running_mean.size() != d || state.running_var.size() != d) {
    throw DimensionError("batch_norm: running stats size mismatch");
  }
  if (train && b < 2) {
    throw ConfigError("batch_norm: train mode requires batch size >= 2, got " +
                      std::to_string(b));
  }

  std::vector<double> mu(d, 0.0), var(d, 0.0), inv(d);
  const auto& xv = x.values();
  if (train) {
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) mu[j] += xv[i * d + j];
    for (std::size_t j = 0; j < d; ++j) mu[j] /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = xv[i * d + j] - mu[j];
        var[j] += c * c;
      }
    for (std::size_t j = 0; j < d; ++j) var[j] /= static_cast<double>(b);
    // Unbiased variance feeds the running estimate (b >= 2 guaranteed above).
    const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
    for (std::size_t j = 0; j < d; ++j) {
      state.running_mean[j] = (1.0 - momentum) * state.running_mean[j] + momentum * mu[j];
      state.running_var[j] = (1.0 - momentum) * state.running_var[j] + momentum * var[j] * unbias;
    }
  } else {
    mu = state.running_mean;
    var = state.running_var;
  }
  for (std::size_t j = 0; j < d; ++j) inv[j] = 1.0 / std::sqrt(var[j] + eps);

  std::vector<double> xhat(b * d), out(b * d);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xv[i * d + j] - mu[j]) * inv[j];
      out[i * d + j] = gamma.values()[j] * xhat[i * d + j] + beta.values()[j];
    }
  Tensor res = Tensor::constant({b, d}, std::move(out));
  maybe_record(res, {&x, &gamma, &beta}, [&] {
    auto od = res.impl(), xd = x.impl(), gd = gamma.impl(), bd = beta.impl();
    return [od, xd, gd, bd, xhat = std::move(xhat), inv = std::move(inv), b, d,
            train]() {
      const auto& g = od->grad;
      if (g.empty()) return;
      if (want_grad(gd)) {
        auto& dg = grad_of(gd);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < d; ++j) dg[j] += g[i * d + j] * xhat[i * d + j];
      }
      if (want_grad(bd)) {
        auto& db = grad_of(bd);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
      }
      if (want_grad(xd)) {
        auto& dx = grad_of(xd);
        if (train) {
          // Batch statistics depend on x, so the mean/variance paths fold in.
          for (std::size_t j = 0; j < d; ++j) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
              sum_g += g[i * d + j];
              sum_gx += g[i * d + j] * xhat[i * d + j];
            }
            const double gj = gd->values[j] * inv[j];
            const double nb = static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
              dx[i * d + j] += gj * (g[i * d + j] - sum_g / nb -
                                     xhat[i * d + j] * sum_gx / nb);
            }
          }
        } else {
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j)
              dx[i * d + j] += g[i * d + j] * gd->values[j] * inv[j];
        }
      }
    };
  });
  return res;
}

// ---- ParamStore ---------------------------------------------------------------

ParamStore::ParamStore(std::string prefix) : prefix_(std::move(prefix)) {}

Tensor& ParamStore::add(const std::string& name, Shape shape,
                        std::vector<double> init) {
  if (name.empty()) throw UsageError("parameter name must be nonempty");
  if (params_.count(name)) throw UsageError("duplicate parameter '" + name + "'");
  Tensor t = Tensor::leaf(std::move(shape), std::move(init));
  rms_[name].assign(t.size(), 0.0);
  return params_.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::add_uniform(const std::string& name, Shape shape, double bound,
                                RngStream& rng) {
  std::vector<double> init(numel(shape));
  for (double& v : init) v = rng.uniform(-bound, bound);
  return add(name, std::move(shape), std::move(init));
}

Tensor& ParamStore::add_xavier(const std::string& name, std::size_t rows,
                               std::size_t cols, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return add_uniform(name, {rows, cols}, bound, rng);
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) > 0;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [k, _] : params_) out.push_back(k);
  return out;
}

BatchNormState& ParamStore::add_batch_norm_state(const std::string& name,
                                                 std::size_t features) {
  if (bn_.count(name)) throw UsageError("duplicate batch-norm state '" + name + "'");
  BatchNormState s;
  s.running_mean.assign(features, 0.0);
  s.running_var.assign(features, 1.0);
  return bn_.emplace(name, std::move(s)).first->second;
}

void ParamStore::zero_grads() {
  for (auto& [_, t] : params_) t.zero_grad();
}

std::uint64_t ParamStore::values_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const unsigned char* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : params_) {
    feed(name.data(), name.size());
    feed(t.values().data(), t.values().size() * sizeof(double));
  }
  return h;
}

std::vector<double>& ParamStore::rms_accumulator(const std::string& name) {
  auto it = rms_.find(name);
  if (it == rms_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

void rmsprop_step(ParamStore& store, double lr, double decay, double eps) {
  for (const std::string& name : store.names()) {
    Tensor& p = store.get(name);
    if (!p.has_grad()) {
      throw UsageError("rmsprop_step: missing gradient for '" + store.prefix() +
                       "." + name + "'");
    }
    auto& acc = store.rms_accumulator(name);
    auto& vals = p.mutable_values();
    const auto& g = p.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      acc[i] = decay * acc[i] + (1.0 - decay) * g[i] * g[i];
      vals[i] -= lr * g[i] / (std::sqrt(acc[i]) + eps);
    }
    p.zero_grad();
  }
}

void clip_weights(ParamStore& store, double c) {
  if (!(c > 0.0)) throw ConfigError("clip_weights: c must be positive");
  for (const std::string& name : store.names()) {
    for (double& v : store.get(name).mutable_values()) {
      v = std::clamp(v, -c, c);
    }
  }
}

}  // namespace advnlg
