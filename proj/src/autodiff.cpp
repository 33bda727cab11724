#include "bdrlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bdrlab/error.hpp"

namespace bdrlab {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void add_into(std::vector<double>& dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

// --- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape_) + " cannot hold " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::span<const double> values) {
  return Tensor({values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::column(std::span<const double> values) {
  return Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const noexcept {
  if (shape_.empty()) return 1;
  return shape_.size() == 1 ? 1 : shape_[0];
}

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) return 1;
  return shape_.size() == 1 ? shape_[0] : shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw StateError("tensor has no gradient; run backward first");
  return *grad_;
}

void Tensor::accumulate_grad(std::span<const double> delta) {
  if (delta.size() != data_.size()) throw DimensionError("gradient size does not match tensor size");
  if (!grad_) grad_.emplace(data_.size(), 0.0);
  add_into(*grad_, delta);
}

Tensor Tensor::row_slice(std::size_t begin, std::size_t end) const {
  if (rank() != 2 || begin > end || end > rows()) throw IndexError("row slice out of range");
  const std::size_t c = cols();
  return Tensor({end - begin, c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                      data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::select_rows(std::span<const std::size_t> idx) const {
  if (rank() != 2) throw DimensionError("select_rows on non-matrix " + shape_string(shape_));
  const std::size_t c = cols();
  std::vector<double> out;
  out.reserve(idx.size() * c);
  for (std::size_t r : idx) {
    if (r >= rows()) throw IndexError("row " + std::to_string(r) + " out of range " + std::to_string(rows()));
    out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * c),
               data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
  }
  return Tensor({idx.size(), c}, std::move(out));
}

// --- Tape ------------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::leaf(Tensor value) {
  Node node;
  node.needs_grad = value.requires_grad();
  node.is_leaf = true;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].needs_grad; });
  if (node.needs_grad) node.backward = std::move(backward);
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: variable belongs to another tape");
  const Tensor& out = value(loss);
  if (out.size() != 1) throw ContractError("backward needs a scalar loss, got shape " + shape_string(out.shape()));

  Adjoints adj(loss.index + 1);
  for (std::size_t i = 0; i <= loss.index; ++i) {
    if (nodes_[i].needs_grad) adj[i].assign(nodes_[i].value.size(), 0.0);
  }
  if (!nodes_[loss.index].needs_grad) return;
  adj[loss.index][0] = 1.0;

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.needs_grad) continue;
    if (node.is_leaf) {
      node.value.accumulate_grad(adj[i]);
    } else if (node.backward) {
      node.backward(adj[i], adj);
    }
  }
}

// --- operations ------------------------------------------------------------

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError(std::string(op) + ": operands on different tapes");
  return *a.tape;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix(A, "matmul");
  require_matrix(B, "matmul");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(A.shape()) + " and " +
                         shape_string(B.shape()));
  }
  Tensor C = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) C.at(i, j) += aip * B.at(p, j);
    }
  }
  const std::size_t ia = a.index, ib = b.index;
  return tape.record(std::move(C), {ia, ib}, [&tape, ia, ib, m, k, n](std::span<const double> g, Tape::Adjoints& adj) {
    const Tensor& A = tape.value(Var{&tape, ia});
    const Tensor& B = tape.value(Var{&tape, ib});
    if (tape.needs_grad(ia)) {
      auto& ga = adj[ia];  // g . B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * B.at(p, j);
          ga[i * k + p] += s;
        }
    }
    if (tape.needs_grad(ib)) {
      auto& gb = adj[ib];  // A^T . g
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A.at(i, p);
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.set_requires_grad(false);
  out.zero_grad();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.index, ib = b.index;
  return tape.record(std::move(out), {ia, ib}, [&tape, ia, ib](std::span<const double> g, Tape::Adjoints& adj) {
    if (tape.needs_grad(ia)) add_into(adj[ia], g);
    if (tape.needs_grad(ib)) add_into(adj[ib], g);
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const std::size_t ia = a.index, ib = b.index;
  return tape.record(Tensor(a.shape(), std::move(out)), {ia, ib},
                     [&tape, ia, ib](std::span<const double> g, Tape::Adjoints& adj) {
                       if (tape.needs_grad(ia)) add_into(adj[ia], g);
                       if (tape.needs_grad(ib))
                         for (std::size_t i = 0; i < g.size(); ++i) adj[ib][i] -= g[i];
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const std::size_t ia = a.index, ib = b.index;
  return tape.record(Tensor(a.shape(), std::move(out)), {ia, ib},
                     [&tape, ia, ib](std::span<const double> g, Tape::Adjoints& adj) {
                       const Tensor& A = tape.value(Var{&tape, ia});
                       const Tensor& B = tape.value(Var{&tape, ib});
                       if (tape.needs_grad(ia))
                         for (std::size_t i = 0; i < g.size(); ++i) adj[ia][i] += g[i] * B[i];
                       if (tape.needs_grad(ib))
                         for (std::size_t i = 0; i < g.size(); ++i) adj[ib][i] += g[i] * A[i];
                     });
}

Var scale(Var a, double factor) {
  Tape& tape = *a.tape;
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  const std::size_t ia = a.index;
  return tape.record(Tensor(a.shape(), std::move(out)), {ia},
                     [ia, factor](std::span<const double> g, Tape::Adjoints& adj) {
                       for (std::size_t i = 0; i < g.size(); ++i) adj[ia][i] += g[i] * factor;
                     });
}

Var add_row(Var a, Var row) {
  Tape& tape = same_tape(a, row, "add_row");
  const Tensor& A = a.value();
  const Tensor& R = row.value();
  require_matrix(A, "add_row");
  if (R.size() != A.cols()) {
    throw DimensionError("add_row: row of shape " + shape_string(R.shape()) + " does not fit " +
                         shape_string(A.shape()));
  }
  const std::size_t m = A.rows(), n = A.cols();
  std::vector<double> out(A.values());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += R[j];
  const std::size_t ia = a.index, ir = row.index;
  return tape.record(Tensor(A.shape(), std::move(out)), {ia, ir},
                     [&tape, ia, ir, m, n](std::span<const double> g, Tape::Adjoints& adj) {
                       if (tape.needs_grad(ia)) add_into(adj[ia], g);
                       if (tape.needs_grad(ir))
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) adj[ir][j] += g[i * n + j];
                     });
}

Var relu(Var x) {
  Tape& tape = *x.tape;
  std::vector<double> out(x.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] > 0.0 ? x.value()[i] : 0.0;
  const std::size_t ix = x.index;
  return tape.record(Tensor(x.shape(), std::move(out)), {ix},
                     [&tape, ix](std::span<const double> g, Tape::Adjoints& adj) {
                       const Tensor& X = tape.value(Var{&tape, ix});
                       // Subgradient at exactly 0 is 0.
                       for (std::size_t i = 0; i < g.size(); ++i)
                         if (X[i] > 0.0) adj[ix][i] += g[i];
                     });
}

Var sum(Var x) {
  Tape& tape = *x.tape;
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.index;
  return tape.record(Tensor::scalar(s), {ix}, [ix](std::span<const double> g, Tape::Adjoints& adj) {
    for (double& a : adj[ix]) a += g[0];
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ContractError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  Tape& tape = *x.tape;
  const Tensor& X = x.value();
  require_matrix(X, "slice_cols");
  if (begin > end || end > X.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_string(X.shape()));
  }
  const std::size_t m = X.rows(), n = X.cols(), w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = X.at(i, begin + j);
  const std::size_t ix = x.index;
  return tape.record(Tensor({m, w}, std::move(out)), {ix},
                     [ix, m, n, w, begin](std::span<const double> g, Tape::Adjoints& adj) {
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < w; ++j) adj[ix][i * n + begin + j] += g[i * w + j];
                     });
}

Tensor softmax_rows(const Tensor& logits, std::span<const double> offsets) {
  require_matrix(logits, "softmax_rows");
  const std::size_t m = logits.rows(), k = logits.cols();
  if (!offsets.empty() && offsets.size() != k) throw DimensionError("softmax_rows: offsets do not match class count");
  Tensor p = Tensor::zeros({m, k});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) {
      const double a = logits.at(i, j) + (offsets.empty() ? 0.0 : offsets[j]);
      p.at(i, j) = a;
      mx = std::max(mx, a);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      p.at(i, j) = std::exp(p.at(i, j) - mx);
      z += p.at(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) p.at(i, j) /= z;
  }
  return p;
}

Var weighted_ce_with_offset(Var logits, std::span<const double> offsets, std::span<const double> class_weights,
                            std::span<const std::size_t> labels) {
  Tape& tape = *logits.tape;
  const Tensor& Z = logits.value();
  require_matrix(Z, "ce_with_offset");
  const std::size_t m = Z.rows(), k = Z.cols();
  if (offsets.size() != k) {
    throw DimensionError("ce_with_offset: " + std::to_string(offsets.size()) + " offsets for logits " +
                         shape_string(Z.shape()));
  }
  if (!class_weights.empty() && class_weights.size() != k) {
    throw DimensionError("ce_with_offset: class weights do not match class count");
  }
  if (labels.size() != m) {
    throw DimensionError("ce_with_offset: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(Z.shape()));
  }
  if (m == 0) throw ContractError("ce_with_offset: empty batch");
  for (std::size_t label : labels)
    if (label >= k) throw IndexError("label " + std::to_string(label) + " out of range for " + std::to_string(k) + " classes");
  for (double o : offsets)
    if (!std::isfinite(o)) throw NumericError("ce_with_offset: non-finite offset");
  for (double z : Z.data())
    if (!std::isfinite(z)) throw NumericError("ce_with_offset: non-finite logit");

  // Log-sum-exp with max subtraction.
  Tensor probs = Tensor::zeros({m, k});
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, Z.at(i, j) + offsets[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs.at(i, j) = std::exp(Z.at(i, j) + offsets[j] - mx);
      s += probs.at(i, j);
    }
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < k; ++j) probs.at(i, j) /= s;
    const double w = class_weights.empty() ? 1.0 : class_weights[labels[i]];
    total += w * (lse - (Z.at(i, labels[i]) + offsets[labels[i]]));
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<double> weights(m, 1.0);
  if (!class_weights.empty())
    for (std::size_t i = 0; i < m; ++i) weights[i] = class_weights[labels[i]];
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const std::size_t iz = logits.index;
  return tape.record(Tensor::scalar(total * inv_m), {iz},
                     [iz, m, k, inv_m, probs = std::move(probs), lab = std::move(lab), weights = std::move(weights)](
                         std::span<const double> g, Tape::Adjoints& adj) {
                       for (std::size_t i = 0; i < m; ++i) {
                         const double c = g[0] * inv_m * weights[i];
                         for (std::size_t j = 0; j < k; ++j) {
                           const double d = probs.at(i, j) - (j == lab[i] ? 1.0 : 0.0);
                           adj[iz][i * k + j] += c * d;
                         }
                       }
                     });
}

Var ce_with_offset(Var logits, std::span<const double> offsets, std::span<const std::size_t> labels) {
  return weighted_ce_with_offset(logits, offsets, {}, labels);
}

Var softmax_kl(Var student_logits, const Tensor& teacher_logits, double temperature) {
  Tape& tape = *student_logits.tape;
  const Tensor& S = student_logits.value();
  require_matrix(S, "softmax_kl");
  require_same_shape(S, teacher_logits, "softmax_kl");
  if (!(temperature > 0.0)) throw ArgumentError("softmax_kl: temperature must be positive");
  const std::size_t m = S.rows(), k = S.cols();
  if (m == 0 || k == 0) throw ContractError("softmax_kl: empty logits");

  Tensor ps = Tensor::zeros({m, k});
  Tensor pt = Tensor::zeros({m, k});
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double ms = -INFINITY, mt = -INFINITY;
    for (std::size_t j = 0; j < k; ++j) {
      ms = std::max(ms, S.at(i, j) / temperature);
      mt = std::max(mt, teacher_logits.at(i, j) / temperature);
    }
    double zs = 0.0, zt = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      zs += std::exp(S.at(i, j) / temperature - ms);
      zt += std::exp(teacher_logits.at(i, j) / temperature - mt);
    }
    const double lse_s = ms + std::log(zs), lse_t = mt + std::log(zt);
    for (std::size_t j = 0; j < k; ++j) {
      const double log_ps = S.at(i, j) / temperature - lse_s;
      const double log_pt = teacher_logits.at(i, j) / temperature - lse_t;
      ps.at(i, j) = std::exp(log_ps);
      pt.at(i, j) = std::exp(log_pt);
      if (pt.at(i, j) > 0.0) total += pt.at(i, j) * (log_pt - log_ps);
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  const std::size_t is = student_logits.index;
  return tape.record(Tensor::scalar(total * inv_m), {is},
                     [is, m, k, inv_m, temperature, ps = std::move(ps), pt = std::move(pt)](
                         std::span<const double> g, Tape::Adjoints& adj) {
                       const double c = g[0] * inv_m / temperature;
                       for (std::size_t i = 0; i < m * k; ++i) adj[is][i] += c * (ps[i] - pt[i]);
                     });
}

// --- gradient checking -----------------------------------------------------

std::pair<double, std::vector<double>> value_and_grad(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Tensor input = x;
  input.zero_grad();
  Var v = tape.variable(std::move(input));
  Var out = f(v);
  const double value = out.item();
  if (!std::isfinite(value)) throw NumericError("function value is not finite");
  tape.backward(out);
  const Tensor& leaf = tape.value(v);
  std::vector<double> g = leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                          : std::vector<double>(leaf.size(), 0.0);
  return {value, std::move(g)};
}

double finite_diff_check(const ScalarFn& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ArgumentError("finite_diff_check: step must be positive");
  const auto [value, analytic] = value_and_grad(f, x);
  (void)value;

  auto eval = [&](const Tensor& at) {
    Tape tape;
    Var v = tape.constant(at);
    const double y = f(v).item();
    if (!std::isfinite(y)) throw NumericError("function value is not finite during differencing");
    return y;
  };

  double worst = 0.0;
  Tensor probe = x;
  probe.zero_grad();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = eval(probe);
    probe[i] = orig - step;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace bdrlab
