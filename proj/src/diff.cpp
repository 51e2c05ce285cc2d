#include "drag/diff.hpp"

#include "drag/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace drag::diff {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_of(a) + " and " + shape_of(b));
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error("operands recorded on different tapes");
}

bool any_requires_grad(std::initializer_list<Var> vars) {
  return std::any_of(vars.begin(), vars.end(), [](Var v) { return v.tape()->requires_grad(v); });
}

void check_column(std::string_view op, const Matrix& m) {
  if (m.cols() != 1) throw ShapeError(std::string(op) + ": expected a column, got " + shape_of(m));
}

void check_indices(std::string_view op, const IndexList& idx, Index expected_len, Index bound) {
  if (!idx) throw ShapeError(std::string(op) + ": missing index list");
  if (static_cast<Index>(idx->size()) != expected_len) {
    throw ShapeError(std::string(op) + ": index list has " + std::to_string(idx->size()) + " entries, expected " +
                     std::to_string(expected_len));
  }
  for (Index i : *idx) {
    if (i < 0 || i >= bound) throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " out of range");
  }
}

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }
double leaky_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

}  // namespace

IndexList make_index_list(std::vector<Index> indices) {
  return std::make_shared<const std::vector<Index>>(std::move(indices));
}

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar(): value has shape " + shape_of(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  if (!value.allFinite()) throw NumericError("constant: non-finite input");
  return record("constant", std::move(value), false, nullptr);
}

Var Tape::parameter(Tensor& tensor) {
  if (!tensor.value.allFinite()) throw NumericError("parameter: non-finite value");
  Var v = record("parameter", tensor.value, tensor.requires_grad, nullptr);
  nodes_.back().bound = &tensor;
  return v;
}

Var Tape::record(std::string_view op, Matrix value, bool requires_grad, BackwardFn backward) {
  if (!value.allFinite()) throw NumericError(std::string(op) + ": produced a non-finite value");
  Node& node = nodes_.emplace_back();
  node.op = std::string(op);
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  return Var(this, nodes_.size() - 1);
}

Matrix& Tape::accumulator(Var v) {
  Node& node = nodes_[v.id_];
  if (node.grad.size() == 0) node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw Error("backward: root belongs to another tape");
  Node& r = nodes_[root.id_];
  if (r.value.rows() != 1 || r.value.cols() != 1) throw ShapeError("backward: root must be 1x1, got " + shape_of(r.value));
  for (auto& node : nodes_) node.grad.resize(0, 0);
  if (!r.requires_grad) return;
  r.grad = Matrix::Constant(1, 1, 1.0);

  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, node.grad);
    if (node.bound != nullptr) {
      Tensor& t = *node.bound;
      if (t.grad.rows() != t.value.rows() || t.grad.cols() != t.value.cols()) t.zero_grad();
      t.grad += node.grad;
    }
  }
}

Matrix Tape::grad(Var v) const {
  const Node& node = nodes_[v.id_];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Matrix out = av * bv;
  return a.tape()->record("matmul", std::move(out), any_requires_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulator(a).noalias() += g * b.value().transpose();
    if (t.requires_grad(b)) t.accumulator(b).noalias() += a.value().transpose() * g;
  });
}

Var matmul_bt(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("matmul_bt", av, bv);
  Matrix out = av * bv.transpose();
  return a.tape()->record("matmul_bt", std::move(out), any_requires_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulator(a).noalias() += g * b.value();
    if (t.requires_grad(b)) t.accumulator(b).noalias() += g.transpose() * a.value();
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("add", av, bv);
  Matrix out = av + bv;
  return a.tape()->record("add", std::move(out), any_requires_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulator(a) += g;
    if (t.requires_grad(b)) t.accumulator(b) += g;
  });
}

Var add_bias(Var a, Var bias) {
  require_same_tape(a, bias);
  const Matrix& av = a.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) shape_error("add_bias", av, bv);
  Matrix out = av.rowwise() + bv.row(0);
  return a.tape()->record("add_bias", std::move(out), any_requires_grad({a, bias}),
                          [a, bias](Tape& t, const Matrix& g) {
                            if (t.requires_grad(a)) t.accumulator(a) += g;
                            if (t.requires_grad(bias)) t.accumulator(bias) += g.colwise().sum();
                          });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_error("mul", av, bv);
  Matrix out = av.cwiseProduct(bv);
  return a.tape()->record("mul", std::move(out), any_requires_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulator(a) += g.cwiseProduct(b.value());
    if (t.requires_grad(b)) t.accumulator(b) += g.cwiseProduct(a.value());
  });
}

Var scale(Var a, double factor) { return affine_scalar(a, factor, 0.0); }

Var affine_scalar(Var a, double factor, double offset) {
  Matrix out = (a.value().array() * factor + offset).matrix();
  return a.tape()->record("affine_scalar", std::move(out), any_requires_grad({a}),
                          [a, factor](Tape& t, const Matrix& g) { t.accumulator(a) += factor * g; });
}

Var sum(Var a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return a.tape()->record("sum", std::move(out), any_requires_grad({a}), [a](Tape& t, const Matrix& g) {
    t.accumulator(a).array() += g(0, 0);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape* tape = parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape() != tape) throw Error("operands recorded on different tapes");
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    rg = rg || tape->requires_grad(p);
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape->record("concat_cols", std::move(out), rg, [inputs](Tape& t, const Matrix& g) {
    Index at = 0;
    for (const Var& p : inputs) {
      if (t.requires_grad(p)) t.accumulator(p) += g.middleCols(at, p.cols());
      at += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape* tape = parts.front().tape();
  const Index cols = parts.front().cols();
  Index rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape() != tape) throw Error("operands recorded on different tapes");
    if (p.cols() != cols) shape_error("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
    rg = rg || tape->requires_grad(p);
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape->record("concat_rows", std::move(out), rg, [inputs](Tape& t, const Matrix& g) {
    Index at = 0;
    for (const Var& p : inputs) {
      if (t.requires_grad(p)) t.accumulator(p) += g.middleRows(at, p.rows());
      at += p.rows();
    }
  });
}

Var slice_cols(Var a, Index begin, Index count) {
  const Matrix& av = a.value();
  if (begin < 0 || count < 0 || begin + count > av.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_of(av));
  }
  Matrix out = av.middleCols(begin, count);
  return a.tape()->record("slice_cols", std::move(out), any_requires_grad({a}),
                          [a, begin, count](Tape& t, const Matrix& g) {
                            t.accumulator(a).middleCols(begin, count) += g;
                          });
}

Var gather_rows(Var a, const IndexList& rows) {
  const Matrix& av = a.value();
  if (!rows) throw ShapeError("gather_rows: missing index list");
  check_indices("gather_rows", rows, static_cast<Index>(rows->size()), av.rows());
  Matrix out(static_cast<Index>(rows->size()), av.cols());
  for (Index r = 0; r < out.rows(); ++r) out.row(r) = av.row((*rows)[r]);
  return a.tape()->record("gather_rows", std::move(out), any_requires_grad({a}), [a, rows](Tape& t, const Matrix& g) {
    Matrix& acc = t.accumulator(a);
    for (Index r = 0; r < g.rows(); ++r) acc.row((*rows)[r]) += g.row(r);
  });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double x) { return leaky(x, slope); });
  return a.tape()->record("leaky_relu", std::move(out), any_requires_grad({a}), [a, slope](Tape& t, const Matrix& g) {
    t.accumulator(a) += g.cwiseProduct(a.value().unaryExpr([slope](double x) { return leaky_grad(x, slope); }));
  });
}

Var elu(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return a.tape()->record("elu", std::move(out), any_requires_grad({a}), [a](Tape& t, const Matrix& g) {
    t.accumulator(a) += g.cwiseProduct(a.value().unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); }));
  });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp().matrix();
  Tape* tape = a.tape();
  const std::size_t self = tape->size();
  return tape->record("exp", std::move(out), any_requires_grad({a}), [a, self](Tape& t, const Matrix& g) {
    t.accumulator(a) += g.cwiseProduct(t.value(self));
  });
}

Var log(Var a) {
  Matrix out = a.value().array().log().matrix();
  return a.tape()->record("log", std::move(out), any_requires_grad({a}), [a](Tape& t, const Matrix& g) {
    t.accumulator(a) += g.cwiseQuotient(a.value());
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Tape* tape = a.tape();
  const std::size_t self = tape->size();
  return tape->record("sigmoid", std::move(out), any_requires_grad({a}), [a, self](Tape& t, const Matrix& g) {
    const Matrix& s = t.value(self);
    t.accumulator(a) += g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
  });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ShapeError("clamp: lower bound exceeds upper bound");
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape()->record("clamp", std::move(out), any_requires_grad({a}), [a, lo, hi](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    Matrix& acc = t.accumulator(a);
    for (Index i = 0; i < x.size(); ++i) {
      const double v = x.data()[i];
      if (v >= lo && v <= hi) acc.data()[i] += g.data()[i];
    }
  });
}

Var segment_softmax(Var scores, const IndexList& segment, Index num_segments) {
  const Matrix& s = scores.value();
  check_column("segment_softmax", s);
  check_indices("segment_softmax", segment, s.rows(), num_segments);
  const auto& seg = *segment;
  std::vector<double> mx(static_cast<std::size_t>(num_segments), -std::numeric_limits<double>::infinity());
  for (Index e = 0; e < s.rows(); ++e) mx[seg[e]] = std::max(mx[seg[e]], s(e, 0));
  Matrix out(s.rows(), 1);
  std::vector<double> total(static_cast<std::size_t>(num_segments), 0.0);
  for (Index e = 0; e < s.rows(); ++e) {
    out(e, 0) = std::exp(s(e, 0) - mx[seg[e]]);
    total[seg[e]] += out(e, 0);
  }
  for (Index e = 0; e < s.rows(); ++e) out(e, 0) /= total[seg[e]];

  Tape* tape = scores.tape();
  const std::size_t self = tape->size();
  return tape->record("segment_softmax", std::move(out), any_requires_grad({scores}),
                      [scores, segment, num_segments, self](Tape& t, const Matrix& g) {
                        const Matrix& alpha = t.value(self);
                        const auto& seg = *segment;
                        std::vector<double> dot(static_cast<std::size_t>(num_segments), 0.0);
                        for (Index e = 0; e < alpha.rows(); ++e) dot[seg[e]] += alpha(e, 0) * g(e, 0);
                        Matrix& acc = t.accumulator(scores);
                        for (Index e = 0; e < alpha.rows(); ++e) acc(e, 0) += alpha(e, 0) * (g(e, 0) - dot[seg[e]]);
                      });
}

Var segment_weighted_sum(Var weights, Var values, const IndexList& segment, Index num_segments,
                         const IndexList& value_rows) {
  require_same_tape(weights, values);
  const Matrix& w = weights.value();
  const Matrix& v = values.value();
  check_column("segment_weighted_sum", w);
  check_indices("segment_weighted_sum", segment, w.rows(), num_segments);
  if (value_rows) {
    check_indices("segment_weighted_sum", value_rows, w.rows(), v.rows());
  } else if (v.rows() != w.rows()) {
    shape_error("segment_weighted_sum", w, v);
  }
  const auto& seg = *segment;
  auto row_of = [value_rows](Index e) { return value_rows ? (*value_rows)[e] : e; };

  Matrix out = Matrix::Zero(num_segments, v.cols());
  for (Index e = 0; e < w.rows(); ++e) out.row(seg[e]) += w(e, 0) * v.row(row_of(e));

  return weights.tape()->record(
      "segment_weighted_sum", std::move(out), any_requires_grad({weights, values}),
      [weights, values, segment, value_rows, row_of](Tape& t, const Matrix& g) {
        const auto& seg = *segment;
        const Matrix& w = weights.value();
        const Matrix& v = values.value();
        if (t.requires_grad(weights)) {
          Matrix& acc = t.accumulator(weights);
          for (Index e = 0; e < w.rows(); ++e) acc(e, 0) += g.row(seg[e]).dot(v.row(row_of(e)));
        }
        if (t.requires_grad(values)) {
          Matrix& acc = t.accumulator(values);
          for (Index e = 0; e < w.rows(); ++e) acc.row(row_of(e)) += w(e, 0) * g.row(seg[e]);
        }
      });
}

Var pair_scores(Var left, Var right, Var a, const IndexList& query, const IndexList& key, double slope) {
  require_same_tape(left, right);
  require_same_tape(left, a);
  const Matrix& lv = left.value();
  const Matrix& rv = right.value();
  const Matrix& av = a.value();
  if (lv.cols() != rv.cols()) shape_error("pair_scores", lv, rv);
  if (av.rows() != 1 || av.cols() != lv.cols()) shape_error("pair_scores", lv, av);
  if (!query) throw ShapeError("pair_scores: missing query index list");
  const Index pairs = static_cast<Index>(query->size());
  check_indices("pair_scores", query, pairs, lv.rows());
  check_indices("pair_scores", key, pairs, rv.rows());
  const Index width = lv.cols();

  Matrix out(pairs, 1);
  for (Index e = 0; e < pairs; ++e) {
    const double* lrow = lv.data() + (*query)[e] * width;
    const double* rrow = rv.data() + (*key)[e] * width;
    double acc = 0.0;
    for (Index c = 0; c < width; ++c) acc += av(0, c) * leaky(lrow[c] + rrow[c], slope);
    out(e, 0) = acc;
  }

  return left.tape()->record(
      "pair_scores", std::move(out), any_requires_grad({left, right, a}),
      [left, right, a, query, key, slope](Tape& t, const Matrix& g) {
        const Matrix& lv = left.value();
        const Matrix& rv = right.value();
        const Matrix& av = a.value();
        const Index width = lv.cols();
        const bool gl = t.requires_grad(left);
        const bool gr = t.requires_grad(right);
        const bool ga = t.requires_grad(a);
        double* dl = gl ? t.accumulator(left).data() : nullptr;
        double* dr = gr ? t.accumulator(right).data() : nullptr;
        double* da = ga ? t.accumulator(a).data() : nullptr;
        for (Index e = 0; e < g.rows(); ++e) {
          const double ge = g(e, 0);
          if (ge == 0.0) continue;
          const Index q = (*query)[e];
          const Index k = (*key)[e];
          const double* lrow = lv.data() + q * width;
          const double* rrow = rv.data() + k * width;
          for (Index c = 0; c < width; ++c) {
            const double pre = lrow[c] + rrow[c];
            if (ga) da[c] += ge * leaky(pre, slope);
            const double d = ge * av(0, c) * leaky_grad(pre, slope);
            if (gl) dl[q * width + c] += d;
            if (gr) dr[k * width + c] += d;
          }
        }
      });
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<Var(Tape&)>& f, std::span<const NamedTensor> params, double h,
                           double tol) {
  GradCheckReport report;
  report.tolerance = tol;

  for (const auto& p : params) p.tensor->zero_grad();
  std::vector<Matrix> analytic;
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
    for (const auto& p : params) {
      if (p.tensor->grad.size() == 0) p.tensor->zero_grad();
      analytic.push_back(p.tensor->grad);
    }
  }

  auto evaluate = [&f]() {
    Tape tape;
    return f(tape).scalar();
  };
  // Central differences carry about 2ε|f|/h of rounding error, so derivatives
  // smaller than that over tol cannot be resolved to tol relative accuracy.
  const double resolution = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(evaluate()) / h;
  const double floor = std::max(1e-7, resolution / tol);
  report.floor = floor;

  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& tensor = *params[t].tensor;
    GradCheckEntry entry;
    entry.name = params[t].name;
    double total = 0.0;
    for (Index i = 0; i < tensor.value.size(); ++i) {
      double& x = tensor.value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = evaluate();
      x = saved - h;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[t].data()[i], numeric, floor);
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      total += err;
      ++entry.count;
    }
    entry.mean_rel_error = entry.count > 0 ? total / static_cast<double>(entry.count) : 0.0;
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.tensors.push_back(std::move(entry));
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace drag::diff
