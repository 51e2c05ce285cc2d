#pragma once

// Reverse-mode differentiation over dense row-major double matrices.
//
// A Tape records every primitive executed on it together with a closure that
// propagates the output gradient back to the inputs. Parameters live outside
// the tape as Tensor objects; Tape::parameter() binds one so that backward()
// accumulates into Tensor::grad.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace drag::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;
using IndexList = std::shared_ptr<const std::vector<Index>>;

IndexList make_index_list(std::vector<Index> indices);

struct Tensor {
  Matrix value;
  Matrix grad;
  bool requires_grad = true;

  Tensor() = default;
  explicit Tensor(Matrix v, bool trainable = true) : value(std::move(v)), requires_grad(trainable) {}

  Index rows() const { return value.rows(); }
  Index cols() const { return value.cols(); }
  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Tensor& tensor);

  /// Seeds d(root)/d(root) = 1 and walks the record in reverse. root must be 1x1.
  void backward(Var root);

  /// Gradient of the root with respect to v; zeros if v did not influence the root.
  Matrix grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t id) const { return nodes_[id].op; }

  // Op authoring interface.
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  Var record(std::string_view op, Matrix value, bool requires_grad, BackwardFn backward);
  // Returns the gradient accumulator for an input, allocating zeros on first use.
  Matrix& accumulator(Var v);

 private:
  struct Node {
    std::string op;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
    Tensor* bound = nullptr;
  };

  std::deque<Node> nodes_;
};

// Primitives. Every op checks shapes (ShapeError naming both shapes) and
// rejects non-finite results (NumericError naming the op).

Var matmul(Var a, Var b);                     // a·b
Var matmul_bt(Var a, Var b);                  // a·bᵀ
Var add(Var a, Var b);
Var add_bias(Var a, Var bias);                // bias is 1×cols, broadcast over rows
Var mul(Var a, Var b);                        // elementwise
Var scale(Var a, double factor);
Var affine_scalar(Var a, double factor, double offset);  // factor·a + offset
Var sum(Var a);                               // 1×1
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Index begin, Index count);
Var gather_rows(Var a, const IndexList& rows);
Var leaky_relu(Var a, double slope);
Var elu(Var a);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
Var clamp(Var a, double lo, double hi);

/// Softmax of a column of scores within groups sharing a segment id.
/// Segment ids need not be sorted; empty segments are allowed.
Var segment_softmax(Var scores, const IndexList& segment, Index num_segments);

/// out[s] = Σ_{e : segment[e] = s} weights[e] · values[row(e)], where row(e) is
/// value_rows[e] when given and e otherwise.
Var segment_weighted_sum(Var weights, Var values, const IndexList& segment, Index num_segments,
                         const IndexList& value_rows = nullptr);

/// Dynamic attention score per (query, key) pair:
///   score[e] = Σ_c a[c] · leaky_relu(left[query[e], c] + right[key[e], c])
/// left·Wₗᵀ + right·Wᵣᵀ is the split form of W[h_q ‖ h_k]; fusing it avoids
/// materializing one row per pair.
Var pair_scores(Var left, Var right, Var a, const IndexList& query, const IndexList& key, double slope);

// Finite-difference gradient checking.

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

struct GradCheckEntry {
  std::string name;
  std::size_t count = 0;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> tensors;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  double floor = 0.0;  // relative-error floor actually used
  bool passed = false;
};

/// Relative error |a − n| / max(|a|, |n|, floor). The floor keeps entries whose
/// true gradient is zero from dividing rounding noise by zero.
double relative_error(double analytic, double numeric, double floor = 1e-7);

/// Compares the tape gradient of f against central differences
/// (f(x+h) − f(x−h)) / 2h for every entry of every tensor. The relative-error
/// floor is raised to 2ε|f| / (h·tol) when that exceeds 1e-7. f must build its
/// computation on the tape it is given and return a 1×1 Var.
GradCheckReport grad_check(const std::function<Var(Tape&)>& f, std::span<const NamedTensor> params,
                           double h = 1e-5, double tol = 1e-6);

}  // namespace drag::diff
