#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every value is a rank <= 2 tensor stored as Eigen::MatrixXd (a scalar is
// 1x1, a batch of samples is rows x features). Backward rules are written in
// terms of the same recorded primitives, so a gradient obtained with
// create_graph = true is itself a differentiable expression (double backprop).

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lipgan {

using Tensor = Eigen::MatrixXd;

/// Thrown when operand shapes do not conform to the operation.
class ShapeError : public std::invalid_argument {
public:
  ShapeError(std::string op, std::string shapes);

  const std::string& op() const noexcept { return op_; }
  const std::string& shapes() const noexcept { return shapes_; }

private:
  std::string op_;
  std::string shapes_;
};

/// Thrown when an operation produces a NaN or infinite element.
class NumericError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

class Var;
struct Node;

/// Maps (output, upstream gradient) to one gradient per parent, in parent
/// order. An empty Var means "no contribution".
using BackwardRule = std::function<std::vector<Var>(const Var& self, const Var& upstream)>;

struct Node : std::enable_shared_from_this<Node> {
  Tensor value;
  std::vector<Var> parents;
  BackwardRule backward;
  bool requires_grad = false;
  const char* op = "leaf";
};

/// Shared handle to a node of the computation graph.
class Var {
public:
  Var() = default;
  explicit Var(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Node& node() const { return *node_; }
  const Node* id() const noexcept { return node_.get(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }
  /// Value of a 1x1 node.
  double item() const;

private:
  std::shared_ptr<const Node> node_;
};

/// Disables graph recording on the current thread while alive. Operations
/// still compute values but produce constant nodes.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

bool grad_mode_enabled() noexcept;

Var constant(Tensor value);
Var constant(double value);
/// Leaf that gradients can be taken with respect to.
Var variable(Tensor value);
/// Same value, cut from the graph.
Var detach(const Var& x);

// Elementwise binaries require identical shapes; use expand() to broadcast.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var neg(const Var& a);

Var square(const Var& a);
Var sqrt(const Var& a);
Var reciprocal(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
/// log(1 + exp(a)), evaluated stably.
Var softplus(const Var& a);

/// Broadcasts a 1x1, 1xc or rx1 node to rows x cols.
Var expand(const Var& a, Eigen::Index rows, Eigen::Index cols);
/// Sums over the dimensions where the target size is 1. Adjoint of expand().
Var reduce_to(const Var& a, Eigen::Index rows, Eigen::Index cols);
Var sum(const Var& a);
Var mean(const Var& a);
/// Per-row Euclidean norm, rows x 1.
Var row_norm(const Var& a);
/// Largest element as 1x1; ties resolve to the first in row-major order.
Var max_reduce(const Var& a);
Var pick(const Var& a, Eigen::Index row, Eigen::Index col);
/// rows x cols zeros with the 1x1 value placed at (row, col).
Var scatter(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
            Eigen::Index cols);

/// Row-major position of the largest element, first occurrence on ties.
std::pair<Eigen::Index, Eigen::Index> argmax(const Tensor& t);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

enum class OpKind {
  add,
  sub,
  mul,
  matmul,
  scalar_mul,
  relu,
  leaky_relu,
  tanh,
  square,
  sqrt,
  sum,
  mean,
  max_reduce,
  norm,
};

/// Generic entry point: dispatches an op kind over its inputs. `param` is the
/// factor for scalar_mul and the slope for leaky_relu.
Var record(OpKind kind, std::span<const Var> inputs, double param = 0.0);

/// Gradients of a scalar root with respect to each of `wrt`. With
/// create_graph the results stay attached to the graph and can be
/// differentiated again; otherwise they are constants. A `wrt` entry that the
/// root does not depend on gets a zero tensor.
std::vector<Var> grad(const Var& root, std::span<const Var> wrt, bool create_graph = false);

std::vector<Tensor> backward(const Var& root, std::span<const Var> wrt);

/// Euclidean norm of d(sum f)/dx per sample row, kept differentiable.
/// `output` must be rows x 1 with one value per sample of `input`.
Var grad_norm(const Var& output, const Var& input);

/// Added under the square root of the norm's backward rule.
inline constexpr double kNormEpsilon = 1e-12;

std::string shape_string(const Tensor& t);

} // namespace lipgan
