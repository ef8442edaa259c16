#include "lipgan/autodiff.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace lipgan {

namespace {

thread_local bool g_grad_mode = true;

std::string shapes_of(std::initializer_list<const Tensor*> ts) {
  std::ostringstream out;
  bool first = true;
  for (const Tensor* t : ts) {
    if (!first) out << " x ";
    out << shape_string(*t);
    first = false;
  }
  return out.str();
}

Var make_node(const char* op, Tensor value, std::vector<Var> parents, BackwardRule rule) {
  if (!value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool tracked = false;
  if (g_grad_mode) {
    for (const Var& p : parents) tracked = tracked || p.requires_grad();
  }
  if (tracked) {
    node->parents = std::move(parents);
    node->backward = std::move(rule);
    node->requires_grad = true;
  }
  return Var(std::move(node));
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(op, shapes_of({&a.value(), &b.value()}));
  }
}

// Elementwise map with a constant derivative mask (piecewise-linear ops).
template <class Fwd, class Deriv>
Var piecewise_linear(const char* op, const Var& a, Fwd fwd, Deriv deriv) {
  Tensor value = a.value().unaryExpr(fwd);
  return make_node(op, std::move(value), {a}, [deriv](const Var& self, const Var& g) {
    const Var& x = self.node().parents[0];
    return std::vector<Var>{mul(g, constant(x.value().unaryExpr(deriv)))};
  });
}

} // namespace

ShapeError::ShapeError(std::string op, std::string shapes)
    : std::invalid_argument(op + ": nonconforming shapes " + shapes), op_(std::move(op)),
      shapes_(std::move(shapes)) {}

std::string shape_string(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + "," + std::to_string(t.cols()) + ")";
}

double Var::item() const {
  if (size() != 1) throw ShapeError("item", shape_string(value()));
  return value()(0, 0);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

bool grad_mode_enabled() noexcept { return g_grad_mode; }

Var constant(Tensor value) { return make_node("constant", std::move(value), {}, nullptr); }

Var constant(double value) { return constant(Tensor::Constant(1, 1, value)); }

Var variable(Tensor value) {
  if (!value.allFinite()) throw NumericError("non-finite value in variable");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  node->op = "variable";
  return Var(std::move(node));
}

Var detach(const Var& x) { return constant(x.value()); }

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  return make_node("add", a.value() + b.value(), {a, b},
                   [](const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  return make_node("sub", a.value() - b.value(), {a, b},
                   [](const Var&, const Var& g) { return std::vector<Var>{g, neg(g)}; });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  return make_node("mul", a.value().cwiseProduct(b.value()), {a, b},
                   [](const Var& self, const Var& g) {
                     const auto& p = self.node().parents;
                     return std::vector<Var>{mul(g, p[1]), mul(g, p[0])};
                   });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul", shapes_of({&a.value(), &b.value()}));
  return make_node("matmul", a.value() * b.value(), {a, b}, [](const Var& self, const Var& g) {
    const auto& p = self.node().parents;
    return std::vector<Var>{matmul(g, transpose(p[1])), matmul(transpose(p[0]), g)};
  });
}

Var transpose(const Var& a) {
  return make_node("transpose", a.value().transpose(), {a}, [](const Var&, const Var& g) {
    return std::vector<Var>{transpose(g)};
  });
}

Var scale(const Var& a, double factor) {
  return make_node("scale", a.value() * factor, {a}, [factor](const Var&, const Var& g) {
    return std::vector<Var>{scale(g, factor)};
  });
}

Var add_scalar(const Var& a, double offset) {
  return make_node("add_scalar", (a.value().array() + offset).matrix(), {a},
                   [](const Var&, const Var& g) { return std::vector<Var>{g}; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var square(const Var& a) {
  return make_node("square", a.value().array().square().matrix(), {a},
                   [](const Var& self, const Var& g) {
                     return std::vector<Var>{scale(mul(g, self.node().parents[0]), 2.0)};
                   });
}

Var sqrt(const Var& a) {
  if ((a.value().array() < 0.0).any()) throw NumericError("sqrt of negative value");
  return make_node("sqrt", a.value().array().sqrt().matrix(), {a},
                   [](const Var& self, const Var& g) {
                     return std::vector<Var>{mul(g, scale(reciprocal(self), 0.5))};
                   });
}

Var reciprocal(const Var& a) {
  return make_node("reciprocal", a.value().array().inverse().matrix(), {a},
                   [](const Var& self, const Var& g) {
                     return std::vector<Var>{mul(g, neg(square(self)))};
                   });
}

Var relu(const Var& a) {
  // Subgradient 0 at the kink.
  return piecewise_linear(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return piecewise_linear(
      "leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Var tanh(const Var& a) {
  return make_node("tanh", a.value().array().tanh().matrix(), {a},
                   [](const Var& self, const Var& g) {
                     return std::vector<Var>{mul(g, add_scalar(neg(square(self)), 1.0))};
                   });
}

Var sigmoid(const Var& a) {
  Tensor value = a.value().unaryExpr([](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  return make_node("sigmoid", std::move(value), {a}, [](const Var& self, const Var& g) {
    return std::vector<Var>{mul(g, mul(self, add_scalar(neg(self), 1.0)))};
  });
}

Var softplus(const Var& a) {
  Tensor value = a.value().unaryExpr(
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return make_node("softplus", std::move(value), {a}, [](const Var& self, const Var& g) {
    return std::vector<Var>{mul(g, sigmoid(self.node().parents[0]))};
  });
}

Var expand(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  const Tensor& v = a.value();
  Tensor out;
  if (v.rows() == rows && v.cols() == cols) {
    return a;
  } else if (v.rows() == 1 && v.cols() == 1) {
    out = Tensor::Constant(rows, cols, v(0, 0));
  } else if (v.rows() == 1 && v.cols() == cols) {
    out = v.replicate(rows, 1);
  } else if (v.cols() == 1 && v.rows() == rows) {
    out = v.replicate(1, cols);
  } else {
    Tensor target(rows, cols);
    throw ShapeError("expand", shapes_of({&v, &target}));
  }
  const Eigen::Index r0 = v.rows(), c0 = v.cols();
  return make_node("expand", std::move(out), {a}, [r0, c0](const Var&, const Var& g) {
    return std::vector<Var>{reduce_to(g, r0, c0)};
  });
}

Var reduce_to(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  const Tensor& v = a.value();
  if ((rows != 1 && rows != v.rows()) || (cols != 1 && cols != v.cols())) {
    Tensor target(rows, cols);
    throw ShapeError("reduce_to", shapes_of({&v, &target}));
  }
  if (rows == v.rows() && cols == v.cols()) return a;
  Tensor out;
  if (rows == 1 && cols == 1) {
    out = Tensor::Constant(1, 1, v.sum());
  } else if (rows == 1) {
    out = v.colwise().sum();
  } else {
    out = v.rowwise().sum();
  }
  const Eigen::Index r0 = v.rows(), c0 = v.cols();
  return make_node("reduce_to", std::move(out), {a}, [r0, c0](const Var&, const Var& g) {
    return std::vector<Var>{expand(g, r0, c0)};
  });
}

Var sum(const Var& a) { return reduce_to(a, 1, 1); }

Var mean(const Var& a) {
  if (a.size() == 0) throw ShapeError("mean", shape_string(a.value()));
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var row_norm(const Var& a) {
  Tensor value = a.value().rowwise().norm();
  return make_node("row_norm", std::move(value), {a}, [](const Var& self, const Var& g) {
    const Var& x = self.node().parents[0];
    const Eigen::Index m = x.rows(), n = x.cols();
    Var inv = reciprocal(sqrt(add_scalar(reduce_to(square(x), m, 1), kNormEpsilon)));
    return std::vector<Var>{mul(x, expand(mul(g, inv), m, n))};
  });
}

std::pair<Eigen::Index, Eigen::Index> argmax(const Tensor& t) {
  if (t.size() == 0) throw ShapeError("argmax", shape_string(t));
  Eigen::Index best_r = 0, best_c = 0;
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      if (t(r, c) > t(best_r, best_c)) {
        best_r = r;
        best_c = c;
      }
    }
  }
  return {best_r, best_c};
}

Var max_reduce(const Var& a) {
  const auto [r, c] = argmax(a.value());
  return pick(a, r, c);
}

Var pick(const Var& a, Eigen::Index row, Eigen::Index col) {
  if (row < 0 || col < 0 || row >= a.rows() || col >= a.cols()) {
    throw ShapeError("pick", shape_string(a.value()) + " at [" + std::to_string(row) + "," +
                                 std::to_string(col) + "]");
  }
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return make_node("pick", Tensor::Constant(1, 1, a.value()(row, col)), {a},
                   [=](const Var&, const Var& g) {
                     return std::vector<Var>{scatter(g, row, col, rows, cols)};
                   });
}

Var scatter(const Var& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
            Eigen::Index cols) {
  if (a.size() != 1 || row < 0 || col < 0 || row >= rows || col >= cols) {
    Tensor target(rows, cols);
    throw ShapeError("scatter", shapes_of({&a.value(), &target}));
  }
  Tensor out = Tensor::Zero(rows, cols);
  out(row, col) = a.value()(0, 0);
  return make_node("scatter", std::move(out), {a}, [=](const Var&, const Var& g) {
    return std::vector<Var>{pick(g, row, col)};
  });
}

Var record(OpKind kind, std::span<const Var> inputs, double param) {
  auto arity = [&](std::size_t n, const char* op) {
    if (inputs.size() != n) {
      throw std::invalid_argument(std::string(op) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(inputs.size()));
    }
  };
  switch (kind) {
  case OpKind::add: arity(2, "add"); return add(inputs[0], inputs[1]);
  case OpKind::sub: arity(2, "sub"); return sub(inputs[0], inputs[1]);
  case OpKind::mul: arity(2, "mul"); return mul(inputs[0], inputs[1]);
  case OpKind::matmul: arity(2, "matmul"); return matmul(inputs[0], inputs[1]);
  case OpKind::scalar_mul: arity(1, "scalar_mul"); return scale(inputs[0], param);
  case OpKind::relu: arity(1, "relu"); return relu(inputs[0]);
  case OpKind::leaky_relu: arity(1, "leaky_relu"); return leaky_relu(inputs[0], param);
  case OpKind::tanh: arity(1, "tanh"); return tanh(inputs[0]);
  case OpKind::square: arity(1, "square"); return square(inputs[0]);
  case OpKind::sqrt: arity(1, "sqrt"); return sqrt(inputs[0]);
  case OpKind::sum: arity(1, "sum"); return sum(inputs[0]);
  case OpKind::mean: arity(1, "mean"); return mean(inputs[0]);
  case OpKind::max_reduce: arity(1, "max_reduce"); return max_reduce(inputs[0]);
  case OpKind::norm: arity(1, "norm"); return row_norm(inputs[0]);
  }
  throw std::invalid_argument("record: unknown op kind");
}

std::vector<Var> grad(const Var& root, std::span<const Var> wrt, bool create_graph) {
  if (!root.defined() || root.size() != 1) {
    throw ShapeError("backward", root.defined() ? shape_string(root.value()) : "(undefined)");
  }

  // Reverse topological order of the tracked subgraph, iterative DFS.
  std::vector<const Node*> order;
  std::unordered_map<const Node*, Var> adjoint;
  if (root.requires_grad()) {
    std::unordered_map<const Node*, bool> visited;
    std::vector<std::pair<const Node*, std::size_t>> stack{{root.id(), 0}};
    visited[root.id()] = true;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        const Var& p = node->parents[next++];
        if (p.requires_grad() && !visited[p.id()]) {
          visited[p.id()] = true;
          stack.emplace_back(p.id(), 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }

    std::optional<NoGradGuard> guard;
    if (!create_graph) guard.emplace();

    adjoint[root.id()] = constant(Tensor::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const Node* node = *it;
      if (!node->backward) continue;
      auto found = adjoint.find(node);
      if (found == adjoint.end()) continue;
      Var self(node->shared_from_this());
      std::vector<Var> parent_grads = node->backward(self, found->second);
      for (std::size_t i = 0; i < node->parents.size(); ++i) {
        const Var& p = node->parents[i];
        if (!p.requires_grad() || !parent_grads[i].defined()) continue;
        auto [slot, inserted] = adjoint.try_emplace(p.id(), parent_grads[i]);
        if (!inserted) slot->second = add(slot->second, parent_grads[i]);
      }
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    auto found = adjoint.find(w.id());
    if (found == adjoint.end()) {
      result.push_back(constant(Tensor::Zero(w.rows(), w.cols())));
    } else {
      result.push_back(create_graph ? found->second : detach(found->second));
    }
  }
  return result;
}

std::vector<Tensor> backward(const Var& root, std::span<const Var> wrt) {
  std::vector<Tensor> out;
  for (const Var& g : grad(root, wrt, false)) out.push_back(g.value());
  return out;
}

Var grad_norm(const Var& output, const Var& input) {
  if (output.cols() != 1 || output.rows() != input.rows()) {
    throw ShapeError("grad_norm", shapes_of({&output.value(), &input.value()}));
  }
  const Var inputs[] = {input};
  return row_norm(grad(sum(output), inputs, true)[0]);
}

} // namespace lipgan
