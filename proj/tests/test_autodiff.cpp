#include "support.hpp"

#include "lipgan/autodiff.hpp"
#include "lipgan/nn.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

using namespace lipgan;

namespace {

Tensor row(std::initializer_list<double> v) {
  Tensor t(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) t(0, i++) = x;
  return t;
}

} // namespace

TEST_SUITE("autodiff") {

TEST_CASE("record dispatches and checks shapes") {
  const std::array<Var, 2> scalars{constant(2.0), constant(3.0)};
  CHECK(record(OpKind::add, scalars).item() == 5.0);

  const std::array<Var, 2> ok{constant(Tensor::Ones(2, 3)), constant(Tensor::Ones(3, 1))};
  const Var product = record(OpKind::matmul, ok);
  CHECK(product.rows() == 2);
  CHECK(product.cols() == 1);

  const std::array<Var, 2> bad{constant(Tensor::Ones(2, 3)), constant(Tensor::Ones(2, 1))};
  CHECK_THROWS_AS(record(OpKind::matmul, bad), ShapeError);
  CHECK_THROWS_AS(add(constant(Tensor::Ones(2, 2)), constant(Tensor::Ones(2, 1))), ShapeError);
}

TEST_CASE("backward of simple expressions") {
  const Var a = constant(3.0);
  const Var x = variable(Tensor::Constant(1, 1, 2.0));
  const std::array<Var, 1> wrt{x};
  CHECK(backward(mul(a, x), wrt)[0](0, 0) == doctest::Approx(3.0));

  const Var v = variable(row({-1.0, 2.0}));
  const std::array<Var, 1> wrt_v{v};
  const Tensor g = backward(sum(relu(v)), wrt_v)[0];
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 1.0);

  // relu'(0) is 0 by convention.
  const Var z = variable(Tensor::Zero(1, 1));
  const std::array<Var, 1> wrt_z{z};
  CHECK(backward(sum(relu(z)), wrt_z)[0](0, 0) == 0.0);
}

TEST_CASE("gradient-norm penalty differentiates through the gradient") {
  auto penalty = [](double a_value, bool graph, Tensor* da) {
    const Var a = variable(Tensor::Constant(1, 1, a_value));
    const Var x = variable(Tensor::Constant(1, 1, 1.0));
    const Var n = grad_norm(mul(a, square(x)), x);
    const Var root = square(add_scalar(n, -1.0));
    if (graph) {
      const std::array<Var, 1> wrt{a};
      *da = backward(root, wrt)[0];
    }
    return root.item();
  };
  Tensor da;
  CHECK(penalty(1.0, true, &da) == doctest::Approx(1.0));
  CHECK(da(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  const double h = 1e-5;
  const double fd = (penalty(1.0 + h, false, nullptr) - penalty(1.0 - h, false, nullptr)) / (2 * h);
  CHECK(da(0, 0) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("grad_norm of closed-form functions") {
  std::mt19937_64 rng(3);
  const Tensor w = row({3.0, 4.0});
  const Critic linear = testing::linear_critic(w);
  const Var x = variable(testing::uniform_matrix(rng, 5, 2, -10, 10));
  const Tensor norms = grad_norm(linear(x), x).value();
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(norms(i, 0) == doctest::Approx(5.0));

  const Var p = variable(row({1.0, 2.0, 2.0}));
  const Var half_sq = scale(sum(square(p)), 0.5);
  CHECK(grad_norm(half_sq, p).item() == doctest::Approx(3.0));
}

TEST_CASE("grad_norm at a zero gradient stays finite") {
  const Var x = variable(Tensor::Zero(2, 2));
  const Var out = scale(sum(square(x)), 0.0);
  const Var n = grad_norm(reduce_to(expand(out, 2, 1), 2, 1), x);
  const std::array<Var, 1> wrt{x};
  const Tensor g = backward(sum(n), wrt)[0];
  CHECK(g.allFinite());
}

TEST_CASE("shared subexpressions accumulate") {
  std::mt19937_64 rng(5);
  const Var x = variable(testing::uniform_matrix(rng, 3, 2));
  auto g_of = [](const Var& v) { return sum(tanh(mul(v, v))); };
  const std::array<Var, 1> wrt{x};
  const Tensor once = backward(g_of(x), wrt)[0];
  const Var shared = g_of(x);
  const Tensor twice = backward(add(shared, shared), wrt)[0];
  CHECK((twice - 2.0 * once).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("independent backward passes do not leak state") {
  std::mt19937_64 rng(6);
  const Var x = variable(testing::uniform_matrix(rng, 4, 3));
  const Var r1 = sum(square(x));
  const Var r2 = sum(sigmoid(x));
  const std::array<Var, 1> wrt{x};
  const Tensor g1 = backward(r1, wrt)[0];
  const Tensor g2 = backward(r2, wrt)[0];
  CHECK(backward(r1, wrt)[0] == g1);
  CHECK(backward(r2, wrt)[0] == g2);
}

TEST_CASE("unused leaves get zero gradient and no-grad records constants") {
  const Var x = variable(Tensor::Ones(2, 2));
  const Var y = variable(Tensor::Ones(1, 3));
  const std::array<Var, 2> wrt{x, y};
  const auto g = backward(sum(x), wrt);
  CHECK(g[1].isZero());
  CHECK(g[1].rows() == 1);
  CHECK(g[1].cols() == 3);

  NoGradGuard guard;
  CHECK_FALSE(grad_mode_enabled());
  CHECK_FALSE(add(x, x).requires_grad());
}

TEST_CASE("non-finite values raise") {
  CHECK_THROWS_AS(sqrt(constant(-1.0)), NumericError);
  CHECK_THROWS_AS(reciprocal(constant(0.0)), NumericError);
}

TEST_CASE("first-order gradients match central differences on 100 random MLPs") {
  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    const Eigen::Index in = 1 + seed % 4;
    ModelParams params = testing::random_mlp(rng, in);
    const Tensor x = testing::uniform_matrix(rng, 4, in);

    auto loss = [&](const ModelParams& p, const Tensor& input) {
      NoGradGuard guard;
      return sum(square(mlp_forward(p, constant(input)))).item();
    };

    const BoundModel model(params, true);
    const Var xv = variable(x);
    const Var root = sum(square(model.forward(xv)));
    std::vector<Var> wrt = model.leaves();
    wrt.push_back(xv);
    const std::vector<Tensor> analytic = backward(root, wrt);

    std::vector<Tensor> fd = testing::fd_param_gradient(
        [&](const ModelParams& p) { return loss(p, x); }, params);
    fd.push_back(testing::fd_input_gradient([&](const Tensor& in_x) { return loss(params, in_x); }, x));
    worst = std::max(worst, testing::relative_error(analytic, fd));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("second-order gradients of the gradient penalty match differences") {
  double worst = 0.0;
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(1000 + seed));
    const Eigen::Index in = 1 + seed % 3;
    ModelParams params = testing::random_mlp(rng, in, seed % 2 ? Activation::tanh : Activation::leaky_relu);
    const Tensor x = testing::uniform_matrix(rng, 3, in);

    // First-order quantity evaluated analytically, differentiated numerically.
    auto penalty = [&](const ModelParams& p) {
      const Var xv = variable(x);
      const Var n = grad_norm(mlp_forward(p, xv), xv);
      return mean(square(add_scalar(n, -1.0))).item();
    };

    const BoundModel model(params, true);
    const Var xv = variable(x);
    const Var root = mean(square(add_scalar(grad_norm(model.forward(xv), xv), -1.0)));
    const std::vector<Tensor> analytic = backward(root, model.leaves());
    const std::vector<Tensor> fd = testing::fd_param_gradient(penalty, params);
    worst = std::max(worst, testing::relative_error(analytic, fd));
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("grad_norm of an MLP matches the finite-difference Jacobian norm") {
  std::mt19937_64 rng(77);
  MlpShape shape;
  shape.hidden = {8, 8};
  const ModelParams params = init_mlp(shape, rng);
  const Tensor x = testing::uniform_matrix(rng, 6, 2);
  const Var xv = variable(x);
  const Tensor norms = grad_norm(mlp_forward(params, xv), xv).value();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Tensor g = testing::fd_input_gradient(
        [&](const Tensor& p) {
          NoGradGuard guard;
          return mlp_forward(params, constant(p)).item();
        },
        x.row(i));
    CHECK(norms(i, 0) == doctest::Approx(g.norm()).epsilon(1e-4));
  }
}

TEST_CASE("forward values are deterministic") {
  auto run = [] {
    std::mt19937_64 rng(11);
    const ModelParams p = testing::random_mlp(rng, 3);
    return mlp_forward(p, constant(testing::uniform_matrix(rng, 7, 3))).value();
  };
  CHECK(run() == run());
}

} // TEST_SUITE
