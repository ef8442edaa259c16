#include "lipgan/nn.hpp"

#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace lipgan {

std::string to_string(Activation a) {
  switch (a) {
  case Activation::linear: return "linear";
  case Activation::relu: return "relu";
  case Activation::leaky_relu: return "leaky_relu";
  case Activation::tanh: return "tanh";
  }
  return "linear";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::linear;
  if (name == "relu") return Activation::relu;
  if (name == "leaky_relu") return Activation::leaky_relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

void ModelParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.out_dim()) {
      throw std::invalid_argument("layer " + std::to_string(i) + ": bias shape " +
                                  shape_string(l.bias) + " does not match weight " +
                                  shape_string(l.weight));
    }
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw std::invalid_argument("layer " + std::to_string(i) + ": input dim " +
                                  std::to_string(l.in_dim()) + " != previous output dim " +
                                  std::to_string(layers[i - 1].out_dim()));
    }
  }
  if (!spectral.empty() && spectral.size() != layers.size()) {
    throw std::invalid_argument("spectral state count does not match layer count");
  }
}

ModelParams init_mlp(const MlpShape& shape, std::mt19937_64& rng) {
  ModelParams params;
  std::vector<Eigen::Index> dims{shape.input_dim};
  dims.insert(dims.end(), shape.hidden.begin(), shape.hidden.end());
  dims.push_back(shape.output_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer;
    layer.weight = Eigen::MatrixXd::NullaryExpr(dims[i + 1], dims[i], [&] { return dist(rng); });
    layer.bias = Eigen::MatrixXd::NullaryExpr(1, dims[i + 1], [&] { return dist(rng); });
    const bool last = i + 2 == dims.size();
    layer.activation = last ? shape.output_activation : shape.hidden_activation;
    layer.slope = shape.slope;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

std::vector<Eigen::MatrixXd> parameter_values(const ModelParams& params) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(2 * params.layers.size());
  for (const Layer& l : params.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for (const Layer& l : params.layers) n += l.weight.size() + l.bias.size();
  return n;
}

namespace {

Var activate(const Var& x, Activation a, double slope) {
  switch (a) {
  case Activation::linear: return x;
  case Activation::relu: return relu(x);
  case Activation::leaky_relu: return leaky_relu(x, slope);
  case Activation::tanh: return tanh(x);
  }
  return x;
}

Eigen::VectorXd random_unit(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  const double norm = v.norm();
  return norm > 0.0 ? Eigen::VectorXd(v / norm) : Eigen::VectorXd::Unit(n, 0);
}

} // namespace

BoundModel::BoundModel(const ModelParams& params, bool trainable) {
  params.validate();
  auto lift = [trainable](const Eigen::MatrixXd& m) {
    return trainable ? variable(m) : constant(m);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    Var w = lift(l.weight);
    Var b = lift(l.bias);
    leaves_.push_back(w);
    leaves_.push_back(b);
    if (params.spectral_norm()) {
      // sigma = u^T W v with u, v held fixed, so d sigma / dW = u v^T.
      const SpectralState& s = params.spectral[i];
      Var sigma = sum(mul(w, constant(s.u * s.v.transpose())));
      w = mul(w, expand(reciprocal(sigma), w.rows(), w.cols()));
    }
    weights_.push_back(w);
    biases_.push_back(b);
    activations_.push_back(l.activation);
    slopes_.push_back(l.slope);
  }
}

Var BoundModel::forward(const Var& x) const {
  if (weights_.empty()) throw std::logic_error("forward on an unbound model");
  if (x.cols() != weights_.front().cols()) {
    throw ShapeError("mlp_forward", shape_string(x.value()) + " into layer 0 expecting " +
                                        std::to_string(weights_.front().cols()) + " features");
  }
  Var h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    Var pre = add(matmul(h, transpose(weights_[i])), expand(biases_[i], h.rows(), biases_[i].cols()));
    h = activate(pre, activations_[i], slopes_[i]);
  }
  return h;
}

Var mlp_forward(const ModelParams& params, const Var& x) {
  return BoundModel(params, false).forward(x);
}

Critic frozen_critic(const ModelParams& params) {
  auto model = std::make_shared<const BoundModel>(params, false);
  return [model](const Var& x) { return model->forward(x); };
}

AdamState make_adam(const ModelParams& params, double learning_rate, double beta1, double beta2,
                    double epsilon) {
  AdamState state;
  state.learning_rate = learning_rate;
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.epsilon = epsilon;
  for (const Eigen::MatrixXd& p : parameter_values(params)) {
    state.first_moment.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    state.second_moment.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  }
  return state;
}

void adam_step(AdamState& state, ModelParams& params, std::span<const Eigen::MatrixXd> grads) {
  const std::size_t n = 2 * params.layers.size();
  if (grads.size() != n || state.first_moment.size() != n) {
    throw std::invalid_argument("adam_step: expected " + std::to_string(n) + " gradient tensors");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::MatrixXd& p = i % 2 == 0 ? params.layers[i / 2].weight : params.layers[i / 2].bias;
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols()) {
      throw ShapeError("adam_step", shape_string(grads[i]) + " x " + shape_string(p));
    }
    if (!grads[i].allFinite()) throw NumericError("adam_step: non-finite gradient");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXd& p = i % 2 == 0 ? params.layers[i / 2].weight : params.layers[i / 2].bias;
    Eigen::MatrixXd& m = state.first_moment[i];
    Eigen::MatrixXd& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i].cwiseAbs2();
    const Eigen::ArrayXXd m_hat = m.array() / correction1;
    const Eigen::ArrayXXd v_hat = v.array() / correction2;
    p.array() -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
  }
}

void clip_weights(ModelParams& params, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("clip_weights: c must be positive");
  for (Layer& l : params.layers) {
    l.weight = l.weight.cwiseMax(-c).cwiseMin(c);
    l.bias = l.bias.cwiseMax(-c).cwiseMin(c);
  }
}

void enable_spectral_norm(ModelParams& params, std::mt19937_64& rng, int power_iterations) {
  if (power_iterations < 1) throw std::invalid_argument("power_iterations must be >= 1");
  params.power_iterations = power_iterations;
  params.spectral.clear();
  for (const Layer& l : params.layers) {
    params.spectral.push_back({random_unit(l.out_dim(), rng), random_unit(l.in_dim(), rng)});
  }
}

void update_spectral_state(ModelParams& params) {
  for (std::size_t i = 0; i < params.spectral.size(); ++i) {
    SpectralState& s = params.spectral[i];
    auto r = power_iteration_sigma(params.layers[i].weight, s.u, s.v, params.power_iterations);
    s.u = std::move(r.u);
    s.v = std::move(r.v);
  }
}

std::vector<double> spectral_sigmas(const ModelParams& params) {
  std::vector<double> out;
  for (std::size_t i = 0; i < params.spectral.size(); ++i) {
    const SpectralState& s = params.spectral[i];
    out.push_back(s.u.dot(params.layers[i].weight * s.v));
  }
  return out;
}

ModelParams apply_spectral_norm(const ModelParams& params) {
  if (!params.spectral_norm()) throw std::invalid_argument("spectral normalization not enabled");
  ModelParams out;
  out.layers = params.layers;
  const std::vector<double> sigmas = spectral_sigmas(params);
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    if (!(sigmas[i] > 0.0)) {
      throw std::domain_error("apply_spectral_norm: layer " + std::to_string(i) +
                              " has zero spectral norm");
    }
    out.layers[i].weight /= sigmas[i];
  }
  return out;
}

// Format:
//   lipgan-mlp <version>
//   layers <n> power_iterations <k> spectral <0|1>
//   layer <i> <in> <out> <activation> <slope>
//   <out rows of in weights>
//   <out biases>
//   [u: out values] [v: in values]    when spectral
namespace {

template <class Derived>
void write_row(std::ostream& out, const Eigen::DenseBase<Derived>& row) {
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (j > 0) out << ' ';
    out << row(j);
  }
  out << '\n';
}

template <class M>
void read_values(std::istream& in, M& m, const char* what) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!(in >> m(i))) throw std::runtime_error(std::string("checkpoint: truncated ") + what);
  }
}

void expect_token(std::istream& in, const std::string& token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw std::runtime_error("checkpoint: expected '" + token + "', got '" + got + "'");
  }
}

} // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
  params.validate();
  out << std::setprecision(17);
  out << "lipgan-mlp " << kCheckpointVersion << '\n';
  out << "layers " << params.layers.size() << " power_iterations " << params.power_iterations
      << " spectral " << (params.spectral_norm() ? 1 : 0) << '\n';
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    out << "layer " << i << ' ' << l.in_dim() << ' ' << l.out_dim() << ' '
        << to_string(l.activation) << ' ' << l.slope << '\n';
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) write_row(out, l.weight.row(r));
    write_row(out, l.bias);
    if (params.spectral_norm()) {
      write_row(out, params.spectral[i].u.transpose());
      write_row(out, params.spectral[i].v.transpose());
    }
  }
}

ModelParams load_checkpoint(std::istream& in) {
  expect_token(in, "lipgan-mlp");
  int version = 0;
  in >> version;
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  std::size_t n = 0;
  int spectral = 0;
  ModelParams params;
  expect_token(in, "layers");
  in >> n;
  expect_token(in, "power_iterations");
  in >> params.power_iterations;
  expect_token(in, "spectral");
  in >> spectral;
  if (!in || n == 0) throw std::runtime_error("checkpoint: malformed header");
  for (std::size_t i = 0; i < n; ++i) {
    expect_token(in, "layer");
    std::size_t index = 0;
    Eigen::Index in_dim = 0, out_dim = 0;
    std::string act;
    Layer l;
    in >> index >> in_dim >> out_dim >> act >> l.slope;
    if (!in || index != i || in_dim <= 0 || out_dim <= 0) {
      throw std::runtime_error("checkpoint: malformed layer header " + std::to_string(i));
    }
    l.activation = activation_from_string(act);
    l.weight.resize(out_dim, in_dim);
    for (Eigen::Index r = 0; r < out_dim; ++r) {
      for (Eigen::Index c = 0; c < in_dim; ++c) {
        if (!(in >> l.weight(r, c))) throw std::runtime_error("checkpoint: truncated weights");
      }
    }
    l.bias.resize(1, out_dim);
    read_values(in, l.bias, "bias");
    if (spectral) {
      SpectralState s{Eigen::VectorXd(out_dim), Eigen::VectorXd(in_dim)};
      read_values(in, s.u, "u");
      read_values(in, s.v, "v");
      params.spectral.push_back(std::move(s));
    }
    params.layers.push_back(std::move(l));
  }
  params.validate();
  return params;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  save_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  return load_checkpoint(in);
}

} // namespace lipgan
