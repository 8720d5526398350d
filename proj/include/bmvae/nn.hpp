#ifndef BMVAE_NN_HPP_
#define BMVAE_NN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "bmvae/errors.hpp"
#include "bmvae/ising.hpp"
#include "bmvae/math.hpp"
#include "bmvae/rng.hpp"
#include "bmvae/text.hpp"

namespace bmvae
{

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation
{
  rectifier,
  logistic,
  identity,
  tanh
};

inline std::string to_string(Activation a)
{
  switch (a)
  {
  case Activation::rectifier:
    return "rectifier";
  case Activation::logistic:
    return "logistic";
  case Activation::identity:
    return "identity";
  case Activation::tanh:
    return "tanh";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& name)
{
  for (auto a : {Activation::rectifier, Activation::logistic, Activation::identity, Activation::tanh})
    if (to_string(a) == name)
      return a;
  throw format_error("unknown activation '" + name + "'");
}

struct DenseLayer
{
  Matrix weight; // out x in
  Vector bias;   // out
  Activation activation = Activation::identity;

  friend bool operator==(const DenseLayer& a, const DenseLayer& b)
  {
    return a.activation == b.activation && a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
           a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
  }
};

struct MlpParams
{
  std::vector<DenseLayer> layers;

  Eigen::Index input_size() const { return layers.front().weight.cols(); }
  Eigen::Index output_size() const { return layers.back().weight.rows(); }

  void validate() const
  {
    detail::require(!layers.empty(), "network has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l)
    {
      detail::require(layers[l].bias.size() == layers[l].weight.rows(), "bias length must equal layer output size");
      if (l > 0)
        detail::require(layers[l].weight.cols() == layers[l - 1].weight.rows(), "layer dimensions do not chain");
      detail::require(layers[l].weight.allFinite() && layers[l].bias.allFinite(), "network parameters must be finite");
    }
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

struct LayerGradient
{
  Matrix weight;
  Vector bias;
};

// Same shapes as the layers of an MlpParams; also used for optimizer moments.
using MlpGradients = std::vector<LayerGradient>;

inline MlpGradients zeros_like(const MlpParams& params)
{
  MlpGradients g;
  for (const auto& layer : params.layers)
    g.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), Vector::Zero(layer.bias.size())});
  return g;
}

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), zero biases.
inline MlpParams make_mlp(const std::vector<int>& sizes, const std::vector<Activation>& activations,
                          std::uint64_t seed)
{
  detail::require(sizes.size() >= 2 && activations.size() == sizes.size() - 1,
                  "need one activation per layer and at least two sizes");
  engine rng = make_stream(seed, 0);
  MlpParams params;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
  {
    detail::require(sizes[l] > 0 && sizes[l + 1] > 0, "layer sizes must be positive");
    const double limit = std::sqrt(6.0 / (sizes[l] + sizes[l + 1]));
    DenseLayer layer{Matrix(sizes[l + 1], sizes[l]), Vector::Zero(sizes[l + 1]), activations[l]};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        layer.weight(r, c) = uniform(rng, -limit, limit);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

// Cached values of one forward pass; columns are examples.
struct Tape
{
  std::vector<Matrix> inputs;   // input to each layer
  std::vector<Matrix> outputs;  // activation output of each layer
  std::vector<Matrix> preacts;  // affine output of each layer
};

struct ForwardResult
{
  Matrix output;
  Tape tape;
};

struct BackwardResult
{
  MlpGradients params;
  Matrix input;
};

namespace detail
{

inline Matrix activate(Activation a, const Matrix& z)
{
  switch (a)
  {
  case Activation::rectifier:
    return z.cwiseMax(0.0);
  case Activation::logistic:
    return z.unaryExpr([](double v) { return logistic(v); });
  case Activation::identity:
    return z;
  case Activation::tanh:
    return z.array().tanh().matrix();
  }
  return z;
}

// d(activation)/d(preact), elementwise.
inline Matrix activation_slope(Activation a, const Matrix& pre, const Matrix& out)
{
  switch (a)
  {
  case Activation::rectifier:
    return pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  case Activation::logistic:
    return (out.array() * (1.0 - out.array())).matrix();
  case Activation::identity:
    return Matrix::Ones(pre.rows(), pre.cols());
  case Activation::tanh:
    return (1.0 - out.array().square()).matrix();
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

} // namespace detail

inline ForwardResult mlp_forward(const MlpParams& params, const Matrix& input)
{
  detail::require(!params.layers.empty(), "network has no layers");
  if (input.rows() != params.input_size())
    throw invalid_argument_error("network input has " + std::to_string(input.rows()) + " rows, expected " +
                                 std::to_string(params.input_size()));
  ForwardResult result;
  Matrix x = input;
  for (const auto& layer : params.layers)
  {
    Matrix pre = layer.weight * x;
    pre.colwise() += layer.bias;
    Matrix out = detail::activate(layer.activation, pre);
    result.tape.inputs.push_back(std::move(x));
    result.tape.preacts.push_back(std::move(pre));
    result.tape.outputs.push_back(out);
    x = std::move(out);
  }
  result.output = std::move(x);
  return result;
}

// Gradients summed over the tape's columns.
inline BackwardResult mlp_backward(const MlpParams& params, const Tape& tape, const Matrix& output_gradient)
{
  const std::size_t n = params.layers.size();
  if (tape.inputs.size() != n || tape.preacts.size() != n || tape.outputs.size() != n)
    throw invalid_argument_error("tape does not match network depth");
  if (output_gradient.rows() != params.output_size() || output_gradient.cols() != tape.outputs.back().cols())
    throw invalid_argument_error("output gradient shape does not match forward output");

  BackwardResult result;
  result.params.resize(n);
  Matrix grad = output_gradient;
  for (std::size_t l = n; l-- > 0;)
  {
    const auto& layer = params.layers[l];
    const Matrix delta = grad.cwiseProduct(detail::activation_slope(layer.activation, tape.preacts[l], tape.outputs[l]));
    result.params[l].weight = delta * tape.inputs[l].transpose();
    result.params[l].bias = delta.rowwise().sum();
    grad = layer.weight.transpose() * delta;
  }
  result.input = std::move(grad);
  return result;
}

// ---------------------------------------------------------------------------------------
// Factorised Bernoulli posterior over +-1 spins, P(z_i = +1) = logistic(mu_i).

struct PosteriorParams
{
  Vector logits;
};

inline SpinConfig posterior_sample(const Vector& mu, engine& rng)
{
  std::vector<std::int8_t> z(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    z[i] = uniform01(rng) < logistic(mu[i]) ? 1 : -1;
  return SpinConfig(std::move(z));
}

// E[z_i] = 2 logistic(mu_i) - 1 = tanh(mu_i / 2)
inline Vector posterior_mean(const Vector& mu)
{
  return (0.5 * mu.array()).tanh().matrix();
}

// dm_i/dmu_i = (1 - m_i^2) / 2
inline Vector posterior_mean_slope(const Vector& mu)
{
  const Vector m = posterior_mean(mu);
  return (0.5 * (1.0 - m.array().square())).matrix();
}

// Nats. Written as p softplus(-mu) + (1-p) softplus(mu), which is the Bernoulli entropy
// with p ln p := 0 at p in {0, 1}.
inline double posterior_entropy(const Vector& mu)
{
  double s = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i)
  {
    const double p = logistic(mu[i]);
    const double a = p > 0.0 ? p * softplus(-mu[i]) : 0.0;
    const double b = p < 1.0 ? (1.0 - p) * softplus(mu[i]) : 0.0;
    s += a + b;
  }
  return s;
}

// dS/dmu_i = -mu_i p_i (1 - p_i)
inline Vector posterior_entropy_gradient(const Vector& mu)
{
  Vector g(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
  {
    const double p = logistic(mu[i]);
    g[i] = -mu[i] * p * (1.0 - p);
  }
  return g;
}

// E_q[E(z)] = -sum_(i,j) J_ij m_i m_j, exact for the factorised posterior.
inline double expected_energy(const Vector& mu, const BoltzmannMachine& bm)
{
  detail::check_dims(bm, static_cast<int>(mu.size()), "posterior logits");
  const Vector m = posterior_mean(mu);
  const auto& edges = bm.graph().edges();
  double e = 0.0;
  for (std::size_t k = 0; k < edges.size(); ++k)
    e -= bm.couplings()[k] * m[edges[k].i] * m[edges[k].j];
  return e;
}

inline Vector expected_energy_gradient(const Vector& mu, const BoltzmannMachine& bm)
{
  detail::check_dims(bm, static_cast<int>(mu.size()), "posterior logits");
  const Vector m = posterior_mean(mu);
  const Vector slope = posterior_mean_slope(mu);
  Vector g = Vector::Zero(mu.size());
  const auto& edges = bm.graph().edges();
  for (std::size_t k = 0; k < edges.size(); ++k)
  {
    const double J = bm.couplings()[k];
    g[edges[k].i] -= J * m[edges[k].j];
    g[edges[k].j] -= J * m[edges[k].i];
  }
  return g.cwiseProduct(slope);
}

inline SpinConfig sign_config(const Vector& mu)
{
  std::vector<std::int8_t> z(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    z[i] = static_cast<std::int8_t>(spin_sign(mu[i]));
  return SpinConfig(std::move(z));
}

inline Vector to_vector(const SpinConfig& z)
{
  Vector v(z.size());
  for (int i = 0; i < z.size(); ++i)
    v[i] = z[i];
  return v;
}

// ---------------------------------------------------------------------------------------
// Bernoulli likelihood

inline constexpr double probability_clamp = 1e-7;

inline double bce_loss(const Vector& x, const Vector& xhat)
{
  detail::require(x.size() == xhat.size(), "bce_loss: length mismatch");
  double loss = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d)
  {
    const double p = std::clamp(xhat[d], probability_clamp, 1.0 - probability_clamp);
    loss -= x[d] * std::log(p) + (1.0 - x[d]) * std::log(1.0 - p);
  }
  return loss;
}

// d bce / d xhat; zero where the clamp is active.
inline Vector bce_gradient(const Vector& x, const Vector& xhat)
{
  detail::require(x.size() == xhat.size(), "bce_gradient: length mismatch");
  Vector g(x.size());
  for (Eigen::Index d = 0; d < x.size(); ++d)
  {
    const double p = xhat[d];
    if (p < probability_clamp || p > 1.0 - probability_clamp)
      g[d] = 0.0;
    else
      g[d] = -x[d] / p + (1.0 - x[d]) / (1.0 - p);
  }
  return g;
}

// ---------------------------------------------------------------------------------------
// Gaussian baseline posterior

inline constexpr double log_variance_min = -10.0;
inline constexpr double log_variance_max = 10.0;

struct GaussianPosterior
{
  Vector mean;
  Vector log_variance; // clamped to [-10, 10]

  GaussianPosterior(Vector m, const Vector& raw_log_variance)
  : mean{std::move(m)}, log_variance{raw_log_variance.cwiseMax(log_variance_min).cwiseMin(log_variance_max)}
  {
    detail::require(mean.size() == log_variance.size(), "gaussian posterior: length mismatch");
    detail::require(mean.allFinite() && log_variance.allFinite(), "gaussian posterior must be finite");
  }
};

// KL(N(mean, diag(exp(logvar))) || N(0, I))
inline double gaussian_kl(const GaussianPosterior& gp)
{
  return 0.5 * (gp.log_variance.array().exp() + gp.mean.array().square() - 1.0 - gp.log_variance.array()).sum();
}

struct GaussianKlGradient
{
  Vector mean;
  Vector log_variance;
};

// Gradient w.r.t. the raw (unclamped) head outputs; zero where the clamp is active.
inline GaussianKlGradient gaussian_kl_gradient(const GaussianPosterior& gp, const Vector& raw_log_variance)
{
  GaussianKlGradient g{gp.mean, 0.5 * (gp.log_variance.array().exp() - 1.0).matrix()};
  for (Eigen::Index i = 0; i < raw_log_variance.size(); ++i)
    if (raw_log_variance[i] < log_variance_min || raw_log_variance[i] > log_variance_max)
      g.log_variance[i] = 0.0;
  return g;
}

inline Vector standard_normal_vector(Eigen::Index n, engine& rng)
{
  Vector eps(n);
  for (Eigen::Index i = 0; i < n; ++i)
    eps[i] = standard_normal(rng);
  return eps;
}

// mean + exp(logvar / 2) * eps
inline Vector reparam_sample(const GaussianPosterior& gp, const Vector& eps)
{
  return gp.mean + (0.5 * gp.log_variance.array()).exp().matrix().cwiseProduct(eps);
}

inline Vector reparam_sample(const GaussianPosterior& gp, engine& rng)
{
  return reparam_sample(gp, standard_normal_vector(gp.mean.size(), rng));
}

// ---------------------------------------------------------------------------------------
// Serialization

inline nlohmann::json mlp_to_json(const MlpParams& params)
{
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : params.layers)
  {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        w.push_back(format_double(layer.weight(r, c)));
    nlohmann::json b = nlohmann::json::array();
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
      b.push_back(format_double(layer.bias[r]));
    layers.push_back({{"in", layer.weight.cols()},
                      {"out", layer.weight.rows()},
                      {"activation", to_string(layer.activation)},
                      {"weight", std::move(w)},
                      {"bias", std::move(b)}});
  }
  return layers;
}

inline MlpParams mlp_from_json(const nlohmann::json& doc)
{
  MlpParams params;
  for (const auto& entry : doc)
  {
    const auto in = entry.at("in").get<Eigen::Index>();
    const auto out = entry.at("out").get<Eigen::Index>();
    const auto& w = entry.at("weight");
    const auto& b = entry.at("bias");
    if (in <= 0 || out <= 0 || static_cast<Eigen::Index>(w.size()) != in * out ||
        static_cast<Eigen::Index>(b.size()) != out)
      throw format_error("layer shape does not match its value arrays");
    DenseLayer layer{Matrix(out, in), Vector(out), activation_from_string(entry.at("activation").get<std::string>())};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c)
        layer.weight(r, c) = parse_double(w[r * in + c].get<std::string>());
    for (Eigen::Index r = 0; r < out; ++r)
      layer.bias[r] = parse_double(b[r].get<std::string>());
    params.layers.push_back(std::move(layer));
  }
  params.validate();
  return params;
}

inline nlohmann::json gradients_to_json(const MlpGradients& grads)
{
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& g : grads)
  {
    nlohmann::json w = nlohmann::json::array();
    for (Eigen::Index r = 0; r < g.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < g.weight.cols(); ++c)
        w.push_back(format_double(g.weight(r, c)));
    nlohmann::json b = nlohmann::json::array();
    for (Eigen::Index r = 0; r < g.bias.size(); ++r)
      b.push_back(format_double(g.bias[r]));
    layers.push_back({{"in", g.weight.cols()}, {"out", g.weight.rows()}, {"weight", std::move(w)}, {"bias", std::move(b)}});
  }
  return layers;
}

inline MlpGradients gradients_from_json(const nlohmann::json& doc)
{
  MlpGradients grads;
  for (const auto& entry : doc)
  {
    const auto in = entry.at("in").get<Eigen::Index>();
    const auto out = entry.at("out").get<Eigen::Index>();
    const auto& w = entry.at("weight");
    const auto& b = entry.at("bias");
    if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out)
      throw format_error("moment shape does not match its value arrays");
    LayerGradient g{Matrix(out, in), Vector(out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c)
        g.weight(r, c) = parse_double(w[r * in + c].get<std::string>());
    for (Eigen::Index r = 0; r < out; ++r)
      g.bias[r] = parse_double(b[r].get<std::string>());
    grads.push_back(std::move(g));
  }
  return grads;
}

} // namespace bmvae

#endif
