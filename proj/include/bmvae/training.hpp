#ifndef BMVAE_TRAINING_HPP_
#define BMVAE_TRAINING_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bmvae/dataset.hpp"
#include "bmvae/errors.hpp"
#include "bmvae/ising.hpp"
#include "bmvae/nn.hpp"
#include "bmvae/rng.hpp"
#include "bmvae/sampler.hpp"

namespace bmvae
{

enum class PriorKind
{
  bm_vae, // Boltzmann-machine prior over +-1 latents
  g_vae   // N(0, I) prior, reparameterised Gaussian posterior
};

inline std::string to_string(PriorKind kind)
{
  return kind == PriorKind::bm_vae ? "bm_vae" : "g_vae";
}

inline PriorKind prior_kind_from_string(const std::string& name)
{
  if (name == "bm_vae")
    return PriorKind::bm_vae;
  if (name == "g_vae")
    return PriorKind::g_vae;
  throw invalid_argument_error("unknown model kind '" + name + "'");
}

/*
 * Training hyperparameters. None of these are prescribed by the method itself; the
 * defaults are desk-scale choices.
 */
struct TrainingConfig
{
  double lambda = 0.01; // KL weight on the encoder gradient only
  double learning_rate = 1e-3;
  std::pair<double, double> adam_betas{0.9, 0.999};
  int batch_size = 32;
  int epochs = 30;
  SamplerSpec prior_sampler = mode1_spec(64, 0); // num_samples / chains / seed are set per step
  int negative_samples_per_step = 64;
  std::uint64_t seed = 0;
  double prior_learning_rate = 1e-2;

  GraphSpec graph = GraphSpec::complete(16);
  std::vector<int> hidden_layers{128};
  double coupling_init_scale = 0.01;
  double coupling_clip = 2.0;
  bool exact_kl = true; // monitor log Z by enumeration when K <= 24

  int latent_dim() const { return graph.kind == GraphSpec::Kind::grid ? graph.rows * graph.cols : graph.num_spins; }

  void validate() const
  {
    detail::require(lambda >= 0.0, "lambda must be nonnegative");
    detail::require(learning_rate >= 0.0, "learning_rate must be nonnegative");
    detail::require(prior_learning_rate >= 0.0, "prior_learning_rate must be nonnegative");
    detail::require(adam_betas.first > 0.0 && adam_betas.first < 1.0 && adam_betas.second > 0.0 &&
                        adam_betas.second < 1.0,
                    "adam betas must lie in (0, 1)");
    detail::require(batch_size > 0, "batch_size must be positive");
    detail::require(epochs >= 0, "epochs must be nonnegative");
    detail::require(negative_samples_per_step > 0, "negative_samples_per_step must be positive");
    detail::require(coupling_clip > 0.0, "coupling_clip must be positive");
    detail::require(latent_dim() > 0, "latent dimension must be positive");
    for (int h : hidden_layers)
      detail::require(h > 0, "hidden layer sizes must be positive");
    prior_sampler.validate();
    detail::require(!prior_sampler.schedule && !prior_sampler.bias && prior_sampler.beta == 1.0,
                    "training negatives must use Mode 1 sampling (beta = 1, no bias, no schedule)");
  }
};

struct AdamMoments
{
  MlpGradients encoder_m, encoder_v;
  MlpGradients decoder_m, decoder_v;
  std::vector<double> prior_m, prior_v;
};

// (encoder phi, decoder theta, prior psi) plus optimizer state.
struct ModelState
{
  PriorKind kind = PriorKind::bm_vae;
  MlpParams encoder; // outputs K logits (bm_vae) or K means followed by K log-variances (g_vae)
  MlpParams decoder; // K -> D, logistic output
  std::optional<BoltzmannMachine> prior;
  ImageShape image_shape;
  std::int64_t step = 0;
  AdamMoments moments;

  int latent_dim() const { return static_cast<int>(decoder.input_size()); }
};

struct ModelGradients
{
  MlpGradients encoder;
  MlpGradients decoder;
  std::vector<double> prior;
};

struct KlComponents
{
  double energy = 0.0;  // mean E_q[E(z)]
  double entropy = 0.0; // mean S(q)
  std::optional<double> log_partition;
  std::optional<double> kl; // energy + log Z - entropy
};

struct EpochMetrics
{
  int epoch = 0;
  double bce = 0.0; // mean per-example BCE over the epoch's training steps
  std::optional<double> energy;
  std::optional<double> entropy;
  std::optional<double> log_partition;
  std::optional<double> kl;
  double seconds = 0.0;
};

inline ModelState init_model(const TrainingConfig& config, const ImageShape& shape, PriorKind kind)
{
  config.validate();
  const int k = config.latent_dim();
  const int d = shape.size();
  detail::require(d > 0, "image shape must be positive");

  std::vector<int> enc_sizes{d};
  std::vector<Activation> enc_acts;
  for (int h : config.hidden_layers)
  {
    enc_sizes.push_back(h);
    enc_acts.push_back(Activation::rectifier);
  }
  enc_sizes.push_back(kind == PriorKind::bm_vae ? k : 2 * k);
  enc_acts.push_back(Activation::identity);

  std::vector<int> dec_sizes{k};
  std::vector<Activation> dec_acts;
  for (auto it = config.hidden_layers.rbegin(); it != config.hidden_layers.rend(); ++it)
  {
    dec_sizes.push_back(*it);
    dec_acts.push_back(Activation::rectifier);
  }
  dec_sizes.push_back(d);
  dec_acts.push_back(Activation::logistic);

  ModelState state;
  state.kind = kind;
  state.image_shape = shape;
  state.encoder = make_mlp(enc_sizes, enc_acts, derive_seed(config.seed, 1));
  state.decoder = make_mlp(dec_sizes, dec_acts, derive_seed(config.seed, 2));
  state.moments.encoder_m = state.moments.encoder_v = zeros_like(state.encoder);
  state.moments.decoder_m = state.moments.decoder_v = zeros_like(state.decoder);
  if (kind == PriorKind::bm_vae)
  {
    state.prior = random_machine(build_graph(config.graph), config.coupling_init_scale, derive_seed(config.seed, 3));
    state.moments.prior_m.assign(state.prior->graph().num_edges(), 0.0);
    state.moments.prior_v = state.moments.prior_m;
  }
  return state;
}

// ---------------------------------------------------------------------------------------
// KL and prior gradient

// mu_batch: K x B logits.
inline KlComponents kl_components(const Matrix& mu_batch, const BoltzmannMachine& prior, bool exact)
{
  detail::check_dims(prior, static_cast<int>(mu_batch.rows()), "posterior logits");
  detail::require(mu_batch.cols() > 0, "empty logit batch");
  if (exact)
    detail::check_enumerable(prior.num_spins());
  KlComponents out;
  for (Eigen::Index b = 0; b < mu_batch.cols(); ++b)
  {
    const Vector mu = mu_batch.col(b);
    out.energy += expected_energy(mu, prior);
    out.entropy += posterior_entropy(mu);
  }
  out.energy /= static_cast<double>(mu_batch.cols());
  out.entropy /= static_cast<double>(mu_batch.cols());
  if (exact)
  {
    out.log_partition = exact_log_partition(prior, 1.0);
    out.kl = out.energy + *out.log_partition - out.entropy;
  }
  return out;
}

/*
 * d(E_q[E] + log Z)/dJ_ij = E_q[-z_i z_j] - E_p[-z_i z_j]
 *                         = -mean_b(m_i m_j) + mean_negatives(z_i z_j)
 * The positive phase uses the analytic posterior moments m = tanh(mu / 2).
 */
inline std::vector<double> prior_gradient(const Matrix& mu_batch, const BoltzmannMachine& prior,
                                          const SampleBatch& negative_batch)
{
  detail::check_dims(prior, static_cast<int>(mu_batch.rows()), "posterior logits");
  detail::require(mu_batch.cols() > 0, "empty logit batch");
  detail::require(negative_batch.size() > 0, "empty negative batch");
  const auto& edges = prior.graph().edges();
  std::vector<double> grad(edges.size(), 0.0);

  for (Eigen::Index b = 0; b < mu_batch.cols(); ++b)
  {
    const Vector m = posterior_mean(mu_batch.col(b));
    for (std::size_t e = 0; e < edges.size(); ++e)
      grad[e] -= m[edges[e].i] * m[edges[e].j];
  }
  for (auto& g : grad)
    g /= static_cast<double>(mu_batch.cols());

  std::vector<double> negative(edges.size(), 0.0);
  for (const auto& z : negative_batch.configs)
  {
    detail::check_dims(prior, z.size(), "negative sample");
    for (std::size_t e = 0; e < edges.size(); ++e)
      negative[e] += z[edges[e].i] * z[edges[e].j];
  }
  for (std::size_t e = 0; e < edges.size(); ++e)
    grad[e] += negative[e] / static_cast<double>(negative_batch.size());
  return grad;
}

// Same as prior_gradient with the negative phase taken from exact moments.
inline std::vector<double> exact_prior_gradient(const Matrix& mu_batch, const BoltzmannMachine& prior)
{
  const auto moments = exact_moments(prior, 1.0);
  const auto& edges = prior.graph().edges();
  std::vector<double> grad(edges.size(), 0.0);
  for (Eigen::Index b = 0; b < mu_batch.cols(); ++b)
  {
    const Vector m = posterior_mean(mu_batch.col(b));
    for (std::size_t e = 0; e < edges.size(); ++e)
      grad[e] -= m[edges[e].i] * m[edges[e].j];
  }
  for (std::size_t e = 0; e < edges.size(); ++e)
    grad[e] = grad[e] / static_cast<double>(mu_batch.cols()) + moments.correlations[e];
  return grad;
}

// ---------------------------------------------------------------------------------------
// Encoder / decoder gradient

enum class LatentPath
{
  sampled, // z ~ q (bm_vae: Bernoulli + straight-through; g_vae: reparameterised)
  mean     // z = E_q[z], deterministic
};

struct GradientResult
{
  ModelGradients gradients; // of the batch mean of BCE + lambda * KL (prior entry left empty)
  double bce_sum = 0.0;
  Matrix logits; // encoder output, K x B (bm_vae) or 2K x B (g_vae)
};

/*
 * Batch gradient of (1/B) sum_b [BCE(x_b, f(z_b)) + lambda * KL_b] with respect to the
 * encoder and decoder.
 *
 * bm_vae: the reconstruction pathway reaches mu through z with the straight-through
 * slope dm/dmu = (1 - m^2)/2; the KL pathway is lambda * d(E_q[E] - S)/dmu, analytic in mu
 * (log Z does not depend on the encoder).
 * g_vae: reparameterised sample, KL to N(0, I) in closed form.
 */
inline GradientResult encoder_decoder_gradient(const Matrix& batch, const ModelState& state,
                                               const TrainingConfig& config, engine& rng,
                                               LatentPath path = LatentPath::sampled)
{
  const Eigen::Index n = batch.cols();
  const int k = state.latent_dim();
  detail::require(n > 0, "empty batch");
  detail::require(batch.rows() == state.encoder.input_size(), "batch rows do not match encoder input");
  if (state.kind == PriorKind::bm_vae)
    detail::require(state.prior.has_value(), "bm_vae state has no prior");

  GradientResult out;
  auto enc = mlp_forward(state.encoder, batch);
  out.logits = enc.output;

  Matrix z(k, n);
  std::vector<Vector> noise;
  if (state.kind == PriorKind::bm_vae)
  {
    for (Eigen::Index b = 0; b < n; ++b)
    {
      const Vector mu = enc.output.col(b);
      z.col(b) = path == LatentPath::sampled ? to_vector(posterior_sample(mu, rng)) : posterior_mean(mu);
    }
  }
  else
  {
    for (Eigen::Index b = 0; b < n; ++b)
    {
      const GaussianPosterior gp(enc.output.col(b).head(k), enc.output.col(b).tail(k));
      if (path == LatentPath::sampled)
      {
        noise.push_back(standard_normal_vector(k, rng));
        z.col(b) = reparam_sample(gp, noise.back());
      }
      else
        z.col(b) = gp.mean;
    }
  }

  auto dec = mlp_forward(state.decoder, z);
  Matrix d_out(dec.output.rows(), n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index b = 0; b < n; ++b)
  {
    const Vector x = batch.col(b), xhat = dec.output.col(b);
    out.bce_sum += bce_loss(x, xhat);
    d_out.col(b) = bce_gradient(x, xhat) * inv_n;
  }
  auto dec_back = mlp_backward(state.decoder, dec.tape, d_out);
  out.gradients.decoder = std::move(dec_back.params);
  const Matrix& dz = dec_back.input;

  Matrix d_enc(enc.output.rows(), n);
  const double kl_scale = config.lambda * inv_n;
  for (Eigen::Index b = 0; b < n; ++b)
  {
    const Vector head = enc.output.col(b);
    if (state.kind == PriorKind::bm_vae)
    {
      Vector g = dz.col(b).cwiseProduct(posterior_mean_slope(head));
      if (config.lambda != 0.0)
        g += kl_scale * (expected_energy_gradient(head, *state.prior) - posterior_entropy_gradient(head));
      d_enc.col(b) = g;
    }
    else
    {
      const Vector raw_lv = head.tail(k);
      const GaussianPosterior gp(head.head(k), raw_lv);
      const auto kl = gaussian_kl_gradient(gp, raw_lv);
      Vector d_mean = dz.col(b) + kl_scale * kl.mean;
      Vector d_lv = kl_scale * kl.log_variance;
      if (path == LatentPath::sampled)
        for (int i = 0; i < k; ++i)
          if (raw_lv[i] >= log_variance_min && raw_lv[i] <= log_variance_max)
            d_lv[i] += dz(i, b) * noise[b][i] * 0.5 * std::exp(0.5 * gp.log_variance[i]);
      d_enc.col(b) << d_mean, d_lv;
    }
  }
  out.gradients.encoder = mlp_backward(state.encoder, enc.tape, d_enc).params;
  return out;
}

// ---------------------------------------------------------------------------------------
// Optimizer

namespace detail
{

struct AdamCoefficients
{
  double lr, b1, b2, c1, c2;
  static constexpr double eps = 1e-8;

  double update(double& param, double& m, double& v, double g) const
  {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double step = lr * (m / c1) / (std::sqrt(v / c2) + eps);
    param -= step;
    return step;
  }
};

inline void adam_update(MlpParams& params, MlpGradients& m, MlpGradients& v, const MlpGradients& g,
                        const AdamCoefficients& coeff)
{
  require(g.size() == params.layers.size() && m.size() == g.size() && v.size() == g.size(),
          "gradient / moment depth does not match network");
  for (std::size_t l = 0; l < g.size(); ++l)
  {
    auto& layer = params.layers[l];
    require(g[l].weight.rows() == layer.weight.rows() && g[l].weight.cols() == layer.weight.cols() &&
                m[l].weight.size() == layer.weight.size() && v[l].weight.size() == layer.weight.size(),
            "gradient / moment shape does not match layer");
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      coeff.update(layer.weight.data()[i], m[l].weight.data()[i], v[l].weight.data()[i], g[l].weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      coeff.update(layer.bias.data()[i], m[l].bias.data()[i], v[l].bias.data()[i], g[l].bias.data()[i]);
  }
}

} // namespace detail

/*
 * One bias-corrected Adam step (eps = 1e-8) on every parameter group that has a
 * gradient. Encoder and decoder use learning_rate, the prior couplings use
 * prior_learning_rate and are clipped to [-coupling_clip, coupling_clip] afterwards.
 */
inline ModelState adam_step(ModelState state, const ModelGradients& grads, const TrainingConfig& config)
{
  const auto t = static_cast<double>(state.step + 1);
  const auto [b1, b2] = config.adam_betas;
  const detail::AdamCoefficients net{config.learning_rate, b1, b2, 1.0 - std::pow(b1, t), 1.0 - std::pow(b2, t)};

  if (!grads.encoder.empty())
    detail::adam_update(state.encoder, state.moments.encoder_m, state.moments.encoder_v, grads.encoder, net);
  if (!grads.decoder.empty())
    detail::adam_update(state.decoder, state.moments.decoder_m, state.moments.decoder_v, grads.decoder, net);
  if (!grads.prior.empty())
  {
    detail::require(state.prior.has_value(), "prior gradient given for a model without a prior");
    auto J = state.prior->couplings();
    detail::require(grads.prior.size() == J.size() && state.moments.prior_m.size() == J.size(),
                    "prior gradient length does not match couplings");
    detail::AdamCoefficients prior_coeff = net;
    prior_coeff.lr = config.prior_learning_rate;
    for (std::size_t e = 0; e < J.size(); ++e)
    {
      prior_coeff.update(J[e], state.moments.prior_m[e], state.moments.prior_v[e], grads.prior[e]);
      J[e] = std::clamp(J[e], -config.coupling_clip, config.coupling_clip);
    }
    state.prior = state.prior->with_couplings(std::move(J));
  }
  ++state.step;
  return state;
}

// ---------------------------------------------------------------------------------------
// Training loop

namespace detail
{

// Stream families under the training seed.
inline constexpr std::uint64_t shuffle_stream = 1ull << 40;
inline constexpr std::uint64_t posterior_stream = 2ull << 40;
inline constexpr std::uint64_t negative_stream = 3ull << 40;

} // namespace detail

// Encoder logits for every image, K x N (2K x N for g_vae).
inline Matrix encode_all(const ModelState& state, const Dataset& dataset)
{
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return mlp_forward(state.encoder, dataset.batch(order, 0, order.size())).output;
}

// KL diagnostics of the current model over the whole dataset.
inline void fill_kl_metrics(EpochMetrics& metrics, const ModelState& state, const Dataset& dataset,
                            const TrainingConfig& config)
{
  const Matrix heads = encode_all(state, dataset);
  if (state.kind == PriorKind::bm_vae)
  {
    const bool exact = config.exact_kl && state.prior->num_spins() <= max_enumeration_spins;
    const auto kl = kl_components(heads, *state.prior, exact);
    metrics.energy = kl.energy;
    metrics.entropy = kl.entropy;
    metrics.log_partition = kl.log_partition;
    metrics.kl = kl.kl;
  }
  else
  {
    const int k = state.latent_dim();
    double sum = 0.0;
    for (Eigen::Index b = 0; b < heads.cols(); ++b)
      sum += gaussian_kl(GaussianPosterior(heads.col(b).head(k), heads.col(b).tail(k)));
    metrics.kl = sum / static_cast<double>(heads.cols());
  }
}

struct TrainResult
{
  ModelState state;
  std::vector<EpochMetrics> metrics;
};

using EpochCallback = std::function<void(const ModelState&, const EpochMetrics&)>;

/*
 * Minibatch training. Each step: encoder/decoder gradient on the shuffled batch, then for
 * bm_vae a Mode 1 negative batch from the current prior and the positive/negative-phase
 * prior gradient, then one Adam step on all groups. The g_vae path never builds or samples
 * a Boltzmann machine.
 */
inline TrainResult train(const Dataset& dataset, const TrainingConfig& config, PriorKind kind,
                         const EpochCallback& on_epoch = {})
{
  config.validate();
  detail::require(dataset.size() > 0, "training dataset is empty");
  dataset.validate();

  TrainResult result{init_model(config, dataset.shape, kind), {}};
  ModelState& state = result.state;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch)
  {
    const auto start = std::chrono::steady_clock::now();
    engine shuffle_rng = make_stream(config.seed, detail::shuffle_stream + static_cast<std::uint64_t>(epoch));
    shuffle(shuffle_rng, order);

    double bce_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(config.batch_size))
    {
      const std::size_t count = std::min<std::size_t>(config.batch_size, order.size() - first);
      const Matrix x = dataset.batch(order, first, count);
      const auto step = static_cast<std::uint64_t>(state.step);
      engine rng = make_stream(config.seed, detail::posterior_stream + step);
      auto res = encoder_decoder_gradient(x, state, config, rng);
      bce_sum += res.bce_sum;

      if (kind == PriorKind::bm_vae)
      {
        SamplerSpec spec = config.prior_sampler;
        spec.num_samples = config.negative_samples_per_step;
        spec.chains = config.negative_samples_per_step;
        spec.seed = derive_seed(config.seed, detail::negative_stream + step);
        const auto negatives = gibbs_sample(*state.prior, spec);
        res.gradients.prior = prior_gradient(res.logits, *state.prior, negatives);
      }
      state = adam_step(std::move(state), res.gradients, config);
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.bce = bce_sum / static_cast<double>(dataset.size());
    fill_kl_metrics(metrics, state, dataset, config);
    metrics.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.metrics.push_back(metrics);
    if (on_epoch)
      on_epoch(state, metrics);
  }
  return result;
}

// First epoch (1-based) whose mean BCE is at or below `threshold`; nullopt if none.
inline std::optional<int> epochs_to_reach(const std::vector<EpochMetrics>& metrics, double threshold)
{
  for (const auto& m : metrics)
    if (m.bce <= threshold)
      return m.epoch;
  return std::nullopt;
}

} // namespace bmvae

#endif
