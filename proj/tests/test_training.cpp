#include <gtest/gtest.h>

#include <cmath>

#include "bmvae/training.hpp"
#include "objective.hpp"
#include "test_helpers.hpp"

using namespace bmvae;

namespace
{

TrainingConfig tiny_config(int k = 4)
{
  TrainingConfig c;
  c.graph = GraphSpec::complete(k);
  c.hidden_layers = {5};
  c.batch_size = 4;
  c.epochs = 2;
  c.negative_samples_per_step = 8;
  c.prior_sampler = mode1_spec(8, 0, 20, 2);
  c.seed = 17;
  return c;
}

Matrix random_batch(int d, int n, std::uint64_t seed)
{
  engine rng = make_stream(seed, 0);
  Matrix x(d, n);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x.data()[i] = uniform01(rng);
  return x;
}

Matrix random_logits(int k, int n, double scale, std::uint64_t seed)
{
  engine rng = make_stream(seed, 0);
  Matrix mu(k, n);
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    mu.data()[i] = uniform(rng, -scale, scale);
  return mu;
}

ModelState perturbed_state(const TrainingConfig& c, PriorKind kind, int d)
{
  auto s = init_model(c, {d, 1, 1}, kind);
  // move biases off zero so no rectifier sits on its kink
  engine rng = make_stream(99, 0);
  for (auto* net : {&s.encoder, &s.decoder})
    for (auto& layer : net->layers)
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
        layer.bias[i] = uniform(rng, -0.3, 0.3);
  if (s.prior)
    s.prior = random_machine(s.prior->graph(), 0.5, 5);
  return s;
}

// max |analytic - fd| / max(|fd|) over every network parameter
double gradient_error(ModelState s, const Matrix& x, double lambda, const ModelGradients& g)
{
  const double eps = 1e-5;
  double diff = 0.0, scale = 1e-12;
  auto check = [&](MlpParams ModelState::*net, const MlpGradients& grads) {
    for (std::size_t l = 0; l < (s.*net).layers.size(); ++l)
    {
      auto visit = [&](double* p, const double* gp, Eigen::Index n) {
        for (Eigen::Index i = 0; i < n; ++i)
        {
          const double orig = p[i];
          const double fd = oracle::central_difference(
              [&](double v) {
                p[i] = v;
                return oracle::mean_path_objective(s, x, lambda);
              },
              orig, eps);
          p[i] = orig;
          diff = std::max(diff, std::abs(fd - gp[i]));
          scale = std::max(scale, std::abs(fd));
        }
      };
      auto& layer = (s.*net).layers[l];
      visit(layer.weight.data(), grads[l].weight.data(), layer.weight.size());
      visit(layer.bias.data(), grads[l].bias.data(), layer.bias.size());
    }
  };
  check(&ModelState::encoder, g.encoder);
  check(&ModelState::decoder, g.decoder);
  return diff / scale;
}

} // namespace

TEST(Kl, MatchesBruteForce)
{
  const auto bm = random_machine(build_graph(GraphSpec::complete(6)), 0.8, 3);
  const Matrix mu = random_logits(6, 5, 3.0, 4);
  for (Eigen::Index b = 0; b < mu.cols(); ++b)
  {
    const auto kl = kl_components(mu.col(b), bm, true);
    const std::vector<double> m(mu.col(b).data(), mu.col(b).data() + 6);
    ASSERT_TRUE(kl.kl.has_value());
    EXPECT_NEAR(*kl.kl, oracle::kl_factorised_vs_boltzmann(m, dense_of(bm)), 1e-10);
    EXPECT_GE(*kl.kl, -1e-12);
  }
}

TEST(Kl, ZeroCouplingsZeroLogitsIsZero)
{
  const auto bm = BoltzmannMachine::zeros(build_graph(GraphSpec::complete(3)));
  const auto kl = kl_components(Matrix::Zero(3, 2), bm, true);
  EXPECT_NEAR(*kl.kl, 0.0, 1e-12);
  EXPECT_NEAR(kl.entropy, 3.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(*kl.log_partition, 3.0 * std::log(2.0), 1e-12);
}

TEST(Kl, WithoutExactHasNoLogZ)
{
  const auto kl = kl_components(Matrix::Zero(3, 1), triangle_machine(), false);
  EXPECT_FALSE(kl.log_partition);
  EXPECT_FALSE(kl.kl);
}

TEST(PriorGradient, ExactMatchesFiniteDifference)
{
  auto bm = random_machine(build_graph(GraphSpec::complete(5)), 0.7, 8);
  const Matrix mu = random_logits(5, 3, 2.0, 9);
  const auto g = exact_prior_gradient(mu, bm);
  auto objective = [&](const BoltzmannMachine& m) {
    const auto kl = kl_components(mu, m, true);
    return kl.energy + *kl.log_partition;
  };
  for (std::size_t e = 0; e < g.size(); ++e)
  {
    const double fd = oracle::central_difference(
        [&](double v) {
          auto J = bm.couplings();
          J[e] = v;
          return objective(bm.with_couplings(J));
        },
        bm.couplings()[e], 1e-5);
    EXPECT_NEAR(g[e], fd, 1e-8) << "edge " << e;
  }
}

TEST(PriorGradient, SingleEdgeExample)
{
  // J = 0: <z0 z1>_p = 0; mu = (0, 0) gives m = 0; negatives (+,+) and (+,-) average 0.
  const auto bm = pair_machine(0.0);
  SampleBatch neg;
  neg.configs = {spins({1, 1}), spins({1, -1}), spins({-1, -1})};
  neg.energies = {0.0, 0.0, 0.0};
  const auto g = prior_gradient(Matrix::Zero(2, 1), bm, neg);
  EXPECT_NEAR(g[0], 1.0 / 3.0, 1e-15);

  Matrix mu(2, 1);
  mu << 2.0 * std::atanh(0.5), 2.0 * std::atanh(0.5); // m = 0.5 each
  EXPECT_NEAR(prior_gradient(mu, bm, neg)[0], 1.0 / 3.0 - 0.25, 1e-12);
}

TEST(PriorGradient, StochasticAgreesWithExact)
{
  const auto bm = random_machine(build_graph(GraphSpec::complete(5)), 0.5, 12);
  const Matrix mu = random_logits(5, 4, 2.0, 13);
  SamplerSpec spec = mode1_spec(1, 21);
  spec.num_samples = 40000;
  spec.chains = 20;
  const auto neg = gibbs_sample(bm, spec);
  const auto g = prior_gradient(mu, bm, neg);
  const auto ge = exact_prior_gradient(mu, bm);
  for (std::size_t e = 0; e < g.size(); ++e)
    EXPECT_NEAR(g[e], ge[e], 0.03);
}

TEST(PriorGradient, FixedPointWhenMomentsMatch)
{
  // Uncoupled prior and zero logits: both phases vanish.
  const auto bm = BoltzmannMachine::zeros(build_graph(GraphSpec::complete(4)));
  for (double g : exact_prior_gradient(Matrix::Zero(4, 3), bm))
    EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(EncoderDecoderGradient, BmMeanPathMatchesFiniteDifference)
{
  auto c = tiny_config();
  for (double lambda : {0.0, 0.3})
  {
    c.lambda = lambda;
    const auto s = perturbed_state(c, PriorKind::bm_vae, 6);
    const Matrix x = random_batch(6, 3, 2);
    engine rng = make_stream(1, 0);
    const auto g = encoder_decoder_gradient(x, s, c, rng, LatentPath::mean);
    EXPECT_LT(gradient_error(s, x, lambda, g.gradients), 1e-6) << "lambda " << lambda;
    EXPECT_NEAR(g.bce_sum / 3.0, oracle::mean_path_objective(s, x, 0.0), 1e-12);
  }
}

TEST(EncoderDecoderGradient, GaussianMeanPathMatchesFiniteDifference)
{
  auto c = tiny_config();
  c.lambda = 0.5;
  const auto s = perturbed_state(c, PriorKind::g_vae, 6);
  ASSERT_FALSE(s.prior);
  ASSERT_EQ(s.encoder.output_size(), 8);
  const Matrix x = random_batch(6, 3, 7);
  engine rng = make_stream(1, 0);
  const auto g = encoder_decoder_gradient(x, s, c, rng, LatentPath::mean);
  EXPECT_LT(gradient_error(s, x, c.lambda, g.gradients), 1e-6);
}

TEST(EncoderDecoderGradient, LinearInLambda)
{
  auto c = tiny_config();
  const Matrix x = random_batch(6, 4, 3);
  auto grad_at = [&](double lambda) {
    c.lambda = lambda;
    const auto s = perturbed_state(c, PriorKind::bm_vae, 6);
    engine rng = make_stream(4, 0);
    return encoder_decoder_gradient(x, s, c, rng, LatentPath::sampled).gradients;
  };
  const auto g0 = grad_at(0.0), g1 = grad_at(1.0), g2 = grad_at(2.5);
  for (std::size_t l = 0; l < g0.encoder.size(); ++l)
  {
    const Matrix expect = g0.encoder[l].weight + 2.5 * (g1.encoder[l].weight - g0.encoder[l].weight);
    EXPECT_LT((g2.encoder[l].weight - expect).cwiseAbs().maxCoeff(), 1e-12);
    // decoder never sees lambda
    EXPECT_EQ(g0.decoder[l].weight, g2.decoder[l].weight);
  }
}

TEST(EncoderDecoderGradient, SampledPathIsDeterministicPerStream)
{
  const auto c = tiny_config();
  const auto s = perturbed_state(c, PriorKind::bm_vae, 6);
  const Matrix x = random_batch(6, 4, 3);
  engine r1 = make_stream(8, 0), r2 = make_stream(8, 0);
  const auto a = encoder_decoder_gradient(x, s, c, r1);
  const auto b = encoder_decoder_gradient(x, s, c, r2);
  EXPECT_EQ(a.gradients.encoder[0].weight, b.gradients.encoder[0].weight);
  EXPECT_EQ(a.bce_sum, b.bce_sum);
}

TEST(EncoderDecoderGradient, RejectsShapeMismatch)
{
  const auto c = tiny_config();
  const auto s = init_model(c, {6, 1, 1}, PriorKind::bm_vae);
  engine rng = make_stream(0, 0);
  EXPECT_THROW(encoder_decoder_gradient(random_batch(5, 2, 1), s, c, rng), invalid_argument_error);
}

TEST(Adam, FirstStepMovesByLearningRate)
{
  auto c = tiny_config();
  c.learning_rate = 0.01;
  c.prior_learning_rate = 0.1;
  auto s = init_model(c, {6, 1, 1}, PriorKind::bm_vae);
  ModelGradients g;
  g.encoder = zeros_like(s.encoder);
  g.encoder[0].weight(0, 0) = 3.0;
  g.encoder[0].weight(1, 0) = -1e-3;
  g.prior.assign(s.prior->couplings().size(), 0.0);
  g.prior[0] = -2.0;
  const auto before = s;
  s = adam_step(s, g, c);
  EXPECT_EQ(s.step, 1);
  EXPECT_NEAR(s.encoder.layers[0].weight(0, 0), before.encoder.layers[0].weight(0, 0) - 0.01, 1e-9);
  EXPECT_NEAR(s.encoder.layers[0].weight(1, 0), before.encoder.layers[0].weight(1, 0) + 0.01, 1e-7);
  EXPECT_EQ(s.encoder.layers[0].weight(2, 0), before.encoder.layers[0].weight(2, 0));
  EXPECT_EQ(s.decoder.layers[0].weight, before.decoder.layers[0].weight);
  EXPECT_NEAR(s.prior->couplings()[0], before.prior->couplings()[0] + 0.1, 1e-9);
}

TEST(Adam, SecondStepHandExample)
{
  auto c = tiny_config();
  c.learning_rate = 0.1;
  auto s = init_model(c, {2, 1, 1}, PriorKind::g_vae);
  auto g = ModelGradients{zeros_like(s.encoder), {}, {}};
  const double w0 = s.encoder.layers[0].weight(0, 0);
  g.encoder[0].weight(0, 0) = 1.0;
  s = adam_step(s, g, c);
  g.encoder[0].weight(0, 0) = -1.0;
  s = adam_step(s, g, c);
  // m = 0.9*0.1 - 0.1 = -0.01 -> m_hat = -0.01/0.19; v = 0.001*0.999 + 0.001 -> v_hat = 1
  const double m_hat = -0.01 / (1.0 - 0.81);
  const double v_hat = (0.999 * 0.001 + 0.001) / (1.0 - 0.999 * 0.999);
  const double expected = w0 - 0.1 / (1.0 + 1e-8) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
  EXPECT_NEAR(s.encoder.layers[0].weight(0, 0), expected, 1e-12);
}

TEST(Adam, CouplingsClipped)
{
  auto c = tiny_config();
  c.prior_learning_rate = 5.0;
  c.coupling_clip = 2.0;
  auto s = init_model(c, {3, 1, 1}, PriorKind::bm_vae);
  ModelGradients g;
  g.prior.assign(s.prior->couplings().size(), -1.0);
  g.prior[1] = 1.0;
  s = adam_step(s, g, c);
  EXPECT_EQ(s.prior->couplings()[0], 2.0);
  EXPECT_EQ(s.prior->couplings()[1], -2.0);
}

TEST(Adam, ZeroLearningRateLeavesParameters)
{
  auto c = tiny_config();
  c.learning_rate = 0.0;
  c.prior_learning_rate = 0.0;
  const auto ds = synth_dataset({12, 8, 1});
  const auto initial = init_model(c, ds.shape, PriorKind::bm_vae);
  const auto r = train(ds, c, PriorKind::bm_vae);
  EXPECT_EQ(r.state.step, 6);
  for (std::size_t l = 0; l < initial.encoder.layers.size(); ++l)
    EXPECT_EQ(r.state.encoder.layers[l].weight, initial.encoder.layers[l].weight);
  EXPECT_EQ(r.state.prior->couplings(), initial.prior->couplings());
}

TEST(Train, DeterministicForSeed)
{
  const auto c = tiny_config();
  const auto ds = synth_dataset({16, 8, 2});
  const auto a = train(ds, c, PriorKind::bm_vae);
  const auto b = train(ds, c, PriorKind::bm_vae);
  ASSERT_EQ(a.metrics.size(), 2u);
  for (std::size_t e = 0; e < a.metrics.size(); ++e)
  {
    EXPECT_EQ(a.metrics[e].bce, b.metrics[e].bce);
    EXPECT_EQ(a.metrics[e].kl, b.metrics[e].kl);
  }
  EXPECT_EQ(a.state.prior->couplings(), b.state.prior->couplings());
  EXPECT_EQ(a.state.decoder.layers[1].weight, b.state.decoder.layers[1].weight);

  auto c2 = c;
  c2.seed = 18;
  EXPECT_NE(train(ds, c2, PriorKind::bm_vae).metrics[0].bce, a.metrics[0].bce);
}

TEST(Train, MetricsCarryKlComponents)
{
  const auto c = tiny_config();
  const auto ds = synth_dataset({8, 8, 2});
  int calls = 0;
  const auto r = train(ds, c, PriorKind::bm_vae, [&](const ModelState&, const EpochMetrics& m) {
    ++calls;
    ASSERT_TRUE(m.kl && m.energy && m.entropy && m.log_partition);
    EXPECT_NEAR(*m.kl, *m.energy + *m.log_partition - *m.entropy, 1e-12);
    EXPECT_GE(*m.kl, -1e-9);
    EXPECT_GT(m.bce, 0.0);
  });
  EXPECT_EQ(calls, 2);
}

TEST(Train, GaussianNeverSamplesPrior)
{
  auto c = tiny_config();
  c.epochs = 3;
  const auto ds = synth_dataset({16, 8, 2});
  const auto before = diagnostics::sampler_invocations.load();
  const auto r = train(ds, c, PriorKind::g_vae);
  EXPECT_EQ(diagnostics::sampler_invocations.load(), before);
  EXPECT_FALSE(r.state.prior);
  for (const auto& m : r.metrics)
  {
    EXPECT_FALSE(m.energy);
    ASSERT_TRUE(m.kl);
    EXPECT_GE(*m.kl, 0.0);
  }
}

TEST(Train, ReconstructionImproves)
{
  auto c = tiny_config(6);
  c.hidden_layers = {32};
  c.learning_rate = 3e-3;
  c.epochs = 6;
  c.batch_size = 16;
  const auto ds = synth_dataset({128, 8, 3});
  const auto r = train(ds, c, PriorKind::bm_vae);
  EXPECT_LT(r.metrics.back().bce, r.metrics.front().bce);
}

TEST(Train, ZeroEpochsReturnsInitialModel)
{
  auto c = tiny_config();
  c.epochs = 0;
  const auto ds = synth_dataset({4, 8, 2});
  const auto r = train(ds, c, PriorKind::bm_vae);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(r.state.step, 0);
}

TEST(TrainingConfig, Validation)
{
  auto c = tiny_config();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), invalid_argument_error);
  c = tiny_config();
  c.prior_sampler.beta = 2.0;
  EXPECT_THROW(c.validate(), invalid_argument_error);
  c = tiny_config();
  c.lambda = -1.0;
  EXPECT_THROW(c.validate(), invalid_argument_error);
  EXPECT_THROW(prior_kind_from_string("vae"), invalid_argument_error);
  EXPECT_EQ(prior_kind_from_string(to_string(PriorKind::g_vae)), PriorKind::g_vae);
}

TEST(EpochsToReach, FirstCrossing)
{
  std::vector<EpochMetrics> m(3);
  for (int e = 0; e < 3; ++e)
  {
    m[e].epoch = e + 1;
    m[e].bce = 10.0 - e;
  }
  EXPECT_EQ(epochs_to_reach(m, 9.0), 2);
  EXPECT_EQ(epochs_to_reach(m, 20.0), 1);
  EXPECT_FALSE(epochs_to_reach(m, 1.0));
}
