#include <gtest/gtest.h>

#include <cmath>

#include "bmvae/sampler.hpp"
#include "test_helpers.hpp"

using namespace bmvae;

namespace
{

BoltzmannMachine k12_machine()
{
  return random_machine(build_graph(GraphSpec::random_regular(12, 3, 7)), 1.0, 11);
}

std::vector<double> sample_correlations(const SampleBatch& batch, const BoltzmannMachine& bm)
{
  std::vector<double> c(bm.graph().num_edges(), 0.0);
  for (const auto& z : batch.configs)
    for (std::size_t e = 0; e < c.size(); ++e)
      c[e] += z[bm.graph().edges()[e].i] * z[bm.graph().edges()[e].j];
  for (auto& v : c)
    v /= static_cast<double>(batch.size());
  return c;
}

std::vector<double> sample_means(const SampleBatch& batch, int k)
{
  std::vector<double> m(k, 0.0);
  for (const auto& z : batch.configs)
    for (int i = 0; i < k; ++i)
      m[i] += z[i];
  for (auto& v : m)
    v /= static_cast<double>(batch.size());
  return m;
}

} // namespace

TEST(SamplerSpec, Validation)
{
  SamplerSpec spec;
  EXPECT_NO_THROW(spec.validate());
  spec.beta = 0.0;
  EXPECT_THROW(spec.validate(), invalid_argument_error);
  spec = SamplerSpec{};
  spec.schedule = std::vector<double>{0.5, 0.4, 1.0};
  EXPECT_THROW(spec.validate(), invalid_argument_error);
  spec.schedule = std::vector<double>{0.5, 2.0};
  EXPECT_THROW(spec.validate(), invalid_argument_error); // does not end at beta
  spec.schedule = std::vector<double>{};
  EXPECT_THROW(annealed_sample(pair_machine(), spec), invalid_argument_error);
  EXPECT_THROW(gibbs_sample(pair_machine(), mode2_spec(4, 0)), invalid_argument_error);
}

TEST(GeometricSchedule, EndpointsAndMonotone)
{
  auto s = geometric_schedule(0.2, 5.0, 20);
  ASSERT_EQ(s.size(), 20u);
  EXPECT_DOUBLE_EQ(s.front(), 0.2);
  EXPECT_EQ(s.back(), 5.0);
  for (std::size_t k = 1; k < s.size(); ++k)
    EXPECT_GT(s[k], s[k - 1]);
}

TEST(ExactSample, UniformMachine)
{
  auto bm = BoltzmannMachine::zeros(build_graph(GraphSpec::complete(6)));
  SamplerSpec spec;
  spec.num_samples = 100000;
  spec.seed = 5;
  auto batch = exact_sample(bm, spec);
  for (double m : sample_means(batch, 6))
    EXPECT_LT(std::abs(m), 0.02);
}

TEST(ExactSample, PairCorrelation)
{
  SamplerSpec spec;
  spec.num_samples = 100000;
  spec.seed = 1;
  auto batch = exact_sample(pair_machine(), spec);
  EXPECT_NEAR(sample_correlations(batch, pair_machine())[0], std::tanh(1.0), 0.02);
}

TEST(ExactSample, LargeBetaConcentratesOnGroundPair)
{
  auto bm = k12_machine();
  const double emin = exact_energy_range(bm).min;
  SamplerSpec spec;
  spec.beta = 50.0;
  spec.num_samples = 2000;
  auto batch = exact_sample(bm, spec);
  for (double e : batch.energies)
    EXPECT_NEAR(e, emin, 1e-9);
}

TEST(GibbsSample, UniformMachineIsUncorrelated)
{
  auto bm = BoltzmannMachine::zeros(build_graph(GraphSpec::complete(5)));
  SamplerSpec spec;
  spec.num_samples = 20000;
  spec.chains = 4;
  auto batch = gibbs_sample(bm, spec);
  for (double c : sample_correlations(batch, bm))
    EXPECT_LT(std::abs(c), 5.0 / std::sqrt(20000.0));
}

TEST(GibbsSample, MatchesExactMomentsOnK12)
{
  auto bm = k12_machine();
  SamplerSpec spec;
  spec.num_samples = 50000;
  spec.chains = 10;
  spec.burn_in_sweeps = 500;
  spec.thinning_sweeps = 10;
  spec.seed = 2024;
  auto batch = gibbs_sample(bm, spec);
  auto exact = exact_moments(bm, 1.0);
  auto sampled = sample_correlations(batch, bm);
  for (std::size_t e = 0; e < sampled.size(); ++e)
    EXPECT_NEAR(sampled[e], exact.correlations[e], 0.03) << "edge " << e;
}

TEST(GibbsSample, StrongBiasPinsSpin)
{
  auto bm = k12_machine();
  std::vector<double> b(12, 0.0);
  b[4] = 10.0;
  SamplerSpec spec;
  spec.bias = BiasField(b);
  spec.num_samples = 5000;
  spec.chains = 5;
  spec.burn_in_sweeps = 50;
  auto batch = gibbs_sample(bm, spec);
  EXPECT_GT(sample_means(batch, 12)[4], 0.99);
  EXPECT_GT(exact_moments(bm, 1.0, spec.bias).means[4], 0.99);
}

TEST(GibbsSample, IndependentChainsWithinThreeStandardErrors)
{
  auto bm = random_machine(build_graph(GraphSpec::random_regular(10, 3, 1)), 1.0, 3);
  auto batch = gibbs_sample(bm, mode1_spec(20000, 77));
  auto exact = exact_moments(bm, 1.0);
  auto sampled = sample_correlations(batch, bm);
  for (std::size_t e = 0; e < sampled.size(); ++e)
  {
    const double se = std::sqrt((1.0 - exact.correlations[e] * exact.correlations[e]) / 20000.0);
    EXPECT_LT(std::abs(sampled[e] - exact.correlations[e]), 3.0 * se) << "edge " << e;
  }
}

TEST(HeatBath, DetailedBalanceOfSingleSiteUpdate)
{
  auto bm = random_machine(build_graph(GraphSpec::complete(6)), 1.5, 8);
  const BiasField bias({0.4, -0.3, 0.0, 1.2, -2.0, 0.7});
  engine rng = make_stream(1, 1);
  for (int trial = 0; trial < 50; ++trial)
  {
    auto z = SpinConfig::from_index(uniform_index(rng, 64), 6);
    const int site = static_cast<int>(uniform_index(rng, 6));
    const double beta = uniform(rng, 0.1, 4.0);
    std::vector<std::int8_t> up(z.spins().begin(), z.spins().end()), down = up;
    up[site] = 1;
    down[site] = -1;
    const double e_up = conditioned_energy(bm, bias, SpinConfig(up));
    const double e_down = conditioned_energy(bm, bias, SpinConfig(down));
    const double expected = std::exp(-beta * e_up) / (std::exp(-beta * e_up) + std::exp(-beta * e_down));
    const double h = bm.coupling_field(site, z.spins()) + bias[site];
    EXPECT_NEAR(heat_bath_up_probability(beta, h), expected, 1e-12);
  }
}

TEST(Samplers, Deterministic)
{
  auto bm = k12_machine();
  auto g = mode1_spec(50, 9);
  EXPECT_EQ(gibbs_sample(bm, g).configs, gibbs_sample(bm, g).configs);
  auto a = mode3_spec(BiasField(std::vector<double>(12, 0.3)), 20, 4);
  auto a1 = annealed_sample(bm, a), a2 = annealed_sample(bm, a);
  EXPECT_EQ(a1.configs, a2.configs);
  EXPECT_EQ(a1.energies, a2.energies);
  SamplerSpec e;
  e.num_samples = 100;
  EXPECT_EQ(exact_sample(bm, e).configs, exact_sample(bm, e).configs);
}

TEST(Samplers, BatchEnergiesMatchRecomputation)
{
  auto bm = k12_machine();
  auto batch = annealed_sample(bm, mode3_spec(BiasField(std::vector<double>(12, -0.4)), 30, 2));
  for (std::size_t n = 0; n < batch.size(); ++n)
    EXPECT_EQ(batch.energies[n], conditioned_energy(bm, batch.spec.bias, batch.configs[n]));
}

TEST(AnnealedSample, SingleStepScheduleIsGibbsAtBeta)
{
  auto bm = random_machine(build_graph(GraphSpec::random_regular(8, 3, 2)), 1.0, 6);
  SamplerSpec spec;
  spec.beta = 1.0;
  spec.schedule = std::vector<double>{1.0};
  spec.num_samples = 50000;
  spec.seed = 3;
  auto annealed = annealed_sample(bm, spec);
  EXPECT_LT(tv_distance(annealed, bm, 1.0), 0.05);
}

TEST(AnnealedSample, LowerMeanEnergyAtHigherFinalBeta)
{
  auto bm = k12_machine();
  auto cold = annealed_sample(bm, mode2_spec(10000, 1));
  auto warm = annealed_sample(bm, mode2_spec(10000, 1, 0.2, 1.0));
  EXPECT_LE(cold.mean_energy(), warm.mean_energy());
  EXPECT_LE(exact_mean_energy(bm, 5.0), exact_mean_energy(bm, 1.0));
}

TEST(AnnealedSample, StrongBiasSteersSigns)
{
  auto bm = random_machine(build_graph(GraphSpec::complete(10)), 0.5, 12);
  const std::vector<double> m = {0.9, -0.8, 0.1, 0.6, -0.3, 0.0, -0.95, 0.55, 0.2, -0.7};
  const double gamma = 4.0;
  std::vector<double> b;
  for (double v : m)
    b.push_back(gamma * v);
  auto batch = annealed_sample(bm, mode3_spec(BiasField(b), 2000, 8));

  auto agrees = [&](const SpinConfig& z) {
    for (int i = 0; i < 10; ++i)
      if (std::abs(m[i]) > 0.5 && z[i] * m[i] < 0)
        return false;
    return true;
  };
  int hits = 0;
  for (const auto& z : batch.configs)
    hits += agrees(z);
  EXPECT_GE(hits, 0.95 * 2000);

  // Same statement on the exact conditioned distribution.
  const auto p = exact_probabilities(bm, 5.0, BiasField(b));
  double mass = 0.0;
  for (std::uint64_t s = 0; s < p.size(); ++s)
    if (agrees(SpinConfig::from_index(s, 10)))
      mass += p[s];
  EXPECT_GE(mass, 0.95);
}

TEST(TvDistance, Examples)
{
  auto bm = random_machine(build_graph(GraphSpec::random_regular(8, 3, 4)), 1.0, 4);
  SamplerSpec spec;
  spec.num_samples = 200000;
  spec.seed = 10;
  EXPECT_LT(tv_distance(exact_sample(bm, spec), bm, 1.0), 0.02);

  // Point mass.
  SampleBatch point;
  const auto z = SpinConfig::from_index(37, 8);
  point.configs.assign(10, z);
  point.energies.assign(10, energy(bm, z));
  const auto p = exact_probabilities(bm, 1.0);
  EXPECT_NEAR(tv_distance(point, bm, 1.0), 1.0 - p[37], 1e-12);

  // Every configuration exactly once against the uniform machine.
  auto flat = BoltzmannMachine::zeros(build_graph(GraphSpec::complete(4)));
  SampleBatch all;
  for (std::uint64_t s = 0; s < 16; ++s)
  {
    all.configs.push_back(SpinConfig::from_index(s, 4));
    all.energies.push_back(0.0);
  }
  EXPECT_NEAR(tv_distance(all, flat, 1.0), 0.0, 1e-15);
  EXPECT_EQ(tv_distance(p, p), 0.0);

  EXPECT_THROW(tv_distance(all, BoltzmannMachine::zeros(IsingGraph(17, {})), 1.0), capacity_error);
}

TEST(EffectiveBetaFit, RecoversSamplingBeta)
{
  auto bm = k12_machine();
  SamplerSpec spec;
  spec.num_samples = 100000;
  spec.seed = 31;
  EXPECT_NEAR(effective_beta_fit(exact_sample(bm, spec), bm), 1.0, 0.05);
  spec.beta = 3.0;
  EXPECT_NEAR(effective_beta_fit(exact_sample(bm, spec), bm), 3.0, 0.15);
}

TEST(EffectiveBetaFit, GroundStatesAreOutOfRange)
{
  auto bm = k12_machine();
  SamplerSpec spec;
  spec.beta = 50.0;
  spec.num_samples = 100;
  auto batch = exact_sample(bm, spec);
  EXPECT_THROW(effective_beta_fit(batch, bm), out_of_range_error);
}

TEST(BiasSteering, LowersExpectedConditionedEnergy)
{
  auto bm = random_machine(build_graph(GraphSpec::complete(8)), 1.0, 13);
  engine rng = make_stream(13, 2);
  for (int trial = 0; trial < 10; ++trial)
  {
    std::vector<double> b(8);
    for (auto& v : b)
      v = uniform(rng, -1.0, 1.0);
    const BiasField bias(b);
    const auto p_plain = exact_probabilities(bm, 1.0);
    const auto p_bias = exact_probabilities(bm, 1.0, bias);
    double e_plain = 0.0, e_bias = 0.0;
    for (std::uint64_t s = 0; s < p_plain.size(); ++s)
    {
      const double e = conditioned_energy(bm, bias, SpinConfig::from_index(s, 8));
      e_plain += p_plain[s] * e;
      e_bias += p_bias[s] * e;
    }
    EXPECT_LT(e_bias, e_plain);
  }
}

TEST(SampleExport, RoundTrip)
{
  auto bm = k12_machine();
  auto batch = annealed_sample(bm, mode3_spec(BiasField(std::vector<double>(12, 0.25)), 5, 3));
  auto back = samples_from_json(nlohmann::json::parse(samples_to_json(batch).dump()));
  EXPECT_EQ(back.configs, batch.configs);
  EXPECT_EQ(back.energies, batch.energies);
  EXPECT_EQ(back.spec.schedule, batch.spec.schedule);
  EXPECT_EQ(back.spec.bias, batch.spec.bias);
}
