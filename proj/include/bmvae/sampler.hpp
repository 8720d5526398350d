#ifndef BMVAE_SAMPLER_HPP_
#define BMVAE_SAMPLER_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bmvae/errors.hpp"
#include "bmvae/ising.hpp"
#include "bmvae/math.hpp"
#include "bmvae/rng.hpp"
#include "bmvae/text.hpp"

namespace bmvae
{

/*
 * Sampling target: p(z) proportional to exp(-beta * (E(z) - sum_i b_i z_i)).
 *
 *   Mode 1 (training negatives):   gibbs_sample, beta = 1, no bias
 *   Mode 2 (generation):           annealed_sample, schedule ending at beta > 1
 *   Mode 3 (conditional):          annealed_sample with a bias field
 *
 * Gibbs chains: chain c draws from stream (seed, c), burns in, then records one
 * configuration every `thinning_sweeps` sweeps. Samples are split across chains as evenly
 * as possible and returned in chain order. Annealed samples are independent runs, run s
 * uses stream (seed, s) and starts from a uniformly random configuration.
 */
struct SamplerSpec
{
  double beta = 1.0;
  std::optional<BiasField> bias;
  int num_samples = 1;
  int chains = 1;
  int burn_in_sweeps = 0;
  int thinning_sweeps = 1;
  std::optional<std::vector<double>> schedule;
  int sweeps_per_step = 10;
  std::uint64_t seed = 0;

  void validate() const
  {
    detail::require(beta > 0.0 && std::isfinite(beta), "sampler beta must be positive and finite");
    detail::require(num_samples > 0, "num_samples must be positive");
    detail::require(chains > 0, "chains must be positive");
    detail::require(burn_in_sweeps >= 0, "burn_in_sweeps must be nonnegative");
    detail::require(thinning_sweeps > 0, "thinning_sweeps must be positive");
    detail::require(sweeps_per_step > 0, "sweeps_per_step must be positive");
    if (schedule)
    {
      detail::require(!schedule->empty(), "annealing schedule is empty");
      for (std::size_t k = 0; k < schedule->size(); ++k)
      {
        detail::require((*schedule)[k] > 0.0 && std::isfinite((*schedule)[k]), "schedule entries must be positive");
        if (k > 0)
          detail::require((*schedule)[k] > (*schedule)[k - 1], "schedule must be strictly increasing");
      }
      detail::require(schedule->back() == beta, "schedule must end at beta");
    }
  }
};

struct SampleBatch
{
  std::vector<SpinConfig> configs;
  std::vector<double> energies; // conditioned energy of each config under spec.bias
  SamplerSpec spec;

  std::size_t size() const { return configs.size(); }

  double mean_energy() const
  {
    double sum = 0.0;
    for (double e : energies)
      sum += e;
    return sum / static_cast<double>(energies.size());
  }
};

inline std::vector<double> geometric_schedule(double beta_start, double beta_end, int steps)
{
  detail::require(steps >= 1, "schedule needs at least one step");
  detail::require(beta_start > 0.0 && beta_end > beta_start, "schedule needs 0 < beta_start < beta_end");
  if (steps == 1)
    return {beta_end};
  std::vector<double> betas(steps);
  for (int k = 0; k < steps; ++k)
    betas[k] = beta_start * std::pow(beta_end / beta_start, static_cast<double>(k) / (steps - 1));
  betas.back() = beta_end;
  return betas;
}

// Mode 1 defaults: beta = 1, one chain per requested sample.
inline SamplerSpec mode1_spec(int num_samples, std::uint64_t seed, int burn_in_sweeps = 200, int thinning_sweeps = 5)
{
  SamplerSpec spec;
  spec.beta = 1.0;
  spec.num_samples = num_samples;
  spec.chains = num_samples;
  spec.burn_in_sweeps = burn_in_sweeps;
  spec.thinning_sweeps = thinning_sweeps;
  spec.seed = seed;
  return spec;
}

// Mode 2 defaults: 20 geometric steps 0.2 -> 5, 10 sweeps per step.
inline SamplerSpec mode2_spec(int num_samples, std::uint64_t seed, double beta_start = 0.2, double beta_end = 5.0,
                              int steps = 20, int sweeps_per_step = 10)
{
  SamplerSpec spec;
  spec.beta = beta_end;
  spec.num_samples = num_samples;
  spec.schedule = geometric_schedule(beta_start, beta_end, steps);
  spec.sweeps_per_step = sweeps_per_step;
  spec.seed = seed;
  return spec;
}

inline SamplerSpec mode3_spec(BiasField bias, int num_samples, std::uint64_t seed, double beta_start = 0.2,
                              double beta_end = 5.0, int steps = 20, int sweeps_per_step = 10)
{
  SamplerSpec spec = mode2_spec(num_samples, seed, beta_start, beta_end, steps, sweeps_per_step);
  spec.bias = std::move(bias);
  return spec;
}

namespace diagnostics
{
// Count of sampler entry-point calls; lets tests assert a code path never samples the prior.
inline std::atomic<std::uint64_t> sampler_invocations{0};
} // namespace diagnostics

// Heat-bath probability of setting a spin to +1 given its local field sum_j J_ij z_j + b_i.
inline double heat_bath_up_probability(double beta, double local_field)
{
  return logistic(2.0 * beta * local_field);
}

namespace detail
{

inline void heat_bath_sweep(const BoltzmannMachine& bm, const std::optional<BiasField>& bias, double beta,
                            std::vector<std::int8_t>& z, engine& rng)
{
  const int k = bm.num_spins();
  for (int i = 0; i < k; ++i)
  {
    double h = bm.coupling_field(i, z);
    if (bias)
      h += (*bias)[i];
    z[i] = uniform01(rng) < heat_bath_up_probability(beta, h) ? 1 : -1;
  }
}

inline std::vector<std::int8_t> random_spins(int k, engine& rng)
{
  std::vector<std::int8_t> z(k);
  for (auto& s : z)
    s = uniform01(rng) < 0.5 ? 1 : -1;
  return z;
}

inline void append(SampleBatch& batch, const BoltzmannMachine& bm, std::vector<std::int8_t> z)
{
  SpinConfig config(std::move(z));
  batch.energies.push_back(conditioned_energy(bm, batch.spec.bias, config));
  batch.configs.push_back(std::move(config));
}

} // namespace detail

// I.i.d. samples through the enumerated CDF (K <= 24).
inline SampleBatch exact_sample(const BoltzmannMachine& bm, const SamplerSpec& spec)
{
  ++diagnostics::sampler_invocations;
  spec.validate();
  detail::check_bias(bm, spec.bias);
  detail::check_enumerable(bm.num_spins());

  const auto p = exact_probabilities(bm, spec.beta, spec.bias);
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s)
  {
    acc += p[s];
    cdf[s] = acc;
  }

  SampleBatch batch;
  batch.spec = spec;
  engine rng = make_stream(spec.seed, 0);
  for (int n = 0; n < spec.num_samples; ++n)
  {
    const double u = uniform01(rng) * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end())
      --it;
    const auto index = static_cast<std::uint64_t>(it - cdf.begin());
    const auto config = SpinConfig::from_index(index, bm.num_spins());
    batch.energies.push_back(conditioned_energy(bm, spec.bias, config));
    batch.configs.push_back(config);
  }
  return batch;
}

inline SampleBatch gibbs_sample(const BoltzmannMachine& bm, const SamplerSpec& spec)
{
  ++diagnostics::sampler_invocations;
  spec.validate();
  detail::check_bias(bm, spec.bias);
  detail::require(!spec.schedule, "gibbs_sample takes no schedule; use annealed_sample");

  SampleBatch batch;
  batch.spec = spec;
  batch.configs.reserve(spec.num_samples);
  batch.energies.reserve(spec.num_samples);
  const int per_chain = spec.num_samples / spec.chains;
  const int extra = spec.num_samples % spec.chains;
  for (int c = 0; c < spec.chains; ++c)
  {
    const int count = per_chain + (c < extra ? 1 : 0);
    if (count == 0)
      continue;
    engine rng = make_stream(spec.seed, static_cast<std::uint64_t>(c));
    auto z = detail::random_spins(bm.num_spins(), rng);
    for (int s = 0; s < spec.burn_in_sweeps; ++s)
      detail::heat_bath_sweep(bm, spec.bias, spec.beta, z, rng);
    for (int n = 0; n < count; ++n)
    {
      for (int s = 0; s < spec.thinning_sweeps; ++s)
        detail::heat_bath_sweep(bm, spec.bias, spec.beta, z, rng);
      detail::append(batch, bm, z);
    }
  }
  return batch;
}

inline SampleBatch annealed_sample(const BoltzmannMachine& bm, const SamplerSpec& spec)
{
  ++diagnostics::sampler_invocations;
  if (spec.schedule && spec.schedule->empty())
    throw invalid_argument_error("annealing schedule is empty");
  detail::require(spec.schedule.has_value(), "annealed_sample needs a schedule");
  spec.validate();
  detail::check_bias(bm, spec.bias);

  SampleBatch batch;
  batch.spec = spec;
  batch.configs.reserve(spec.num_samples);
  batch.energies.reserve(spec.num_samples);
  for (int n = 0; n < spec.num_samples; ++n)
  {
    engine rng = make_stream(spec.seed, static_cast<std::uint64_t>(n));
    auto z = detail::random_spins(bm.num_spins(), rng);
    for (double beta : *spec.schedule)
      for (int s = 0; s < spec.sweeps_per_step; ++s)
        detail::heat_bath_sweep(bm, spec.bias, beta, z, rng);
    detail::append(batch, bm, std::move(z));
  }
  return batch;
}

inline constexpr int max_histogram_spins = 16;

// Empirical distribution of the batch, indexed as in SpinConfig::to_index.
inline std::vector<double> empirical_distribution(const SampleBatch& batch, int num_spins)
{
  detail::check_enumerable(num_spins, max_histogram_spins);
  std::vector<double> freq(std::size_t{1} << num_spins, 0.0);
  for (const auto& c : batch.configs)
    freq[c.to_index()] += 1.0;
  for (auto& f : freq)
    f /= static_cast<double>(batch.size());
  return freq;
}

inline double tv_distance(const std::vector<double>& p, const std::vector<double>& q)
{
  detail::require(p.size() == q.size(), "distributions differ in support size");
  double sum = 0.0;
  for (std::size_t s = 0; s < p.size(); ++s)
    sum += std::abs(p[s] - q[s]);
  return 0.5 * sum;
}

// Total variation between the batch histogram and the exact distribution at `beta`
// (with the batch's bias field, if any).
inline double tv_distance(const SampleBatch& batch, const BoltzmannMachine& bm, double beta)
{
  detail::check_enumerable(bm.num_spins(), max_histogram_spins);
  detail::require(batch.size() > 0, "empty sample batch");
  return tv_distance(empirical_distribution(batch, bm.num_spins()), exact_probabilities(bm, beta, batch.spec.bias));
}

/*
 * Inverse temperature whose exact mean energy matches the batch mean energy. <E>_beta is
 * nonincreasing in beta, so the root is bracketed by doubling and then bisected.
 */
inline double effective_beta_fit(const SampleBatch& batch, const BoltzmannMachine& bm)
{
  detail::require(batch.size() > 0, "empty sample batch");
  detail::check_enumerable(bm.num_spins());
  const double target = batch.mean_energy();
  const double emin = exact_energy_range(bm, batch.spec.bias).min;
  const double e_hot = exact_mean_energy(bm, 0.0, batch.spec.bias);
  if (!(target > emin + 1e-12) || !(target < e_hot))
    throw out_of_range_error("mean energy " + format_double(target) + " outside attainable range (" +
                             format_double(emin) + ", " + format_double(e_hot) + ")");

  auto mean_at = [&](double beta) { return exact_mean_energy(bm, beta, batch.spec.bias); };
  double lo = 0.0, hi = 1.0;
  while (mean_at(hi) > target)
  {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12)
      throw out_of_range_error("effective beta diverges");
  }
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter)
  {
    mid = 0.5 * (lo + hi);
    const double e = mean_at(mid);
    if (std::abs(e - target) < 1e-6)
      break;
    if (e > target)
      lo = mid;
    else
      hi = mid;
  }
  return mid;
}

// ---------------------------------------------------------------------------------------
// Export

inline nlohmann::json sampler_spec_to_json(const SamplerSpec& spec)
{
  nlohmann::json doc = {
      {"beta", format_double(spec.beta)},
      {"num_samples", spec.num_samples},
      {"chains", spec.chains},
      {"burn_in_sweeps", spec.burn_in_sweeps},
      {"thinning_sweeps", spec.thinning_sweeps},
      {"sweeps_per_step", spec.sweeps_per_step},
      {"seed", spec.seed},
  };
  if (spec.bias)
  {
    nlohmann::json b = nlohmann::json::array();
    for (double v : spec.bias->values())
      b.push_back(format_double(v));
    doc["bias"] = std::move(b);
  }
  if (spec.schedule)
  {
    nlohmann::json s = nlohmann::json::array();
    for (double v : *spec.schedule)
      s.push_back(format_double(v));
    doc["schedule"] = std::move(s);
  }
  return doc;
}

inline SamplerSpec sampler_spec_from_json(const nlohmann::json& doc)
{
  auto reals = [](const nlohmann::json& arr) {
    std::vector<double> out;
    for (const auto& v : arr)
      out.push_back(parse_double(v.get<std::string>()));
    return out;
  };
  try
  {
    SamplerSpec spec;
    spec.beta = parse_double(doc.at("beta").get<std::string>());
    spec.num_samples = doc.at("num_samples").get<int>();
    spec.chains = doc.at("chains").get<int>();
    spec.burn_in_sweeps = doc.at("burn_in_sweeps").get<int>();
    spec.thinning_sweeps = doc.at("thinning_sweeps").get<int>();
    spec.sweeps_per_step = doc.at("sweeps_per_step").get<int>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("bias"))
      spec.bias = BiasField(reals(doc["bias"]));
    if (doc.contains("schedule"))
      spec.schedule = reals(doc["schedule"]);
    spec.validate();
    return spec;
  }
  catch (const nlohmann::json::exception& ex)
  {
    throw format_error(std::string("malformed sampler spec: ") + ex.what());
  }
}

// Configs are written as rows of +1 / -1 integers.
inline nlohmann::json samples_to_json(const SampleBatch& batch)
{
  nlohmann::json configs = nlohmann::json::array();
  nlohmann::json energies = nlohmann::json::array();
  for (std::size_t n = 0; n < batch.size(); ++n)
  {
    nlohmann::json row = nlohmann::json::array();
    for (auto s : batch.configs[n].spins())
      row.push_back(static_cast<int>(s));
    configs.push_back(std::move(row));
    energies.push_back(format_double(batch.energies[n]));
  }
  return {{"format", "bmvae.samples"},
          {"version", 1},
          {"spec", sampler_spec_to_json(batch.spec)},
          {"configs", std::move(configs)},
          {"energies", std::move(energies)}};
}

inline SampleBatch samples_from_json(const nlohmann::json& doc)
{
  try
  {
    if (doc.at("format").get<std::string>() != "bmvae.samples" || doc.at("version").get<int>() != 1)
      throw format_error("not a version-1 sample document");
    SampleBatch batch;
    batch.spec = sampler_spec_from_json(doc.at("spec"));
    for (const auto& row : doc.at("configs"))
    {
      std::vector<std::int8_t> z;
      for (const auto& v : row)
        z.push_back(static_cast<std::int8_t>(v.get<int>()));
      batch.configs.emplace_back(std::move(z));
    }
    for (const auto& e : doc.at("energies"))
      batch.energies.push_back(parse_double(e.get<std::string>()));
    if (batch.configs.size() != batch.energies.size())
      throw format_error("config and energy counts differ");
    return batch;
  }
  catch (const nlohmann::json::exception& ex)
  {
    throw format_error(std::string("malformed sample document: ") + ex.what());
  }
}

} // namespace bmvae

#endif
