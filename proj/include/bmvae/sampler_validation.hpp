#ifndef BMVAE_SAMPLER_VALIDATION_HPP_
#define BMVAE_SAMPLER_VALIDATION_HPP_

#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bmvae/ising.hpp"
#include "bmvae/sampler.hpp"

namespace bmvae
{

struct ValidationCheck
{
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ValidationReport
{
  std::vector<ValidationCheck> checks;

  bool passed() const
  {
    for (const auto& c : checks)
      if (!c.passed)
        return false;
    return true;
  }

  void print(std::ostream& out) const
  {
    for (const auto& c : checks)
      out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    out << (passed() ? "all sampler checks passed" : "sampler validation FAILED") << '\n';
  }
};

struct ValidationOptions
{
  std::uint64_t seed = 0;
  int gibbs_samples = 50000;
  int gibbs_chains = 10;
  int burn_in_sweeps = 500;
  int thinning_sweeps = 10;
  double moment_tolerance = 0.03;
  int tv_max_spins = 10; // TV check only where the histogram is small enough to be meaningful
  int tv_samples = 200000;
  double tv_tolerance = 0.05;
};

namespace detail
{

inline std::string fmt(double v)
{
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

inline std::vector<double> edge_correlations(const SampleBatch& batch, const BoltzmannMachine& bm)
{
  const auto& edges = bm.graph().edges();
  std::vector<double> c(edges.size(), 0.0);
  for (const auto& z : batch.configs)
    for (std::size_t e = 0; e < edges.size(); ++e)
      c[e] += z[edges[e].i] * z[edges[e].j];
  for (auto& v : c)
    v /= static_cast<double>(batch.size());
  return c;
}

} // namespace detail

/*
 * Invariant suite for the samplers on one machine at beta = 1, no bias:
 *   gibbs edge correlations and spin means vs enumeration, stored energies vs recomputation,
 *   sampled mean energy vs exact, a unit-schedule annealed run vs enumeration, and (small K)
 *   TV distance of the Gibbs histogram.
 */
inline ValidationReport validate_sampler(const BoltzmannMachine& bm, const ValidationOptions& opt = {})
{
  detail::check_enumerable(bm.num_spins());
  ValidationReport report;
  const auto exact = exact_moments(bm, 1.0);

  SamplerSpec spec = mode1_spec(opt.gibbs_samples, opt.seed, opt.burn_in_sweeps, opt.thinning_sweeps);
  spec.chains = opt.gibbs_chains;
  const auto gibbs = gibbs_sample(bm, spec);

  {
    const auto c = detail::edge_correlations(gibbs, bm);
    double worst = 0.0;
    for (std::size_t e = 0; e < c.size(); ++e)
      worst = std::max(worst, std::abs(c[e] - exact.correlations[e]));
    report.checks.push_back({"gibbs_edge_correlations", worst <= opt.moment_tolerance,
                             "max |sampled - exact| = " + detail::fmt(worst) + " over " + std::to_string(c.size()) +
                                 " edges (tolerance " + detail::fmt(opt.moment_tolerance) + ")"});
  }
  {
    double worst = 0.0;
    for (int i = 0; i < bm.num_spins(); ++i)
    {
      double m = 0.0;
      for (const auto& z : gibbs.configs)
        m += z[i];
      worst = std::max(worst, std::abs(m / static_cast<double>(gibbs.size()) - exact.means[i]));
    }
    report.checks.push_back({"gibbs_spin_means", worst <= opt.moment_tolerance,
                             "max |sampled - exact| = " + detail::fmt(worst) + " (tolerance " +
                                 detail::fmt(opt.moment_tolerance) + ")"});
  }
  {
    double worst = 0.0;
    for (std::size_t n = 0; n < gibbs.size(); ++n)
      worst = std::max(worst, std::abs(gibbs.energies[n] - energy(bm, gibbs.configs[n])));
    report.checks.push_back(
        {"stored_energies", worst <= 1e-12, "max |stored - recomputed| = " + detail::fmt(worst)});
  }
  {
    // chains are correlated in time; use per-chain means for the standard error
    const int per_chain = opt.gibbs_samples / opt.gibbs_chains;
    std::vector<double> chain_means;
    for (int c = 0; c < opt.gibbs_chains && per_chain > 0; ++c)
    {
      double s = 0.0;
      for (int n = 0; n < per_chain; ++n)
        s += gibbs.energies[static_cast<std::size_t>(c * per_chain + n)];
      chain_means.push_back(s / per_chain);
    }
    double mean = 0.0, var = 0.0;
    for (double m : chain_means)
      mean += m;
    mean /= static_cast<double>(chain_means.size());
    for (double m : chain_means)
      var += (m - mean) * (m - mean);
    const double se = std::sqrt(var / (chain_means.size() - 1) / chain_means.size());
    const double dev = std::abs(gibbs.mean_energy() - exact.mean_energy);
    report.checks.push_back({"gibbs_mean_energy", dev <= 4.0 * se + 1e-3,
                             "sampled " + detail::fmt(gibbs.mean_energy()) + " vs exact " +
                                 detail::fmt(exact.mean_energy) + " (4 SE = " + detail::fmt(4.0 * se) + ")"});
  }
  {
    SamplerSpec a = mode2_spec(opt.gibbs_samples / 5, opt.seed + 1);
    a.beta = 1.0;
    a.schedule = std::vector<double>{1.0};
    a.sweeps_per_step = 50;
    const auto batch = annealed_sample(bm, a);
    const auto c = detail::edge_correlations(batch, bm);
    double worst = 0.0;
    for (std::size_t e = 0; e < c.size(); ++e)
      worst = std::max(worst, std::abs(c[e] - exact.correlations[e]));
    const double tol = 2.0 * opt.moment_tolerance;
    report.checks.push_back({"annealed_unit_schedule", worst <= tol,
                             "max |sampled - exact| = " + detail::fmt(worst) + " over independent runs (tolerance " +
                                 detail::fmt(tol) + ")"});
  }
  if (bm.num_spins() <= opt.tv_max_spins)
  {
    SamplerSpec t = spec;
    t.num_samples = opt.tv_samples;
    t.seed = opt.seed + 2;
    const double tv = tv_distance(gibbs_sample(bm, t), bm, 1.0);
    report.checks.push_back({"gibbs_tv_distance", tv < opt.tv_tolerance,
                             "TV = " + detail::fmt(tv) + " at n = " + std::to_string(opt.tv_samples) +
                                 " (tolerance " + detail::fmt(opt.tv_tolerance) + ")"});
  }
  else
  {
    report.checks.push_back({"gibbs_tv_distance", true,
                             "skipped: K = " + std::to_string(bm.num_spins()) + " exceeds " +
                                 std::to_string(opt.tv_max_spins) + " spins for a histogram check"});
  }
  return report;
}

} // namespace bmvae

#endif
