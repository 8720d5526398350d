#ifndef BMVAE_ISING_HPP_
#define BMVAE_ISING_HPP_

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bmvae/errors.hpp"
#include "bmvae/rng.hpp"
#include "bmvae/text.hpp"

namespace bmvae
{

struct Edge
{
  int i = 0;
  int j = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/*
 * Interaction graph of the prior. Edges are stored canonically (i < j) in the order
 * they were given; per-edge vectors (couplings, gradients, correlations) use that order.
 */
class IsingGraph
{
  public:
  struct Neighbor
  {
    int site;
    std::size_t edge;
  };

  IsingGraph() = default;

  IsingGraph(int num_spins, std::vector<Edge> edges)
  : num_spins_{num_spins}, edges_{std::move(edges)}
  {
    detail::require(num_spins_ > 0, "graph needs at least one spin");
    std::set<std::pair<int, int>> seen;
    for (auto& e : edges_)
    {
      if (e.i > e.j)
        std::swap(e.i, e.j);
      detail::require(e.i >= 0 && e.j < num_spins_, "edge index out of range");
      detail::require(e.i != e.j, "self-loop on spin " + std::to_string(e.i));
      detail::require(seen.emplace(e.i, e.j).second,
                      "duplicate edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) + ")");
    }
    adjacency_.assign(num_spins_, {});
    for (std::size_t k = 0; k < edges_.size(); ++k)
    {
      adjacency_[edges_[k].i].push_back({edges_[k].j, k});
      adjacency_[edges_[k].j].push_back({edges_[k].i, k});
    }
  }

  int num_spins() const { return num_spins_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Neighbor>& neighbors(int site) const { return adjacency_[site]; }

  friend bool operator==(const IsingGraph& a, const IsingGraph& b)
  {
    return a.num_spins_ == b.num_spins_ && a.edges_ == b.edges_;
  }

  private:
  int num_spins_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
};

// One latent configuration, entries exactly -1 or +1.
class SpinConfig
{
  public:
  SpinConfig() = default;

  explicit SpinConfig(std::vector<std::int8_t> spins)
  : spins_{std::move(spins)}
  {
    for (auto s : spins_)
      detail::require(s == 1 || s == -1, "spin values must be -1 or +1");
  }

  // Bit k of `index` set means spin k is +1.
  static SpinConfig from_index(std::uint64_t index, int num_spins)
  {
    std::vector<std::int8_t> spins(num_spins);
    for (int k = 0; k < num_spins; ++k)
      spins[k] = ((index >> k) & 1u) ? 1 : -1;
    return SpinConfig(std::move(spins));
  }

  std::uint64_t to_index() const
  {
    std::uint64_t index = 0;
    for (std::size_t k = 0; k < spins_.size(); ++k)
      if (spins_[k] > 0)
        index |= std::uint64_t{1} << k;
    return index;
  }

  SpinConfig flipped() const
  {
    auto spins = spins_;
    for (auto& s : spins)
      s = static_cast<std::int8_t>(-s);
    return SpinConfig(std::move(spins));
  }

  int size() const { return static_cast<int>(spins_.size()); }
  int operator[](int k) const { return spins_[k]; }
  std::span<const std::int8_t> spins() const { return spins_; }

  friend bool operator==(const SpinConfig&, const SpinConfig&) = default;

  private:
  std::vector<std::int8_t> spins_;
};

// External field b_i; enters the energy as -sum_i b_i z_i.
class BiasField
{
  public:
  BiasField() = default;

  explicit BiasField(std::vector<double> biases)
  : biases_{std::move(biases)}
  {
    for (double b : biases_)
      detail::require(std::isfinite(b), "bias field entries must be finite");
  }

  static BiasField zeros(int num_spins) { return BiasField(std::vector<double>(num_spins, 0.0)); }

  int size() const { return static_cast<int>(biases_.size()); }
  double operator[](int k) const { return biases_[k]; }
  const std::vector<double>& values() const { return biases_; }

  friend bool operator==(const BiasField&, const BiasField&) = default;

  private:
  std::vector<double> biases_;
};

class BoltzmannMachine
{
  public:
  BoltzmannMachine() = default;

  BoltzmannMachine(IsingGraph graph, std::vector<double> couplings)
  : graph_{std::move(graph)}, couplings_{std::move(couplings)}
  {
    detail::require(couplings_.size() == graph_.num_edges(), "coupling count must equal edge count");
    for (double c : couplings_)
      detail::require(std::isfinite(c), "couplings must be finite");
  }

  static BoltzmannMachine zeros(IsingGraph graph)
  {
    std::vector<double> couplings(graph.num_edges(), 0.0);
    return BoltzmannMachine(std::move(graph), std::move(couplings));
  }

  const IsingGraph& graph() const { return graph_; }
  int num_spins() const { return graph_.num_spins(); }
  const std::vector<double>& couplings() const { return couplings_; }

  BoltzmannMachine with_couplings(std::vector<double> couplings) const
  {
    return BoltzmannMachine(graph_, std::move(couplings));
  }

  // sum_j J_ij z_j over the neighbours of `site`.
  double coupling_field(int site, std::span<const std::int8_t> spins) const
  {
    double h = 0.0;
    for (const auto& n : graph_.neighbors(site))
      h += couplings_[n.edge] * spins[n.site];
    return h;
  }

  friend bool operator==(const BoltzmannMachine&, const BoltzmannMachine&) = default;

  private:
  IsingGraph graph_;
  std::vector<double> couplings_;
};

namespace detail
{

inline void check_dims(const BoltzmannMachine& bm, int size, const char* what)
{
  if (size != bm.num_spins())
    throw invalid_argument_error(std::string(what) + " has " + std::to_string(size) +
                                 " entries, machine has " + std::to_string(bm.num_spins()) + " spins");
}

inline void check_bias(const BoltzmannMachine& bm, const std::optional<BiasField>& bias)
{
  if (bias)
    check_dims(bm, bias->size(), "bias field");
}

} // namespace detail

// E(z) = -sum_{(i,j)} J_ij z_i z_j
inline double energy(const BoltzmannMachine& bm, const SpinConfig& z)
{
  detail::check_dims(bm, z.size(), "spin configuration");
  const auto& edges = bm.graph().edges();
  const auto& J = bm.couplings();
  double e = 0.0;
  for (std::size_t k = 0; k < edges.size(); ++k)
    e -= J[k] * z[edges[k].i] * z[edges[k].j];
  return e;
}

inline double conditioned_energy(const BoltzmannMachine& bm, const BiasField& bias, const SpinConfig& z)
{
  detail::check_dims(bm, bias.size(), "bias field");
  double e = energy(bm, z);
  for (int k = 0; k < z.size(); ++k)
    e -= bias[k] * z[k];
  return e;
}

inline double conditioned_energy(const BoltzmannMachine& bm, const std::optional<BiasField>& bias,
                                 const SpinConfig& z)
{
  return bias ? conditioned_energy(bm, *bias, z) : energy(bm, z);
}

// dE/dJ_ij = -z_i z_j, in edge order.
inline std::vector<double> energy_param_gradient(const BoltzmannMachine& bm, const SpinConfig& z)
{
  detail::check_dims(bm, z.size(), "spin configuration");
  std::vector<double> grad;
  grad.reserve(bm.graph().num_edges());
  for (const auto& e : bm.graph().edges())
    grad.push_back(-static_cast<double>(z[e.i] * z[e.j]));
  return grad;
}

// ---------------------------------------------------------------------------------------
// Graph construction

struct GraphSpec
{
  enum class Kind
  {
    complete,
    grid,
    random_regular
  };

  Kind kind = Kind::complete;
  int num_spins = 0;
  int rows = 0;
  int cols = 0;
  int degree = 0;
  std::uint64_t seed = 0;

  static GraphSpec complete(int k) { return {Kind::complete, k, 0, 0, 0, 0}; }
  static GraphSpec grid(int rows, int cols) { return {Kind::grid, rows * cols, rows, cols, 0, 0}; }
  static GraphSpec random_regular(int k, int degree, std::uint64_t seed)
  {
    return {Kind::random_regular, k, 0, 0, degree, seed};
  }
};

namespace detail
{

inline IsingGraph random_regular_graph(int k, int degree, std::uint64_t seed)
{
  require(k > 0, "random_regular: K must be positive");
  require(degree >= 0 && degree < k, "random_regular: degree must be in [0, K)");
  require((static_cast<long long>(k) * degree) % 2 == 0, "random_regular: K * degree must be even");

  // Pairing model with local rejection; restart when the remaining stubs cannot be
  // matched without a self-loop or a repeated edge.
  engine rng = make_stream(seed, 0);
  for (int attempt = 0; attempt < 10000; ++attempt)
  {
    std::vector<int> stubs;
    for (int v = 0; v < k; ++v)
      for (int d = 0; d < degree; ++d)
        stubs.push_back(v);
    std::set<std::pair<int, int>> chosen;
    bool stuck = false;
    while (!stubs.empty() && !stuck)
    {
      stuck = true;
      for (int tries = 0; tries < 100; ++tries)
      {
        auto a = static_cast<std::size_t>(uniform_index(rng, stubs.size()));
        auto b = static_cast<std::size_t>(uniform_index(rng, stubs.size()));
        int u = stubs[a], v = stubs[b];
        if (a == b || u == v || chosen.count({std::min(u, v), std::max(u, v)}))
          continue;
        chosen.emplace(std::min(u, v), std::max(u, v));
        if (a < b)
          std::swap(a, b);
        stubs.erase(stubs.begin() + static_cast<std::ptrdiff_t>(a));
        stubs.erase(stubs.begin() + static_cast<std::ptrdiff_t>(b));
        stuck = false;
        break;
      }
    }
    if (!stuck)
    {
      std::vector<Edge> edges;
      for (const auto& [u, v] : chosen)
        edges.push_back({u, v});
      return IsingGraph(k, std::move(edges));
    }
  }
  throw invalid_argument_error("random_regular: could not realise a simple regular graph");
}

} // namespace detail

inline IsingGraph build_graph(const GraphSpec& spec)
{
  switch (spec.kind)
  {
  case GraphSpec::Kind::complete:
  {
    detail::require(spec.num_spins > 0, "complete: K must be positive");
    std::vector<Edge> edges;
    for (int i = 0; i < spec.num_spins; ++i)
      for (int j = i + 1; j < spec.num_spins; ++j)
        edges.push_back({i, j});
    return IsingGraph(spec.num_spins, std::move(edges));
  }
  case GraphSpec::Kind::grid:
  {
    detail::require(spec.rows > 0 && spec.cols > 0, "grid: rows and cols must be positive");
    std::vector<Edge> edges;
    for (int r = 0; r < spec.rows; ++r)
      for (int c = 0; c < spec.cols; ++c)
      {
        const int v = r * spec.cols + c;
        if (c + 1 < spec.cols)
          edges.push_back({v, v + 1});
        if (r + 1 < spec.rows)
          edges.push_back({v, v + spec.cols});
      }
    return IsingGraph(spec.rows * spec.cols, std::move(edges));
  }
  case GraphSpec::Kind::random_regular:
    return detail::random_regular_graph(spec.num_spins, spec.degree, spec.seed);
  }
  throw invalid_argument_error("unknown graph kind");
}

// Couplings drawn uniformly from [-scale, scale].
inline BoltzmannMachine random_machine(IsingGraph graph, double scale, std::uint64_t seed)
{
  engine rng = make_stream(seed, 1);
  std::vector<double> couplings(graph.num_edges());
  for (auto& c : couplings)
    c = uniform(rng, -scale, scale);
  return BoltzmannMachine(std::move(graph), std::move(couplings));
}

// ---------------------------------------------------------------------------------------
// Exact enumeration (small K)

inline constexpr int max_enumeration_spins = 24;

namespace detail
{

inline void check_enumerable(int num_spins, int limit = max_enumeration_spins)
{
  if (num_spins > limit)
    throw capacity_error("exact enumeration supports K <= " + std::to_string(limit) + ", got K = " +
                         std::to_string(num_spins));
}

} // namespace detail

/*
 * Visits all 2^K configurations in Gray-code order, calling visit(index, energy, spins)
 * where `energy` is the conditioned energy (plain energy when no bias is given). The
 * energy is updated incrementally by single flips; the visit order is fixed, so any
 * reduction over it is reproducible.
 */
template<typename Visit>
void for_each_state(const BoltzmannMachine& bm, const std::optional<BiasField>& bias, Visit&& visit)
{
  const int k = bm.num_spins();
  detail::check_enumerable(k);
  detail::check_bias(bm, bias);

  std::vector<std::int8_t> z(k, -1);
  double e = conditioned_energy(bm, bias, SpinConfig(z));
  std::uint64_t index = 0;
  visit(index, e, std::span<const std::int8_t>(z));

  const std::uint64_t count = std::uint64_t{1} << k;
  for (std::uint64_t t = 1; t < count; ++t)
  {
    const int site = std::countr_zero(t);
    double h = bm.coupling_field(site, z);
    if (bias)
      h += (*bias)[site];
    e += 2.0 * z[site] * h;
    z[site] = static_cast<std::int8_t>(-z[site]);
    index ^= std::uint64_t{1} << site;
    visit(index, e, std::span<const std::int8_t>(z));
  }
}

struct EnergyRange
{
  double min;
  double max;
};

inline EnergyRange exact_energy_range(const BoltzmannMachine& bm, const std::optional<BiasField>& bias = std::nullopt)
{
  EnergyRange range{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for_each_state(bm, bias, [&](std::uint64_t, double e, auto) {
    range.min = std::min(range.min, e);
    range.max = std::max(range.max, e);
  });
  return range;
}

inline double exact_log_partition(const BoltzmannMachine& bm, double beta,
                                  const std::optional<BiasField>& bias = std::nullopt)
{
  detail::require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
  const double emin = exact_energy_range(bm, bias).min;
  double sum = 0.0;
  for_each_state(bm, bias, [&](std::uint64_t, double e, auto) { sum += std::exp(-beta * (e - emin)); });
  return -beta * emin + std::log(sum);
}

// Probability of every configuration, indexed as in SpinConfig::to_index.
inline std::vector<double> exact_probabilities(const BoltzmannMachine& bm, double beta,
                                               const std::optional<BiasField>& bias = std::nullopt)
{
  detail::require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
  const double emin = exact_energy_range(bm, bias).min;
  std::vector<double> p(std::size_t{1} << bm.num_spins());
  double sum = 0.0;
  for_each_state(bm, bias, [&](std::uint64_t index, double e, auto) {
    p[index] = std::exp(-beta * (e - emin));
    sum += p[index];
  });
  for (auto& v : p)
    v /= sum;
  return p;
}

struct Moments
{
  std::vector<double> means;        // <z_i>
  std::vector<double> correlations; // <z_i z_j>, edge order
  double mean_energy = 0.0;         // <E>, conditioned when a bias is given
};

inline Moments exact_moments(const BoltzmannMachine& bm, double beta,
                             const std::optional<BiasField>& bias = std::nullopt)
{
  detail::require(beta > 0.0 && std::isfinite(beta), "beta must be positive");
  const double emin = exact_energy_range(bm, bias).min;
  const auto& edges = bm.graph().edges();
  Moments m;
  m.means.assign(bm.num_spins(), 0.0);
  m.correlations.assign(edges.size(), 0.0);
  double sum = 0.0;
  for_each_state(bm, bias, [&](std::uint64_t, double e, std::span<const std::int8_t> z) {
    const double w = std::exp(-beta * (e - emin));
    sum += w;
    m.mean_energy += w * e;
    for (std::size_t i = 0; i < z.size(); ++i)
      m.means[i] += w * z[i];
    for (std::size_t k = 0; k < edges.size(); ++k)
      m.correlations[k] += w * z[edges[k].i] * z[edges[k].j];
  });
  for (auto& v : m.means)
    v /= sum;
  for (auto& v : m.correlations)
    v /= sum;
  m.mean_energy /= sum;
  if (!bias)
    std::fill(m.means.begin(), m.means.end(), 0.0); // z -> -z symmetry
  return m;
}

inline double exact_mean_energy(const BoltzmannMachine& bm, double beta,
                                const std::optional<BiasField>& bias = std::nullopt)
{
  detail::require(beta >= 0.0 && std::isfinite(beta), "beta must be nonnegative");
  double emin = exact_energy_range(bm, bias).min;
  double sum = 0.0, weighted = 0.0;
  for_each_state(bm, bias, [&](std::uint64_t, double e, auto) {
    const double w = std::exp(-beta * (e - emin));
    sum += w;
    weighted += w * e;
  });
  return weighted / sum;
}

// ---------------------------------------------------------------------------------------
// Serialization

inline nlohmann::json graph_to_json(const IsingGraph& graph)
{
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges())
    edges.push_back({e.i, e.j});
  return {{"num_spins", graph.num_spins()}, {"edges", std::move(edges)}};
}

inline IsingGraph graph_from_json(const nlohmann::json& doc)
{
  try
  {
    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges"))
    {
      if (!e.is_array() || e.size() != 2)
        throw format_error("edge entries must be [i, j] pairs");
      edges.push_back({e[0].get<int>(), e[1].get<int>()});
    }
    return IsingGraph(doc.at("num_spins").get<int>(), std::move(edges));
  }
  catch (const nlohmann::json::exception& ex)
  {
    throw format_error(std::string("malformed graph document: ") + ex.what());
  }
}

inline constexpr int machine_format_version = 1;

inline nlohmann::json machine_to_json(const BoltzmannMachine& bm)
{
  nlohmann::json doc = graph_to_json(bm.graph());
  nlohmann::json couplings = nlohmann::json::array();
  for (double c : bm.couplings())
    couplings.push_back(format_double(c));
  doc["couplings"] = std::move(couplings);
  doc["format"] = "bmvae.boltzmann_machine";
  doc["version"] = machine_format_version;
  return doc;
}

inline BoltzmannMachine machine_from_json(const nlohmann::json& doc)
{
  try
  {
    if (doc.at("format").get<std::string>() != "bmvae.boltzmann_machine")
      throw format_error("not a Boltzmann machine document");
    if (doc.at("version").get<int>() != machine_format_version)
      throw format_error("unsupported machine document version " + doc.at("version").dump());
    std::vector<double> couplings;
    for (const auto& c : doc.at("couplings"))
      couplings.push_back(parse_double(c.get<std::string>()));
    return BoltzmannMachine(graph_from_json(doc), std::move(couplings));
  }
  catch (const nlohmann::json::exception& ex)
  {
    throw format_error(std::string("malformed machine document: ") + ex.what());
  }
}

} // namespace bmvae

#endif
