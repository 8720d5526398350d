#ifndef BMVAE_GENERATION_HPP_
#define BMVAE_GENERATION_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bmvae/dataset.hpp"
#include "bmvae/errors.hpp"
#include "bmvae/ising.hpp"
#include "bmvae/nn.hpp"
#include "bmvae/sampler.hpp"
#include "bmvae/text.hpp"
#include "bmvae/training.hpp"

namespace bmvae
{

/*
 * Encoder statistics over the images carrying one attribute. mean_spin (posterior means,
 * in [-1, 1]) drives conditional generation; mean_logits (raw mu) drives manipulation.
 */
struct AttributeProfile
{
  std::string name;
  Vector mean_spin;
  Vector mean_logits;
  int support_count = 0;

  void validate() const
  {
    detail::require(support_count >= 1, "attribute profile has no support");
    detail::require(mean_spin.size() == mean_logits.size(), "attribute profile vectors differ in length");
    detail::require(mean_spin.size() == 0 || mean_spin.cwiseAbs().maxCoeff() <= 1.0, "mean spin outside [-1, 1]");
  }
};

struct GenerationRequest
{
  int count = 1;
  SamplerSpec sampler = mode2_spec(1, 0); // schedule and seed; num_samples is overwritten by count
  double gamma = 0.0;
  std::vector<std::string> attributes; // empty: unconditional
  std::optional<Vector> source_image;  // manipulation only
  double logit_scale = 1.0;            // manipulation: bias = mu(x) + logit_scale * mean_logits

  void validate() const
  {
    detail::require(count >= 1, "generation count must be positive");
    detail::require(gamma >= 0.0 && std::isfinite(gamma), "gamma must be finite and nonnegative");
    detail::require(std::isfinite(logit_scale), "logit scale must be finite");
    detail::require(sampler.schedule.has_value() && !sampler.schedule->empty(),
                    "generation needs an annealing schedule");
  }
};

struct GeneratedSample
{
  SpinConfig z;
  double energy = 0.0;             // prior energy E(z)
  double conditioned_energy = 0.0; // E(z) - sum b_i z_i (equals energy without bias)
  std::uint64_t seed = 0;          // stream seed of this sample
  Vector image;                    // decoder Bernoulli means, not thresholded
};

namespace detail
{

inline const BoltzmannMachine& require_prior(const ModelState& state)
{
  require(state.kind == PriorKind::bm_vae && state.prior.has_value(),
          "generation needs a model with a Boltzmann-machine prior");
  return *state.prior;
}

} // namespace detail

inline Vector decode(const ModelState& state, const Vector& z)
{
  return mlp_forward(state.decoder, z).output.col(0);
}

inline Vector encode_logits(const ModelState& state, const Vector& image)
{
  detail::require(image.size() == state.encoder.input_size(), "image size does not match encoder input");
  return mlp_forward(state.encoder, image).output.col(0);
}

// decode(sign(mu)), sign(0) = +1
inline Vector direct_decode(const ModelState& state, const Vector& mu)
{
  return decode(state, to_vector(sign_config(mu)));
}

inline AttributeProfile attribute_mean_logits(const Dataset& dataset, const std::string& attribute,
                                              const ModelState& state)
{
  detail::require_prior(state);
  const auto it = dataset.attributes.find(attribute);
  detail::require(it != dataset.attributes.end(), "dataset has no attribute '" + attribute + "'");
  std::vector<std::size_t> members;
  for (std::size_t n = 0; n < it->second.size(); ++n)
    if (it->second[n])
      members.push_back(n);
  detail::require(!members.empty(), "no example carries attribute '" + attribute + "'");

  const Matrix mu = mlp_forward(state.encoder, dataset.batch(members, 0, members.size())).output;
  AttributeProfile p;
  p.name = attribute;
  p.support_count = static_cast<int>(members.size());
  p.mean_logits = mu.rowwise().mean();
  p.mean_spin = Vector::Zero(mu.rows());
  for (Eigen::Index b = 0; b < mu.cols(); ++b)
    p.mean_spin += posterior_mean(mu.col(b));
  p.mean_spin /= static_cast<double>(mu.cols());
  return p;
}

// b = gamma * sum_a m^(+)_a
inline BiasField conditional_bias(const std::vector<AttributeProfile>& profiles, double gamma)
{
  detail::require(gamma >= 0.0 && std::isfinite(gamma), "gamma must be finite and nonnegative");
  detail::require(!profiles.empty(), "conditional bias needs at least one profile");
  Vector b = Vector::Zero(profiles.front().mean_spin.size());
  for (const auto& p : profiles)
  {
    detail::require(p.mean_spin.size() == b.size(), "attribute profiles differ in latent size");
    b += gamma * p.mean_spin;
  }
  return BiasField(std::vector<double>(b.data(), b.data() + b.size()));
}

inline BiasField conditional_bias(const AttributeProfile& profile, double gamma)
{
  return conditional_bias(std::vector<AttributeProfile>{profile}, gamma);
}

inline const AttributeProfile& find_profile(const std::vector<AttributeProfile>& profiles, const std::string& name)
{
  for (const auto& p : profiles)
    if (p.name == name)
      return p;
  throw invalid_argument_error("unknown attribute profile '" + name + "'");
}

namespace detail
{

inline std::vector<GeneratedSample> sample_and_decode(const ModelState& state, SamplerSpec spec, int count,
                                                      std::optional<BiasField> bias)
{
  const auto& prior = require_prior(state);
  spec.num_samples = count;
  spec.bias = std::move(bias);
  const auto batch = annealed_sample(prior, spec);

  std::vector<GeneratedSample> out;
  out.reserve(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n)
  {
    GeneratedSample s{batch.configs[n], energy(prior, batch.configs[n]), batch.energies[n],
                      derive_seed(spec.seed, n), {}};
    s.image = decode(state, to_vector(s.z));
    out.push_back(std::move(s));
  }
  return out;
}

} // namespace detail

// Mode 2 (no attributes) or Mode 3 (bias gamma * sum m^(+) over the named profiles).
inline std::vector<GeneratedSample> generate(const ModelState& state, const GenerationRequest& request,
                                             const std::vector<AttributeProfile>& profiles = {})
{
  request.validate();
  std::optional<BiasField> bias;
  if (!request.attributes.empty())
  {
    std::vector<AttributeProfile> chosen;
    for (const auto& name : request.attributes)
      chosen.push_back(find_profile(profiles, name));
    bias = conditional_bias(chosen, request.gamma);
  }
  return detail::sample_and_decode(state, request.sampler, request.count, std::move(bias));
}

// Bias field mu(source) + scale * mean_logits; gamma plays no role here.
inline BiasField manipulation_bias(const ModelState& state, const Vector& source_image, const AttributeProfile& profile,
                                   double logit_scale = 1.0)
{
  const Vector mu = encode_logits(state, source_image);
  detail::require(profile.mean_logits.size() == mu.size(), "profile does not match latent size");
  const Vector h = mu + logit_scale * profile.mean_logits;
  return BiasField(std::vector<double>(h.data(), h.data() + h.size()));
}

inline nlohmann::json profile_to_json(const AttributeProfile& p)
{
  nlohmann::json spin = nlohmann::json::array(), logits = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.mean_spin.size(); ++i)
  {
    spin.push_back(format_double(p.mean_spin[i]));
    logits.push_back(format_double(p.mean_logits[i]));
  }
  return {{"name", p.name}, {"support_count", p.support_count}, {"mean_spin", spin}, {"mean_logits", logits}};
}

inline AttributeProfile profile_from_json(const nlohmann::json& doc)
{
  AttributeProfile p;
  p.name = doc.at("name").get<std::string>();
  p.support_count = doc.at("support_count").get<int>();
  const auto& spin = doc.at("mean_spin");
  const auto& logits = doc.at("mean_logits");
  if (spin.size() != logits.size())
    throw format_error("attribute profile '" + p.name + "' has mismatched vectors");
  p.mean_spin.resize(static_cast<Eigen::Index>(spin.size()));
  p.mean_logits.resize(static_cast<Eigen::Index>(spin.size()));
  for (std::size_t i = 0; i < spin.size(); ++i)
  {
    p.mean_spin[static_cast<Eigen::Index>(i)] = parse_double(spin[i].get<std::string>());
    p.mean_logits[static_cast<Eigen::Index>(i)] = parse_double(logits[i].get<std::string>());
  }
  p.validate();
  return p;
}

inline std::vector<GeneratedSample> manipulate(const ModelState& state, const Vector& source_image,
                                               const AttributeProfile& profile, const GenerationRequest& request)
{
  request.validate();
  return detail::sample_and_decode(state, request.sampler, request.count,
                                   manipulation_bias(state, source_image, profile, request.logit_scale));
}

} // namespace bmvae

#endif
