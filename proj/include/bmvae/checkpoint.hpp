#ifndef BMVAE_CHECKPOINT_HPP_
#define BMVAE_CHECKPOINT_HPP_

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "bmvae/errors.hpp"
#include "bmvae/ising.hpp"
#include "bmvae/nn.hpp"
#include "bmvae/text.hpp"
#include "bmvae/training.hpp"

namespace bmvae
{

inline constexpr const char* checkpoint_format = "bmvae.checkpoint";
inline constexpr int checkpoint_version = 1;

/*
 * Document layout:
 *   {"format", "format_version", "checksum": fnv1a hex of payload.dump(), "payload": {...}}
 * All reals are shortest round-trip decimal strings, so a load restores identical bits.
 * `metadata` is free-form (the CLI keeps attribute profiles and the config hash there).
 */
struct Checkpoint
{
  ModelState state;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail
{

inline nlohmann::json reals_to_json(const std::vector<double>& values)
{
  nlohmann::json out = nlohmann::json::array();
  for (double v : values)
    out.push_back(format_double(v));
  return out;
}

inline std::vector<double> reals_from_json(const nlohmann::json& doc)
{
  std::vector<double> out;
  for (const auto& v : doc)
    out.push_back(parse_double(v.get<std::string>()));
  return out;
}

} // namespace detail

inline nlohmann::json model_to_json(const ModelState& s)
{
  nlohmann::json doc{{"kind", to_string(s.kind)},
                     {"image_shape", {{"width", s.image_shape.width},
                                      {"height", s.image_shape.height},
                                      {"channels", s.image_shape.channels}}},
                     {"step", s.step},
                     {"encoder", mlp_to_json(s.encoder)},
                     {"decoder", mlp_to_json(s.decoder)},
                     {"moments",
                      {{"encoder_m", gradients_to_json(s.moments.encoder_m)},
                       {"encoder_v", gradients_to_json(s.moments.encoder_v)},
                       {"decoder_m", gradients_to_json(s.moments.decoder_m)},
                       {"decoder_v", gradients_to_json(s.moments.decoder_v)},
                       {"prior_m", detail::reals_to_json(s.moments.prior_m)},
                       {"prior_v", detail::reals_to_json(s.moments.prior_v)}}}};
  doc["prior"] = s.prior ? machine_to_json(*s.prior) : nlohmann::json(nullptr);
  return doc;
}

inline ModelState model_from_json(const nlohmann::json& doc)
{
  ModelState s;
  s.kind = prior_kind_from_string(doc.at("kind").get<std::string>());
  const auto& shape = doc.at("image_shape");
  s.image_shape = {shape.at("width").get<int>(), shape.at("height").get<int>(), shape.at("channels").get<int>()};
  s.step = doc.at("step").get<std::int64_t>();
  s.encoder = mlp_from_json(doc.at("encoder"));
  s.decoder = mlp_from_json(doc.at("decoder"));
  const auto& m = doc.at("moments");
  s.moments.encoder_m = gradients_from_json(m.at("encoder_m"));
  s.moments.encoder_v = gradients_from_json(m.at("encoder_v"));
  s.moments.decoder_m = gradients_from_json(m.at("decoder_m"));
  s.moments.decoder_v = gradients_from_json(m.at("decoder_v"));
  s.moments.prior_m = detail::reals_from_json(m.at("prior_m"));
  s.moments.prior_v = detail::reals_from_json(m.at("prior_v"));
  if (!doc.at("prior").is_null())
    s.prior = machine_from_json(doc.at("prior"));

  // cross-checks a hand-edited file could break
  detail::require(s.image_shape.size() == s.encoder.input_size() && s.image_shape.size() == s.decoder.output_size(),
                  "image shape does not match the networks");
  const auto k = s.decoder.input_size();
  detail::require(s.encoder.output_size() == (s.kind == PriorKind::bm_vae ? k : 2 * k),
                  "encoder output does not match the latent size");
  detail::require(s.kind == PriorKind::g_vae || (s.prior && s.prior->num_spins() == k),
                  "prior does not match the latent size");
  detail::require(s.kind == PriorKind::bm_vae || !s.prior, "g_vae model carries a prior");
  const std::size_t edges = s.prior ? s.prior->graph().num_edges() : 0;
  detail::require(s.moments.prior_m.size() == edges && s.moments.prior_v.size() == edges,
                  "prior moments do not match the couplings");
  return s;
}

inline std::string checkpoint_to_string(const Checkpoint& ckpt)
{
  const nlohmann::json payload{{"model", model_to_json(ckpt.state)}, {"metadata", ckpt.metadata}};
  const nlohmann::json doc{{"format", checkpoint_format},
                           {"format_version", checkpoint_version},
                           {"checksum", to_hex(fnv1a(payload.dump()))},
                           {"payload", payload}};
  return doc.dump(1) + "\n";
}

inline Checkpoint checkpoint_from_string(const std::string& text)
{
  nlohmann::json doc;
  try
  {
    doc = nlohmann::json::parse(text);
  }
  catch (const nlohmann::json::exception& ex)
  {
    throw corrupt_checkpoint_error(std::string("checkpoint is not valid JSON: ") + ex.what());
  }
  try
  {
    if (doc.at("format").get<std::string>() != checkpoint_format)
      throw corrupt_checkpoint_error("not a checkpoint file (format '" + doc.at("format").get<std::string>() + "')");
    const int version = doc.at("format_version").get<int>();
    if (version > checkpoint_version)
      throw checkpoint_version_error("checkpoint format_version " + std::to_string(version) +
                                     " is newer than supported version " + std::to_string(checkpoint_version));
    if (version < 1)
      throw corrupt_checkpoint_error("invalid checkpoint format_version " + std::to_string(version));
    const auto& payload = doc.at("payload");
    const auto expected = doc.at("checksum").get<std::string>();
    const auto actual = to_hex(fnv1a(payload.dump()));
    if (expected != actual)
      throw corrupt_checkpoint_error("checkpoint checksum mismatch (stored " + expected + ", computed " + actual + ")");
    return {model_from_json(payload.at("model")), payload.at("metadata")};
  }
  catch (const nlohmann::json::exception& ex)
  {
    throw corrupt_checkpoint_error(std::string("malformed checkpoint: ") + ex.what());
  }
  catch (const corrupt_checkpoint_error&)
  {
    throw;
  }
  catch (const std::exception& ex)
  {
    throw corrupt_checkpoint_error(std::string("invalid checkpoint contents: ") + ex.what());
  }
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path)
{
  const auto text = checkpoint_to_string(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out)
    throw std::runtime_error("failed writing '" + path + "'");
}

inline void save_checkpoint(const ModelState& state, const std::string& path)
{
  save_checkpoint(Checkpoint{state, nlohmann::json::object()}, path);
}

inline Checkpoint load_checkpoint(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_string(buffer.str());
}

} // namespace bmvae

#endif
