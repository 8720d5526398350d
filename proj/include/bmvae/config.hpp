#ifndef BMVAE_CONFIG_HPP_
#define BMVAE_CONFIG_HPP_

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bmvae/dataset.hpp"
#include "bmvae/errors.hpp"
#include "bmvae/generation.hpp"
#include "bmvae/ising.hpp"
#include "bmvae/sampler.hpp"
#include "bmvae/text.hpp"
#include "bmvae/training.hpp"

namespace bmvae
{

// Published run-configuration schema (JSON Schema subset). Unknown keys are rejected at
// every level; omitted keys take the defaults listed here.
inline constexpr const char* run_config_schema_text = R"json(
{
  "type": "object",
  "additionalProperties": false,
  "properties": {
    "seed": {"type": "integer", "minimum": 0, "default": 0},
    "output_dir": {"type": "string", "default": "run"},
    "dataset": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "source": {"type": "string", "enum": ["synth", "idx"], "default": "synth"},
        "synth": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "size": {"type": "integer", "minimum": 1, "default": 2000},
            "side": {"type": "integer", "minimum": 8, "default": 16},
            "attribute_probability": {"type": "number", "minimum": 0, "maximum": 1, "default": 0.5}
          }
        },
        "idx": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "images": {"type": "string", "default": ""},
            "labels": {"type": "string", "default": ""}
          }
        }
      }
    },
    "model": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "kind": {"type": "string", "enum": ["bm_vae", "g_vae"], "default": "bm_vae"},
        "hidden_layers": {"type": "array", "items": {"type": "integer", "minimum": 1}, "default": [128]},
        "graph": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "kind": {"type": "string", "enum": ["complete", "grid", "random_regular"], "default": "complete"},
            "num_spins": {"type": "integer", "minimum": 1, "default": 16},
            "rows": {"type": "integer", "minimum": 1, "default": 4},
            "cols": {"type": "integer", "minimum": 1, "default": 4},
            "degree": {"type": "integer", "minimum": 0, "default": 3},
            "seed": {"type": "integer", "minimum": 0, "default": 0}
          }
        }
      }
    },
    "training": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "lambda": {"type": "number", "minimum": 0, "default": 0.01},
        "learning_rate": {"type": "number", "minimum": 0, "default": 0.001},
        "prior_learning_rate": {"type": "number", "minimum": 0, "default": 0.01},
        "adam_beta1": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.9},
        "adam_beta2": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1, "default": 0.999},
        "batch_size": {"type": "integer", "minimum": 1, "default": 32},
        "epochs": {"type": "integer", "minimum": 0, "default": 30},
        "negative_samples_per_step": {"type": "integer", "minimum": 1, "default": 64},
        "coupling_init_scale": {"type": "number", "minimum": 0, "default": 0.01},
        "coupling_clip": {"type": "number", "exclusiveMinimum": 0, "default": 2.0},
        "exact_kl": {"type": "boolean", "default": true},
        "record_timing": {"type": "boolean", "default": false}
      }
    },
    "sampling": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "mode1": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "burn_in_sweeps": {"type": "integer", "minimum": 0, "default": 200},
            "thinning_sweeps": {"type": "integer", "minimum": 1, "default": 5}
          }
        },
        "mode2": {"$ref": "#/definitions/annealing"},
        "mode3": {"$ref": "#/definitions/annealing"}
      }
    },
    "generation": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "count": {"type": "integer", "minimum": 1, "default": 64},
        "gamma": {"type": "number", "minimum": 0, "default": 2.0},
        "attributes": {"type": "array", "items": {"type": "string"}, "default": ["top_bar"]},
        "logit_scale": {"type": "number", "default": 1.0},
        "source_index": {"type": "integer", "minimum": 0, "default": 0}
      }
    }
  },
  "definitions": {
    "annealing": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "beta_start": {"type": "number", "exclusiveMinimum": 0, "default": 0.2},
        "beta_end": {"type": "number", "exclusiveMinimum": 0, "default": 5.0},
        "steps": {"type": "integer", "minimum": 1, "default": 20},
        "sweeps_per_step": {"type": "integer", "minimum": 1, "default": 10}
      }
    }
  }
}
)json";

inline const nlohmann::json& run_config_schema()
{
  static const nlohmann::json schema = nlohmann::json::parse(run_config_schema_text);
  return schema;
}

namespace detail
{

inline bool schema_type_matches(const std::string& type, const nlohmann::json& v)
{
  if (type == "object")
    return v.is_object();
  if (type == "array")
    return v.is_array();
  if (type == "string")
    return v.is_string();
  if (type == "boolean")
    return v.is_boolean();
  if (type == "integer")
    return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
  if (type == "number")
    return v.is_number();
  return false;
}

inline const nlohmann::json& resolve_ref(const nlohmann::json& schema, const nlohmann::json& root)
{
  if (!schema.contains("$ref"))
    return schema;
  const auto ref = schema.at("$ref").get<std::string>();
  const std::string prefix = "#/definitions/";
  require(ref.rfind(prefix, 0) == 0, "unsupported schema reference " + ref);
  return root.at("definitions").at(ref.substr(prefix.size()));
}

// Validates `v` in place, inserting defaults for omitted properties.
inline void validate_node(nlohmann::json& v, const nlohmann::json& raw_schema, const nlohmann::json& root,
                          const std::string& where)
{
  const auto& schema = resolve_ref(raw_schema, root);
  auto fail = [&](const std::string& what) { throw invalid_argument_error("config " + where + ": " + what); };

  if (schema.contains("type") && !schema_type_matches(schema["type"].get<std::string>(), v))
    fail("expected " + schema["type"].get<std::string>() + ", got " + v.type_name());
  if (schema.contains("enum"))
  {
    bool found = false;
    for (const auto& option : schema["enum"])
      found = found || option == v;
    if (!found)
      fail("value " + v.dump() + " is not one of " + schema["enum"].dump());
  }
  if (v.is_number())
  {
    const double x = v.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      fail("value " + v.dump() + " is below the minimum " + schema["minimum"].dump());
    if (schema.contains("maximum") && x > schema["maximum"].get<double>())
      fail("value " + v.dump() + " is above the maximum " + schema["maximum"].dump());
    if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>())
      fail("value " + v.dump() + " must exceed " + schema["exclusiveMinimum"].dump());
    if (schema.contains("exclusiveMaximum") && x >= schema["exclusiveMaximum"].get<double>())
      fail("value " + v.dump() + " must be below " + schema["exclusiveMaximum"].dump());
  }
  if (v.is_array() && schema.contains("items"))
    for (std::size_t i = 0; i < v.size(); ++i)
      validate_node(v[i], schema["items"], root, where + "[" + std::to_string(i) + "]");
  if (v.is_object() && schema.contains("properties"))
  {
    const auto& props = schema["properties"];
    if (schema.value("additionalProperties", true) == false)
      for (const auto& [key, _] : v.items())
        if (!props.contains(key))
          fail("unknown key '" + key + "'");
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!v.contains(key.get<std::string>()))
          fail("missing required key '" + key.get<std::string>() + "'");
    for (const auto& [key, sub_raw] : props.items())
    {
      const auto& sub = resolve_ref(sub_raw, root);
      if (!v.contains(key))
      {
        if (sub.contains("default"))
          v[key] = sub["default"];
        else if (sub.value("type", "") == "object")
          v[key] = nlohmann::json::object();
        else
          continue;
      }
      validate_node(v[key], sub, root, where == "." ? key : where + "." + key);
    }
  }
}

} // namespace detail

// Returns the config with every default filled in; throws invalid_argument_error naming the
// offending key path otherwise.
inline nlohmann::json validate_run_config(nlohmann::json config)
{
  detail::validate_node(config, run_config_schema(), run_config_schema(), ".");
  return config;
}

inline nlohmann::json default_run_config()
{
  return validate_run_config(nlohmann::json::object());
}

inline nlohmann::json load_run_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw invalid_argument_error("cannot open config '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json doc;
  try
  {
    doc = nlohmann::json::parse(buffer.str());
  }
  catch (const nlohmann::json::exception& ex)
  {
    throw invalid_argument_error("config '" + path + "' is not valid JSON: " + ex.what());
  }
  return validate_run_config(std::move(doc));
}

// Hash of the canonical (default-filled, key-sorted) config. output_dir is left out: it
// says where results go, not what they are.
inline std::string config_hash(nlohmann::json validated)
{
  validated.erase("output_dir");
  return to_hex(fnv1a(validated.dump()));
}

// ---------------------------------------------------------------------------------------
// Typed views of a validated config

inline GraphSpec graph_spec_of(const nlohmann::json& cfg)
{
  const auto& g = cfg.at("model").at("graph");
  const auto kind = g.at("kind").get<std::string>();
  if (kind == "grid")
    return GraphSpec::grid(g.at("rows").get<int>(), g.at("cols").get<int>());
  if (kind == "random_regular")
    return GraphSpec::random_regular(g.at("num_spins").get<int>(), g.at("degree").get<int>(),
                                     g.at("seed").get<std::uint64_t>());
  return GraphSpec::complete(g.at("num_spins").get<int>());
}

inline PriorKind model_kind_of(const nlohmann::json& cfg)
{
  return prior_kind_from_string(cfg.at("model").at("kind").get<std::string>());
}

inline TrainingConfig training_config_of(const nlohmann::json& cfg)
{
  const auto& t = cfg.at("training");
  const auto& m1 = cfg.at("sampling").at("mode1");
  TrainingConfig c;
  c.lambda = t.at("lambda").get<double>();
  c.learning_rate = t.at("learning_rate").get<double>();
  c.prior_learning_rate = t.at("prior_learning_rate").get<double>();
  c.adam_betas = {t.at("adam_beta1").get<double>(), t.at("adam_beta2").get<double>()};
  c.batch_size = t.at("batch_size").get<int>();
  c.epochs = t.at("epochs").get<int>();
  c.negative_samples_per_step = t.at("negative_samples_per_step").get<int>();
  c.coupling_init_scale = t.at("coupling_init_scale").get<double>();
  c.coupling_clip = t.at("coupling_clip").get<double>();
  c.exact_kl = t.at("exact_kl").get<bool>();
  c.seed = cfg.at("seed").get<std::uint64_t>();
  c.graph = graph_spec_of(cfg);
  c.hidden_layers = cfg.at("model").at("hidden_layers").get<std::vector<int>>();
  c.prior_sampler = mode1_spec(c.negative_samples_per_step, c.seed, m1.at("burn_in_sweeps").get<int>(),
                               m1.at("thinning_sweeps").get<int>());
  return c;
}

// mode: "mode2" or "mode3"
inline SamplerSpec annealing_spec_of(const nlohmann::json& cfg, const std::string& mode, int count,
                                     std::uint64_t seed)
{
  const auto& a = cfg.at("sampling").at(mode);
  return mode2_spec(count, seed, a.at("beta_start").get<double>(), a.at("beta_end").get<double>(),
                    a.at("steps").get<int>(), a.at("sweeps_per_step").get<int>());
}

inline Dataset dataset_of(const nlohmann::json& cfg)
{
  const auto& d = cfg.at("dataset");
  if (d.at("source").get<std::string>() == "idx")
  {
    const auto images = d.at("idx").at("images").get<std::string>();
    detail::require(!images.empty(), "config dataset.idx.images must name an IDX image file");
    return load_idx(images, d.at("idx").at("labels").get<std::string>());
  }
  const auto& s = d.at("synth");
  return synth_dataset({s.at("size").get<int>(), s.at("side").get<int>(), cfg.at("seed").get<std::uint64_t>(),
                        s.at("attribute_probability").get<double>()});
}

} // namespace bmvae

#endif
