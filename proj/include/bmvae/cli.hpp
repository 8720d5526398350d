#ifndef BMVAE_CLI_HPP_
#define BMVAE_CLI_HPP_

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bmvae/checkpoint.hpp"
#include "bmvae/config.hpp"
#include "bmvae/dataset.hpp"
#include "bmvae/generation.hpp"
#include "bmvae/image_io.hpp"
#include "bmvae/sampler_validation.hpp"
#include "bmvae/text.hpp"
#include "bmvae/training.hpp"

namespace bmvae
{

inline constexpr const char* metrics_header = "epoch,bce,energy,entropy,logz,kl,seconds";

// One CSV row; absent values are empty fields, reals in shortest round-trip form.
inline std::string metrics_row(const EpochMetrics& m, bool record_timing)
{
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  return std::to_string(m.epoch) + "," + format_double(m.bce) + "," + opt(m.energy) + "," + opt(m.entropy) + "," +
         opt(m.log_partition) + "," + opt(m.kl) + "," + format_double(record_timing ? m.seconds : 0.0);
}

// The fixed K = 12 machine shipped as fixtures/k12_machine.json.
inline BoltzmannMachine reference_k12_machine()
{
  return random_machine(build_graph(GraphSpec::random_regular(12, 3, 7)), 1.0, 11);
}

namespace detail
{

inline constexpr std::uint64_t generation_stream = 7ull << 40;

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out)
    throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline nlohmann::json spins_json(const SpinConfig& z)
{
  nlohmann::json out = nlohmann::json::array();
  for (auto s : z.spins())
    out.push_back(static_cast<int>(s));
  return out;
}

inline nlohmann::json schedule_json(const SamplerSpec& spec)
{
  nlohmann::json out = nlohmann::json::array();
  for (double b : *spec.schedule)
    out.push_back(format_double(b));
  return out;
}

struct LoadedModel
{
  Checkpoint ckpt;
  nlohmann::json config; // validated run config stored at training time
  std::vector<AttributeProfile> profiles;
};

inline LoadedModel load_model(const std::string& path)
{
  LoadedModel m{load_checkpoint(path), {}, {}};
  m.config = validate_run_config(m.ckpt.metadata.value("config", nlohmann::json::object()));
  if (m.ckpt.metadata.contains("profiles"))
    for (const auto& p : m.ckpt.metadata["profiles"])
      m.profiles.push_back(profile_from_json(p));
  return m;
}

// Writes <name>.pgm/.ppm and <name>_manifest.json into dir.
inline void emit_samples(const std::filesystem::path& dir, const std::string& name, const nlohmann::json& header,
                         const SamplerSpec& spec, const std::vector<GeneratedSample>& samples, const ImageShape& shape,
                         const std::vector<Vector>& leading_images, std::ostream& out)
{
  std::vector<Vector> images = leading_images;
  for (const auto& s : samples)
    images.push_back(s.image);
  const std::string image_file = name + (shape.channels == 1 ? ".pgm" : ".ppm");
  write_image_grid(images, shape, square_layout(images.size()), (dir / image_file).string());

  nlohmann::json manifest = header;
  manifest["image_file"] = image_file;
  manifest["schedule"] = schedule_json(spec);
  manifest["sweeps_per_step"] = spec.sweeps_per_step;
  manifest["sampler_seed"] = spec.seed;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t n = 0; n < samples.size(); ++n)
    rows.push_back({{"index", n},
                    {"seed", samples[n].seed},
                    {"energy", format_double(samples[n].energy)},
                    {"conditioned_energy", format_double(samples[n].conditioned_energy)},
                    {"spins", spins_json(samples[n].z)}});
  manifest["samples"] = std::move(rows);
  write_text(dir / (name + "_manifest.json"), manifest.dump(1) + "\n");
  out << "wrote " << samples.size() << " samples to " << (dir / image_file).string() << '\n';
}

// ---------------------------------------------------------------------------------------
// Subcommands

struct TrainArgs
{
  std::string config_path;
  std::string output_dir;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
};

inline int run_train(const TrainArgs& a, std::ostream& out)
{
  nlohmann::json cfg = a.config_path.empty() ? default_run_config() : load_run_config(a.config_path);
  if (a.epochs)
    cfg["training"]["epochs"] = *a.epochs;
  if (a.seed)
    cfg["seed"] = *a.seed;
  if (!a.output_dir.empty())
    cfg["output_dir"] = a.output_dir;
  cfg = validate_run_config(std::move(cfg));

  const std::filesystem::path dir = cfg["output_dir"].get<std::string>();
  std::filesystem::create_directories(dir);
  const auto dataset = dataset_of(cfg);
  const auto config = training_config_of(cfg);
  const auto kind = model_kind_of(cfg);
  const bool timing = cfg["training"]["record_timing"].get<bool>();

  std::ostringstream csv;
  csv << metrics_header << '\n';
  const auto result = train(dataset, config, kind, [&](const ModelState&, const EpochMetrics& m) {
    csv << metrics_row(m, timing) << '\n';
    out << "epoch " << m.epoch << " bce " << m.bce;
    if (m.kl)
      out << " kl " << *m.kl;
    out << '\n';
  });

  Checkpoint ckpt{result.state, {{"config", cfg}, {"config_hash", config_hash(cfg)}}};
  if (kind == PriorKind::bm_vae)
  {
    nlohmann::json profiles = nlohmann::json::array();
    for (const auto& [name, labels] : dataset.attributes)
      if (std::find(labels.begin(), labels.end(), 1) != labels.end())
        profiles.push_back(profile_to_json(attribute_mean_logits(dataset, name, result.state)));
    ckpt.metadata["profiles"] = std::move(profiles);
  }
  save_checkpoint(ckpt, (dir / "checkpoint.json").string());
  write_text(dir / "metrics.csv", csv.str());
  const nlohmann::json manifest{{"command", "train"},
                                {"seed", cfg["seed"]},
                                {"config_hash", config_hash(cfg)},
                                {"config", cfg},
                                {"epochs", config.epochs},
                                {"steps", result.state.step},
                                {"files", {"checkpoint.json", "metrics.csv"}}};
  write_text(dir / "manifest.json", manifest.dump(1) + "\n");
  out << "wrote " << (dir / "checkpoint.json").string() << '\n';
  return 0;
}

struct GenerateArgs
{
  std::string checkpoint;
  std::string output_dir;
  std::optional<int> count;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::vector<std::string> attributes;
  std::optional<int> source_index;
};

enum class GenerateMode
{
  unconditional,
  conditional,
  manipulation
};

inline int run_generate(const GenerateArgs& a, GenerateMode mode, std::ostream& out)
{
  const auto model = load_model(a.checkpoint);
  const auto& cfg = model.config;
  const auto& gen = cfg["generation"];
  const std::filesystem::path dir = a.output_dir.empty() ? cfg["output_dir"].get<std::string>() : a.output_dir;
  std::filesystem::create_directories(dir);

  const int count = a.count.value_or(gen["count"].get<int>());
  const std::uint64_t seed = a.seed.value_or(derive_seed(cfg["seed"].get<std::uint64_t>(), generation_stream));
  GenerationRequest req;
  req.count = count;
  req.sampler = annealing_spec_of(cfg, mode == GenerateMode::unconditional ? "mode2" : "mode3", count, seed);
  req.gamma = a.gamma.value_or(gen["gamma"].get<double>());
  req.logit_scale = gen["logit_scale"].get<double>();

  nlohmann::json header{{"checkpoint", std::filesystem::path(a.checkpoint).filename().string()},
                        {"config_hash", model.ckpt.metadata.value("config_hash", "")},
                        {"seed", seed},
                        {"count", count}};
  const auto& shape = model.ckpt.state.image_shape;

  if (mode == GenerateMode::unconditional)
  {
    header["command"] = "generate";
    header["gamma"] = nullptr;
    header["attributes"] = nlohmann::json::array();
    emit_samples(dir, "generate", header, req.sampler, generate(model.ckpt.state, req), shape, {}, out);
    return 0;
  }

  req.attributes = a.attributes.empty() ? gen["attributes"].get<std::vector<std::string>>() : a.attributes;
  require(!req.attributes.empty(), "at least one attribute is required");
  header["attributes"] = req.attributes;
  if (mode == GenerateMode::conditional)
  {
    header["command"] = "condition";
    header["gamma"] = format_double(req.gamma);
    emit_samples(dir, "condition", header, req.sampler, generate(model.ckpt.state, req, model.profiles), shape, {},
                 out);
    return 0;
  }

  require(req.attributes.size() == 1, "manipulate takes exactly one attribute");
  const auto dataset = dataset_of(cfg);
  const int index = a.source_index.value_or(gen["source_index"].get<int>());
  require(index >= 0 && static_cast<std::size_t>(index) < dataset.size(), "source index out of range");
  const Vector& source = dataset.images[static_cast<std::size_t>(index)];
  const auto& profile = find_profile(model.profiles, req.attributes.front());
  header["command"] = "manipulate";
  header["gamma"] = nullptr; // not used: bias is mu(x) + logit_scale * mean_logits
  header["logit_scale"] = format_double(req.logit_scale);
  header["source_index"] = index;
  nlohmann::json bias = nlohmann::json::array();
  for (double b : manipulation_bias(model.ckpt.state, source, profile, req.logit_scale).values())
    bias.push_back(format_double(b));
  header["bias"] = std::move(bias);
  const Vector direct = direct_decode(model.ckpt.state, encode_logits(model.ckpt.state, source));
  // grid: source, direct decode, then samples
  emit_samples(dir, "manipulate", header, req.sampler, manipulate(model.ckpt.state, source, profile, req), shape,
               {source, direct}, out);
  return 0;
}

struct ValidateArgs
{
  std::string machine;
  std::uint64_t seed = 0;
};

inline int run_validate_sampler(const ValidateArgs& a, std::ostream& out)
{
  BoltzmannMachine bm = reference_k12_machine();
  if (!a.machine.empty())
  {
    std::ifstream in(a.machine);
    if (!in)
      throw std::runtime_error("cannot open machine file '" + a.machine + "'");
    try
    {
      bm = machine_from_json(nlohmann::json::parse(in));
    }
    catch (const nlohmann::json::exception& ex)
    {
      throw format_error("machine file '" + a.machine + "': " + ex.what());
    }
    out << "machine: " << a.machine << '\n';
  }
  else
    out << "machine: built-in K=12 random 3-regular fixture\n";
  out << "K = " << bm.num_spins() << ", edges = " << bm.graph().num_edges() << '\n';
  ValidationOptions opt;
  opt.seed = a.seed;
  const auto report = validate_sampler(bm, opt);
  report.print(out);
  return report.passed() ? 0 : 1;
}

inline int run_inspect(const std::string& path, std::ostream& out)
{
  const auto model = load_model(path);
  const auto& s = model.ckpt.state;
  out << "format: " << checkpoint_format << " v" << checkpoint_version << '\n';
  out << "kind: " << to_string(s.kind) << '\n';
  out << "image: " << s.image_shape.width << "x" << s.image_shape.height << "x" << s.image_shape.channels << '\n';
  out << "latent K: " << s.latent_dim() << '\n';
  out << "encoder:";
  for (const auto& l : s.encoder.layers)
    out << ' ' << l.weight.cols() << "->" << l.weight.rows() << '(' << to_string(l.activation) << ')';
  out << "\ndecoder:";
  for (const auto& l : s.decoder.layers)
    out << ' ' << l.weight.cols() << "->" << l.weight.rows() << '(' << to_string(l.activation) << ')';
  out << "\nstep: " << s.step << '\n';
  if (s.prior)
  {
    double lo = 0.0, hi = 0.0;
    if (!s.prior->couplings().empty())
    {
      lo = *std::min_element(s.prior->couplings().begin(), s.prior->couplings().end());
      hi = *std::max_element(s.prior->couplings().begin(), s.prior->couplings().end());
    }
    out << "prior edges: " << s.prior->graph().num_edges() << " (J in [" << lo << ", " << hi << "])\n";
  }
  out << "seed: " << model.config["seed"] << '\n';
  out << "config hash: " << model.ckpt.metadata.value("config_hash", "") << '\n';
  out << "attribute profiles:";
  for (const auto& p : model.profiles)
    out << ' ' << p.name << '(' << p.support_count << ')';
  out << '\n';
  return 0;
}

} // namespace detail

/*
 * Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
 */
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
  CLI::App app{"Boltzmann-machine-prior VAE: training, sampling and generation", "bmvae"};
  app.require_subcommand(1);

  detail::TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
  train_cmd->add_option("--config", train_args.config_path, "run config (JSON); defaults apply when omitted");
  train_cmd->add_option("--output", train_args.output_dir, "output directory (overrides output_dir)");
  train_cmd->add_option("--epochs", train_args.epochs, "override training.epochs")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--seed", train_args.seed, "override seed");

  detail::GenerateArgs gen_args;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", gen_args.checkpoint, "checkpoint written by train")->required();
    cmd->add_option("--output", gen_args.output_dir, "output directory");
    cmd->add_option("--count", gen_args.count, "number of samples")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", gen_args.seed, "sampler seed");
  };
  auto* gen_cmd = app.add_subcommand("generate", "unconditional generation (annealed schedule)");
  add_common(gen_cmd);
  auto* cond_cmd = app.add_subcommand("condition", "conditional generation with bias gamma * m(attribute)");
  add_common(cond_cmd);
  cond_cmd->add_option("--attribute", gen_args.attributes, "attribute name (repeatable)");
  cond_cmd->add_option("--gamma", gen_args.gamma, "conditioning strength")->check(CLI::NonNegativeNumber);
  auto* manip_cmd = app.add_subcommand("manipulate", "attribute manipulation with bias mu(x) + mu(attribute)");
  add_common(manip_cmd);
  manip_cmd->add_option("--attribute", gen_args.attributes, "attribute name");
  manip_cmd->add_option("--source-index", gen_args.source_index, "index of the source image in the dataset")
      ->check(CLI::NonNegativeNumber);

  detail::ValidateArgs val_args;
  auto* val_cmd = app.add_subcommand("validate-sampler", "run the sampler invariant suite");
  val_cmd->add_option("--machine", val_args.machine, "machine JSON (default: built-in K=12 fixture)");
  val_cmd->add_option("--seed", val_args.seed, "sampler seed");

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "print checkpoint metadata");
  inspect_cmd->add_option("checkpoint", inspect_path, "checkpoint file")->required();

  if (argc <= 1)
  {
    err << app.help();
    return 2;
  }
  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success))
    {
      app.exit(e, out, err); // --help / --help-all
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try
  {
    if (*train_cmd)
      return detail::run_train(train_args, out);
    if (*gen_cmd)
      return detail::run_generate(gen_args, detail::GenerateMode::unconditional, out);
    if (*cond_cmd)
      return detail::run_generate(gen_args, detail::GenerateMode::conditional, out);
    if (*manip_cmd)
      return detail::run_generate(gen_args, detail::GenerateMode::manipulation, out);
    if (*val_cmd)
      return detail::run_validate_sampler(val_args, out);
    if (*inspect_cmd)
      return detail::run_inspect(inspect_path, out);
  }
  catch (const std::exception& e)
  {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

} // namespace bmvae

#endif
