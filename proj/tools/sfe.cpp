// sfe: command line entry point. Exit codes: 0 success, 1 invalid input or
// missing prerequisite, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "sfe/commands.hpp"
#include "sfe/errors.hpp"
#include "sfe/image_io.hpp"

namespace fs = std::filesystem;
using namespace sfe;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::string checkpoint;
  std::optional<int> steps;
  bool quiet = false;
};

config::RunConfig load_config(const Globals& g) {
  config::RunConfig cfg;
  if (!g.config.empty()) {
    cfg = config::RunConfig::load(g.config);
  } else {
    const fs::path from = g.checkpoint.empty() ? fs::path(g.out) : fs::path(g.checkpoint);
    if (fs::exists(from / "config.json")) cfg = config::RunConfig::load(from / "config.json");
  }
  if (g.seed) cfg = commands::with_seed(cfg, *g.seed);
  return cfg;
}

Workspace workspace(const Globals& g) {
  auto cfg = load_config(g);
  std::optional<fs::path> base;
  if (!g.checkpoint.empty() && fs::path(g.checkpoint) != fs::path(g.out)) base = g.checkpoint;
  fs::create_directories(g.out);
  if (!fs::exists(fs::path(g.out) / "config.json")) cfg.save(fs::path(g.out) / "config.json");
  return Workspace(g.out, cfg, base);
}

trainer::TrainOptions train_options(const Globals& g) {
  trainer::TrainOptions o;
  o.steps = g.steps;
  o.print_interval = g.quiet ? 0 : 50;
  return o;
}

torch::Tensor input_image(const Workspace& ws, const std::string& path, int index, torch::Tensor* face_mask) {
  if (!path.empty()) {
    auto x = image_io::read_ppm(path);
    const int r = ws.config().data.resolution;
    if (x.size(1) != r || x.size(2) != r) {
      throw InvalidInput("input image must be " + std::to_string(r) + "x" + std::to_string(r));
    }
    return x.unsqueeze(0);
  }
  auto test = ws.test_set();
  if (index < 0 || index >= test.images.size(0)) throw InvalidInput("--test-index out of range");
  if (face_mask) *face_mask = test.samples[static_cast<std::size_t>(index)].face_mask;
  return test.images.slice(0, index, index + 1);
}

void print_result(const trainer::TrainResult& r) {
  std::printf("checkpoint %s (step %lld)\n", r.checkpoint.string().c_str(), static_cast<long long>(r.steps));
  for (const auto& [k, v] : r.metrics) std::printf("  %s = %.6g\n", k.c_str(), v);
  for (const auto& [k, s] : r.frozen) {
    std::printf("  frozen %s %016llx -> %016llx\n", k.c_str(), static_cast<unsigned long long>(s.first),
                static_cast<unsigned long long>(s.second));
  }
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Feature-space inversion and editing on a procedural toy image domain"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run config JSON (default: <out>/config.json or built-in defaults)");
  app.add_option("--seed", g.seed, "Derive every seed of the run from this value");
  app.add_option("--out", g.out, "Run directory to write")->capture_default_str();
  app.add_option("--checkpoint", g.checkpoint, "Run directory to read artifacts from (default: --out)");
  app.add_option("--steps", g.steps, "Override the total step count of a training command");
  app.add_flag("--quiet", g.quiet, "No progress output");

  auto* data = app.add_subcommand("data", "Dataset manifests");
  data->require_subcommand(1);
  auto* data_build = data->add_subcommand("build", "Write train/test manifests");

  auto* classifier = app.add_subcommand("classifier", "Attribute classifier backing the losses and metrics");
  classifier->require_subcommand(1);
  auto* classifier_train = classifier->add_subcommand("train", "Train the attribute classifier");

  auto* gan = app.add_subcommand("gan", "Generator pretraining");
  gan->require_subcommand(1);
  auto* gan_train = gan->add_subcommand("train", "Train G and D");

  auto* enc = app.add_subcommand("encoder-e", "Editable base encoder");
  enc->require_subcommand(1);
  auto* enc_train = enc->add_subcommand("train", "Train E against the frozen generator");

  auto* dirs = app.add_subcommand("directions", "Editing directions");
  dirs->require_subcommand(1);
  auto* dirs_fit = dirs->add_subcommand("fit", "Fit probes and PCA, calibrate powers, write the registry");

  auto* p1 = app.add_subcommand("phase1", "Inverter training");
  p1->require_subcommand(1);
  auto* p1_train = p1->add_subcommand("train", "Train the inverter");

  auto* p2 = app.add_subcommand("phase2", "Feature editor training");
  p2->require_subcommand(1);
  auto* p2_train = p2->add_subcommand("train", "Train the feature editor");

  std::string input, output = "out.ppm", mask_file, direction;
  int test_index = 0;
  double power = 0.0;
  bool use_mask = false;
  bool power_set = false;

  auto* invert = app.add_subcommand("invert", "Reconstruct an image");
  invert->add_option("--input", input, "PPM image at the configured resolution");
  invert->add_option("--test-index", test_index, "Use this test-set image instead of --input");
  invert->add_option("--output", output, "Output PPM")->capture_default_str();

  auto* edit = app.add_subcommand("edit", "Edit an image along a named direction");
  edit->add_option("--direction", direction, "Direction name")->required();
  edit->add_option("--power", power, "Edit power (default: calibrated power)")->each([&](const std::string&) {
    power_set = true;
  });
  edit->add_flag("--mask", use_mask, "Restrict the delta to the face region");
  edit->add_option("--mask-file", mask_file, "Mask image (PGM/PPM, >= 128 is inside) for --input images");
  edit->add_option("--input", input, "PPM image at the configured resolution");
  edit->add_option("--test-index", test_index, "Use this test-set image instead of --input");
  edit->add_option("--output", output, "Output PPM")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Evaluation");
  eval->require_subcommand(1);
  bool no_timing = false;
  auto* eval_full = eval->add_subcommand("full", "Inversion and editing metrics for SFE and the E-only baseline");
  eval_full->add_flag("--no-timing", no_timing, "Skip timing.json");

  std::string ablation_name;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate an ablation");
  ablate->add_option("name", ablation_name, "no_H | no_fuser | no_inv_loss | no_E | k_override | D_small")->required();

  auto* report = app.add_subcommand("report", "Figures");
  report->require_subcommand(1);
  auto* report_grid = report->add_subcommand("grid", "Inversion and edit grid as PPM");

  auto* all = app.add_subcommand("all", "Run every training stage that has not finished yet");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto ws = workspace(g);
    const auto opt = train_options(g);
    if (data_build->parsed()) {
      ws.build_data();
      std::printf("manifests written to %s\n", (ws.run() / "data").string().c_str());
    } else if (classifier_train->parsed()) {
      print_result(trainer::train_classifier(ws, opt));
    } else if (gan_train->parsed()) {
      auto r = trainer::pretrain_gan(ws, opt);
      print_result(r);
      auto it = r.metrics.find("fid_final");
      if (it != r.metrics.end() && it->second > ws.config().generator.train.fid_threshold) {
        std::fprintf(stderr, "error: toy-FID %.3f above threshold %.3f\n", it->second,
                     ws.config().generator.train.fid_threshold);
        return 2;
      }
    } else if (enc_train->parsed()) {
      print_result(trainer::train_base_encoder(ws, opt));
    } else if (dirs_fit->parsed()) {
      auto reg = trainer::fit_directions(ws);
      for (const auto& n : reg.names()) {
        const auto& d = reg.at(n);
        std::printf("%-14s %-6s power %.4g%s\n", n.c_str(), d.source.c_str(), d.calibrated_power(),
                    reg.is_holdout(n) ? " (holdout)" : "");
      }
    } else if (p1_train->parsed()) {
      print_result(trainer::train_phase1(ws, opt));
    } else if (p2_train->parsed()) {
      print_result(trainer::train_phase2(ws, opt));
    } else if (invert->parsed()) {
      auto x = input_image(ws, input, test_index, nullptr);
      auto p = ws.pipeline(feature_editor::PipelineMode::full);
      image_io::write_ppm(output, p.invert_image(x)[0]);
      std::printf("wrote %s\n", output.c_str());
    } else if (edit->parsed()) {
      auto registry = ws.registry();
      if (!registry.contains(direction)) throw InvalidInput("unknown direction '" + direction + "'");
      const auto& d = registry.at(direction);
      torch::Tensor face;
      auto x = input_image(ws, input, test_index, &face);
      std::optional<feature_editor::RegionMask> mask;
      if (use_mask || !mask_file.empty()) {
        if (!mask_file.empty()) face = image_io::read_mask(mask_file);
        if (!face.defined()) throw InvalidInput("--mask with --input needs --mask-file");
        mask = feature_editor::RegionMask::from_image_mask(
            face, stylegen::GeneratorConfig::layer_resolution(ws.config().effective_inverter().k));
      }
      auto p = ws.pipeline(feature_editor::PipelineMode::full);
      image_io::write_ppm(output, p.edit_image(x, d, power_set ? power : d.calibrated_power(), mask)[0]);
      std::printf("wrote %s\n", output.c_str());
    } else if (eval_full->parsed()) {
      auto out = commands::eval_full(ws, !no_timing);
      commands::write_eval(out, ws.run() / "eval");
      std::fputs(out.report.to_tsv().c_str(), stdout);
    } else if (ablate->parsed()) {
      auto abl = trainer::run_ablation(ablation_name, ws, opt);
      auto out = commands::eval_ablation(ablation_name, ws, abl);
      commands::write_eval(out, abl.run() / "eval");
      std::fputs(out.report.to_tsv().c_str(), stdout);
    } else if (report_grid->parsed()) {
      const auto path = ws.run() / "grid.ppm";
      commands::write_grid(ws, path);
      std::printf("wrote %s\n", path.string().c_str());
    } else if (all->parsed()) {
      commands::build_all(ws, opt);
    }
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
