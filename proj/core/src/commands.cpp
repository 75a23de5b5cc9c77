#include "sfe/commands.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>
#include <torch/torch.h>

#include "sfe/errors.hpp"
#include "sfe/image_io.hpp"
#include "sfe/random.hpp"

namespace fs = std::filesystem;

namespace sfe::commands {

namespace {

std::string file_hash(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char c;
  while (f.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::map<std::string, std::string> provenance(const Workspace& ws) {
  std::map<std::string, std::string> p;
  for (const char* c : {component::kClassifier, component::kGenerator, component::kEncoderE, component::kInverter,
                        component::kEditor}) {
    if (auto b = ws.find(c)) p[std::string("checkpoint.") + c] = checkpoint::read_meta(*b).component + "@" +
                                                                   std::to_string(checkpoint::read_meta(*b).step) +
                                                                   ":" + checkpoint::bundle_id(*b);
  }
  if (fs::exists(ws.registry_path())) p["registry"] = file_hash(ws.registry_path());
  p["seed"] = std::to_string(ws.config().eval.seed);
  p["test_images"] = std::to_string(ws.config().eval.test_images);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << ws.config().hash();
  p["config"] = os.str();
  p["version"] = checkpoint::kVersion;
  return p;
}

const std::vector<std::string> kRotation = {"pose+"};

}  // namespace

config::RunConfig with_seed(config::RunConfig c, std::uint64_t seed) {
  std::uint64_t tag = 0;
  auto next = [&]() { return derive_seed(seed, ++tag); };
  c.data.seed = next();
  c.generator.model.init_seed = next();
  c.generator.train.seed = next();
  c.encoder_e.model.init_seed = next();
  c.encoder_e.seed = next();
  c.inverter.init_seed = next();
  c.feature_editor.init_seed = next();
  c.directions.seed = next();
  c.train.seed = next();
  c.eval.seed = next();
  c.eval.classifier.init_seed = next();
  c.eval.classifier_train.seed = next();
  return c;
}

EvalOutput eval_full(const Workspace& ws, bool with_timing) {
  auto clf = ws.classifier();
  auto test = ws.test_set();
  auto registry = ws.registry();
  EvalOutput out;
  auto full = std::make_shared<feature_editor::SfePipeline>(ws.pipeline(feature_editor::PipelineMode::full));
  auto sfe = evalsuite::sfe_pipeline(full, "sfe");
  auto e_only = evalsuite::e_only_pipeline(ws.generator(), ws.encoder_e());
  for (const auto* p : {&sfe, &e_only}) {
    out.report.pipelines[p->name] =
        evalsuite::evaluate_pipeline(*p, clf, test.images, test.presence, registry, kRotation, ws.config().eval.seed);
  }
  out.report.provenance = provenance(ws);
  if (with_timing) {
    const int n = std::min<int>(ws.config().eval.timing_images, static_cast<int>(test.images.size(0)));
    const auto& d = registry.at(registry.train_names().front());
    for (const auto* p : {&sfe, &e_only}) {
      out.timing[p->name] = evalsuite::timing(*p, test.images.slice(0, 0, n), d, d.calibrated_power(),
                                              ws.config().eval.timing_repeats);
    }
  }
  return out;
}

EvalOutput eval_ablation(const std::string& name, const Workspace& main, const Workspace& ablation) {
  using feature_editor::PipelineMode;
  auto clf = main.classifier();
  auto test = main.test_set();
  auto registry = main.registry();
  const auto mode = name == "no_H" ? PipelineMode::no_H : name == "no_E" ? PipelineMode::no_E : PipelineMode::full;
  const auto& ws = name == "no_H" ? main : ablation;
  auto p = evalsuite::sfe_pipeline(std::make_shared<feature_editor::SfePipeline>(ws.pipeline(mode)), name);
  EvalOutput out;
  out.report.pipelines[name] =
      evalsuite::evaluate_pipeline(p, clf, test.images, test.presence, registry, kRotation, main.config().eval.seed);
  out.report.provenance = provenance(ws);
  out.report.provenance["ablation"] = name;
  return out;
}

void write_eval(const EvalOutput& out, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "report.json") << out.report.to_json();
  std::ofstream(dir / "report.tsv") << out.report.to_tsv();
  if (!out.timing.empty()) {
    nlohmann::ordered_json j;
    for (const auto& [name, t] : out.timing) {
      j[name] = {{"seconds_per_image", t.single_seconds},
                 {"batched_seconds_per_image", t.batched_seconds},
                 {"coefficient_of_variation", t.single_cv}};
    }
    std::ofstream(dir / "timing.json") << j.dump(2) << "\n";
  }
}

void write_grid(const Workspace& ws, const fs::path& path) {
  torch::NoGradGuard ng;
  auto test = ws.test_set();
  auto registry = ws.registry();
  const int n = std::min<int>(ws.config().eval.grid_images, static_cast<int>(test.images.size(0)));
  auto x = test.images.slice(0, 0, n);
  auto full = std::make_shared<feature_editor::SfePipeline>(ws.pipeline(feature_editor::PipelineMode::full));
  auto sfe = evalsuite::sfe_pipeline(full);
  auto e_only = evalsuite::e_only_pipeline(ws.generator(), ws.encoder_e());
  std::vector<torch::Tensor> rows = {x, sfe.invert(x), e_only.invert(x)};
  for (const auto& name : registry.names()) {
    const auto& d = registry.at(name);
    if (!d.attribute || !d.target_presence) continue;
    rows.push_back(sfe.edit(x, d, d.calibrated_power()));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  image_io::write_ppm(path, image_io::tile_grid(rows));
}

void build_all(const Workspace& ws, const trainer::TrainOptions& opt) {
  if (!ws.has_data()) ws.build_data();
  auto finished = [&](const char* c, int steps) {
    auto p = checkpoint::latest(ws.run(), c);
    return p && checkpoint::read_meta(*p).step >= steps;
  };
  const auto& cfg = ws.config();
  if (!finished(component::kClassifier, cfg.eval.classifier_train.steps)) trainer::train_classifier(ws, opt);
  if (!finished(component::kGenerator, cfg.generator.train.steps)) trainer::pretrain_gan(ws, opt);
  if (!finished(component::kEncoderE, cfg.encoder_e.steps)) trainer::train_base_encoder(ws, opt);
  if (!fs::exists(ws.run() / "directions" / "registry.json")) trainer::fit_directions(ws);
  if (!finished(component::kInverter, cfg.train.phase1_steps)) trainer::train_phase1(ws, opt);
  if (!finished(component::kEditor, cfg.train.phase2_steps)) trainer::train_phase2(ws, opt);
}

}  // namespace sfe::commands
