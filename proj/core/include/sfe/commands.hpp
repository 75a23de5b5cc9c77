#pragma once

// Command implementations shared by the CLI and the acceptance suite.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "sfe/evalsuite.hpp"
#include "sfe/trainer.hpp"
#include "sfe/workspace.hpp"

namespace sfe::commands {

/// Overrides every seed in the config with one derived from `seed`.
config::RunConfig with_seed(config::RunConfig cfg, std::uint64_t seed);

/// Runs the given pipelines over the test set and returns the report; the
/// timing record is returned separately so the report stays reproducible.
struct EvalOutput {
  evalsuite::EvalReport report;
  std::map<std::string, evalsuite::TimingRecord> timing;
};

EvalOutput eval_full(const Workspace& ws, bool with_timing = true);
EvalOutput eval_ablation(const std::string& name, const Workspace& main, const Workspace& ablation);

void write_eval(const EvalOutput& out, const std::filesystem::path& dir);

/// Original / inversion / edit rows for the first eval.grid_images test images.
void write_grid(const Workspace& ws, const std::filesystem::path& path);

/// Every stage in dependency order, skipping stages whose artifacts exist.
void build_all(const Workspace& ws, const trainer::TrainOptions& opt);

}  // namespace sfe::commands
