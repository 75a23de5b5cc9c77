#pragma once

// Checkpoint bundles: run/{component}/{step:08d}/ holding bundle.pt
// (parameters, optimizer state, RNG state), meta.json, config.json and
// provenance.txt. Also the per-step metrics log.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <torch/nn/module.h>
#include <torch/optim/optimizer.h>
#include <torch/types.h>

#include "sfe/config.hpp"

namespace sfe::checkpoint {

inline constexpr const char* kVersion = "sfe 0.1.0";

struct Meta {
  std::string component;
  std::int64_t step = 0;
  std::string arch;  // canonical JSON of the settings that fix parameter shapes
  std::uint64_t seed = 0;
  std::string optimizer;
  std::uint64_t config_hash = 0;
  std::map<std::string, double> metrics;
  /// Parameter checksums (start, end) of components held frozen while this
  /// bundle was trained.
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> frozen;
};

/// What to write or read; pointers are borrowed.
struct Contents {
  std::vector<std::pair<std::string, torch::nn::Module*>> modules;
  std::vector<std::pair<std::string, torch::optim::Optimizer*>> optimizers;
  std::map<std::string, torch::Tensor> tensors;
};

std::filesystem::path component_dir(const std::filesystem::path& run, const std::string& component);
std::filesystem::path step_dir(const std::filesystem::path& run, const std::string& component, std::int64_t step);

/// Writes a complete bundle; the directory appears atomically.
std::filesystem::path save(const std::filesystem::path& run, const Meta& meta, const Contents& contents,
                           const config::RunConfig& cfg);

/// Highest-step bundle of a component, if any.
std::optional<std::filesystem::path> latest(const std::filesystem::path& run, const std::string& component);

Meta read_meta(const std::filesystem::path& bundle_dir);

/// Loads into the given modules / optimizers and fills `contents.tensors` for
/// the requested keys. Throws InvalidInput when the stored arch differs.
Meta load(const std::filesystem::path& bundle_dir, Contents& contents, const std::string& expected_arch);

/// Short content id of a bundle: FNV-1a over bundle.pt, hex.
std::string bundle_id(const std::filesystem::path& bundle_dir);

std::string provenance_line(const Meta& meta);

struct MetricRecord {
  std::string component;
  std::int64_t step = 0;
  std::map<std::string, double> values;
};

/// JSON-lines log of per-step loss breakdowns.
class MetricsLog {
 public:
  explicit MetricsLog(std::filesystem::path path);
  void append(const MetricRecord& r) const;
  /// Drops records of `component` with step >= from_step (used on resume).
  void truncate(const std::string& component, std::int64_t from_step) const;
  std::vector<MetricRecord> read(const std::string& component = "") const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace sfe::checkpoint
