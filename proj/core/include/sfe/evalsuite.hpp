#pragma once

// Evaluation protocols: inversion metrics, editing FID (split by attribute
// presence), rotation-style FID over random halves, flip rate, identity
// similarity and timing, plus the report that collects them.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/types.h>

#include "sfe/classifier.hpp"
#include "sfe/direction.hpp"
#include "sfe/directions.hpp"
#include "sfe/encoder_w.hpp"
#include "sfe/feature_editor.hpp"
#include "sfe/stylegen.hpp"
#include "sfe/toyworld.hpp"

namespace sfe::evalsuite {

/// An image -> edited image method. Inversion is the edit with the zero
/// direction at power 0.
struct Pipeline {
  std::string name;
  std::function<torch::Tensor(const torch::Tensor&, const directions::EditingDirection&, double)> edit;
  int style_dim = 0;

  torch::Tensor invert(const torch::Tensor& x) const;
  /// Runs `edit` over a large stack in fixed-size chunks.
  torch::Tensor edit_all(const torch::Tensor& x, const directions::EditingDirection& d, double power,
                         int batch = 50) const;
};

Pipeline sfe_pipeline(std::shared_ptr<feature_editor::SfePipeline> p, const std::string& name = "sfe");
/// G(E(x) + power * d): the editable-encoder baseline.
Pipeline e_only_pipeline(stylegen::Generator g, encoder_w::BaseEncoder e);
/// Returns its input unchanged; used to check the metric plumbing.
Pipeline identity_pipeline(int style_dim);

struct InversionRecord {
  double l2 = 0, perceptual = 0, ms_ssim = 0, toy_fid = 0;
  long n = 0;
};

InversionRecord inversion_metrics(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images);

struct EditingFidRecord {
  double fid_a_bprime = 0;  // primary: edited set against images having the attribute
  double fid_b_bprime = 0;
  long n_a = 0, n_b = 0;
};

/// A = images whose presence label equals the direction's target, B = the
/// rest; B' = edit(B).
EditingFidRecord editing_fid(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images,
                             const torch::Tensor& presence, const directions::EditingDirection& d, double power);

struct RotationFidRecord {
  double fid = 0;          // FID(untouched half, edited half)
  double fid_swapped = 0;  // roles of the halves exchanged
  long n_half = 0;
};

RotationFidRecord rotation_fid(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images,
                               const directions::EditingDirection& d, double power, std::uint64_t seed);

/// Fraction of edited images the classifier labels with the target presence.
double flip_rate(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images_without,
                 const directions::EditingDirection& d, double power);

/// Mean cosine similarity of classifier embeddings of x and edit(x).
double id_similarity(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images,
                     const directions::EditingDirection& d, double power);

struct TimingRecord {
  double single_seconds = 0;   // one image per call
  double batched_seconds = 0;  // per image, whole batch per call
  double single_cv = 0;        // coefficient of variation over repeats
};

TimingRecord timing(const Pipeline& p, const torch::Tensor& images, const directions::EditingDirection& d,
                    double power, int repeats);

struct DirectionRecord {
  double power = 0;
  bool holdout = false;
  EditingFidRecord fid;
  double flip_rate = 0;
  double id_similarity = 0;
};

struct PipelineReport {
  InversionRecord inversion;
  std::map<std::string, DirectionRecord> editing;
  std::map<std::string, RotationFidRecord> rotation;
};

struct EvalReport {
  std::map<std::string, PipelineReport> pipelines;
  std::map<std::string, std::string> provenance;

  std::string to_json() const;
  std::string to_tsv() const;
  static EvalReport from_json(const std::string& text);
};

/// Inversion metrics plus per-direction editing metrics for every direction
/// tied to an attribute, at its calibrated power.
PipelineReport evaluate_pipeline(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images,
                                 const torch::Tensor& presence, const directions::DirectionRegistry& registry,
                                 const std::vector<std::string>& rotation_directions, std::uint64_t seed);

}  // namespace sfe::evalsuite
