#pragma once

// Direction discovery (logistic linear probes and PCA over mapped latents),
// power calibration, and the named registry with train / holdout tags.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sfe/classifier.hpp"
#include "sfe/direction.hpp"
#include "sfe/encoder_w.hpp"
#include "sfe/stylegen.hpp"

namespace sfe::directions {

/// L2-regularised logistic regression fitted by Newton iterations.
struct LogisticModel {
  Eigen::VectorXd weights;
  double bias = 0.0;

  double accuracy(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) const;
};

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, double l2 = 1e-3,
                           int max_iter = 50);

/// Samples n mapped latents in chunks, [n, D] float32 (no grad).
torch::Tensor sample_w(stylegen::Generator& g, int n, std::uint64_t seed);

struct ProbeResult {
  EditingDirection direction;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  double positive_fraction = 0.0;
};

/// Labels G(w) with the classifier and fits a hyperplane in W; the direction
/// is the unit normal pointing toward presence. 80/20 train/held-out split.
ProbeResult fit_linear_probe(stylegen::Generator& g, objectives::AttributeClassifier& clf,
                             toyworld::Attribute attribute, int n_samples, std::uint64_t seed);

struct PcaResult {
  std::vector<EditingDirection> components;
  std::vector<double> variances;  // descending
  Eigen::VectorXd mean;
};

/// Principal axes of centred mapped latents.
PcaResult fit_pca_directions(stylegen::Generator& g, int n_samples, int n_components, std::uint64_t seed);
PcaResult pca_from_samples(const Eigen::MatrixXd& samples, int n_components);

struct CalibrationOptions {
  double min_confidence = 0.8;
  double min_identity = 0.5;
  std::vector<double> grid = {0.5, 1, 1.5, 2, 2.5, 3, 4, 5, 6, 8};  // multiples of the latent std along d
  int images = 64;
};

/// Picks the smallest power on the grid for which base-encoder edits of images
/// lacking the target attribute reach the confidence and identity bars, and
/// sets default_powers to {p/2, 3p/4, p}. Directions without an attribute get
/// powers from their latent spread only. Returns the chosen power.
double calibrate_powers(EditingDirection& d, stylegen::Generator& g, encoder_w::BaseEncoder& e,
                        objectives::AttributeClassifier& clf, const torch::Tensor& images,
                        const torch::Tensor& presence, double latent_std, const CalibrationOptions& opt = {});

class DirectionRegistry {
 public:
  static constexpr int kSchemaVersion = 1;

  void add(EditingDirection d, bool holdout);
  const EditingDirection& at(const std::string& name) const;
  bool contains(const std::string& name) const { return directions_.count(name) != 0; }

  std::vector<std::string> names() const;         // all, sorted
  std::vector<std::string> train_names() const;   // not holdout, sorted
  std::vector<std::string> holdout_names() const;
  const std::vector<std::string>& small_set() const { return small_set_; }
  void set_small_set(std::vector<std::string> names);
  bool is_holdout(const std::string& name) const { return holdout_.count(name) != 0; }

  /// Training directions, or the small subset.
  std::vector<const EditingDirection*> training_directions(bool small) const;

  /// Unique names, small subset within train, holdout disjoint from train,
  /// every vector valid for the generator shape.
  void validate(int num_layers, int style_dim, int min_directions = 8, int min_holdout = 2) const;

  void save(const std::filesystem::path& path) const;
  static DirectionRegistry load(const std::filesystem::path& path);

 private:
  std::map<std::string, EditingDirection> directions_;
  std::set<std::string> holdout_;
  std::vector<std::string> small_set_;
};

struct RegistryBuildConfig {
  int probe_samples = 5000;
  int pca_samples = 10000;
  int pca_components = 2;
  std::vector<std::string> small_set = {"smile+", "smile-", "glasses+", "glasses-", "hair_shade+", "hair_shade-"};
  std::vector<std::string> holdout = {"accessory+", "accessory-"};
  int calibration_images = 64;
  std::uint64_t seed = 51;
  friend bool operator==(const RegistryBuildConfig&, const RegistryBuildConfig&) = default;
};

struct RegistryBuildReport {
  std::map<std::string, double> probe_heldout_accuracy;
  std::map<std::string, double> calibrated_power;
};

/// Probe directions (both signs) for every attribute, PCA components, powers
/// calibrated with the base encoder on the given real images.
DirectionRegistry registry_build(stylegen::Generator& g, objectives::AttributeClassifier& clf,
                                 encoder_w::BaseEncoder& e, const torch::Tensor& calibration_images,
                                 const torch::Tensor& calibration_presence, const RegistryBuildConfig& cfg,
                                 RegistryBuildReport* report = nullptr);

}  // namespace sfe::directions
