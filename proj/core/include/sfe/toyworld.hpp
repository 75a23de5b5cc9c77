#pragma once

// Procedural attribute-labelled face images. Every image is a pure function
// of (attributes, seed, resolution); datasets are manifests of such triples
// and are rendered on demand.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace sfe::toyworld {

enum class Attribute : int { smile = 0, glasses, hair_shade, face_size, pose, bg_hue, accessory };

inline constexpr int kNumAttributes = 7;
inline constexpr std::array<Attribute, kNumAttributes> kAllAttributes = {
    Attribute::smile,   Attribute::glasses, Attribute::hair_shade, Attribute::face_size,
    Attribute::pose,    Attribute::bg_hue,  Attribute::accessory};

std::string_view attribute_name(Attribute a);
/// Throws InvalidInput for unknown names.
Attribute parse_attribute(std::string_view name);

struct AttributeVector {
  double smile = 0.0;       // [-1, 1], mouth curvature
  bool glasses = false;
  double hair_shade = 0.5;  // [0, 1], dark -> light
  double face_size = 0.8;   // [0.6, 1.0]
  double pose = 0.0;        // [-1, 1], horizontal offset
  double bg_hue = 0.5;      // [0, 1]
  bool accessory = false;   // hat

  /// Throws InvalidInput naming the first field out of range.
  void validate() const;

  /// Flat record in kAllAttributes order; booleans as 0/1.
  std::array<double, kNumAttributes> to_record() const;
  static AttributeVector from_record(std::span<const double> record);

  /// Binary presence label used by the classifier and the editing protocols:
  /// continuous attributes are thresholded at the midpoint of their range.
  bool presence(Attribute a) const;
  double value(Attribute a) const;

  friend bool operator==(const AttributeVector&, const AttributeVector&) = default;
};

struct Marginals {
  double glasses = 0.5;
  double accessory = 0.5;
};

AttributeVector sample_attributes(std::mt19937_64& rng, const Marginals& marginals = {});

struct LabeledImage {
  torch::Tensor pixels;     // float32 [3, R, R] in [-1, 1]
  AttributeVector attrs;
  torch::Tensor face_mask;  // bool [R, R]
  std::uint64_t seed = 0;
};

/// resolution must be a power of two >= 32.
LabeledImage render_sample(const AttributeVector& attrs, std::uint64_t seed, int resolution);

/// Pixels outside this region are unchanged when only `a` changes.
/// Global attributes (face_size, pose) return an all-true mask.
torch::Tensor attribute_region(Attribute a, const AttributeVector& attrs, int resolution);

enum class Split { train, test };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct ManifestRecord {
  std::uint64_t seed = 0;
  AttributeVector attrs;
  Split split = Split::train;
  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Deterministic in (n, seed, split). Image seeds carry the split in their top
/// bit, so train and test manifests never share a record.
std::vector<ManifestRecord> build_manifest(int n, std::uint64_t seed, Split split,
                                           const Marginals& marginals = {});

std::vector<LabeledImage> build_dataset(int n, std::uint64_t seed, Split split, int resolution,
                                        const Marginals& marginals = {});

std::vector<LabeledImage> render_manifest(std::span<const ManifestRecord> records,
                                          int resolution);

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

/// Stacks pixels into [B, 3, R, R].
torch::Tensor stack_pixels(std::span<const LabeledImage> images);
/// [B, kNumAttributes] float presence labels.
torch::Tensor presence_labels(std::span<const LabeledImage> images);
/// [B, kNumAttributes] raw attribute values.
torch::Tensor attribute_values(std::span<const LabeledImage> images);

}  // namespace sfe::toyworld
