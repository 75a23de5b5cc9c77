#include "sfe/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <torch/torch.h>

#include "sfe/errors.hpp"
#include "sfe/random.hpp"

namespace sfe::toyworld {
namespace {

using Rgb = std::array<double, 3>;

constexpr Rgb kEyeColor = {0.10, 0.10, 0.15};
constexpr Rgb kMouthColor = {0.60, 0.10, 0.15};
constexpr Rgb kFrameColor = {0.05, 0.05, 0.05};
constexpr Rgb kDarkHair = {0.15, 0.10, 0.05};
constexpr Rgb kLightHair = {0.95, 0.85, 0.50};
constexpr Rgb kHatColor = {0.70, 0.15, 0.20};
constexpr int kMaxFreckles = 6;
constexpr double kMouthHalfThickness = 0.03;

Rgb hsv_to_rgb(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(hh);
  const double f = hh - sector;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

// Face layout in normalized [0,1]^2 coordinates (u right, v down).
struct Layout {
  double cx, cy, rx, ry;
  double eye_y, eye_dx, eye_r;
  double lens_half, frame_thickness;
  double mouth_y, mouth_half_width, mouth_amp;

  explicit Layout(const AttributeVector& a) {
    cx = 0.5 + 0.12 * a.pose;
    cy = 0.55;
    rx = 0.30 * a.face_size;
    ry = 0.38 * a.face_size;
    eye_y = cy - 0.15 * ry;
    eye_dx = 0.4 * rx;
    eye_r = 0.12 * rx;
    lens_half = 0.22 * rx;
    frame_thickness = 0.06 * rx;
    mouth_y = cy + 0.45 * ry;
    mouth_half_width = 0.4 * rx;
    mouth_amp = 0.12 * ry;
  }

  bool in_face(double u, double v) const {
    const double du = (u - cx) / rx;
    const double dv = (v - cy) / ry;
    return du * du + dv * dv <= 1.0;
  }
  bool in_hair(double u, double v) const { return in_face(u, v) && v < cy - 0.45 * ry; }
  bool in_eye(double u, double v) const {
    for (double s : {-1.0, 1.0}) {
      const double du = u - (cx + s * eye_dx);
      const double dv = v - eye_y;
      if (du * du + dv * dv <= eye_r * eye_r) return true;
    }
    return false;
  }
  bool in_eyewear_box(double u, double v) const {
    return std::abs(u - cx) <= eye_dx + lens_half && std::abs(v - eye_y) <= lens_half;
  }
  bool on_frame(double u, double v) const {
    for (double s : {-1.0, 1.0}) {
      const double du = std::abs(u - (cx + s * eye_dx));
      const double dv = std::abs(v - eye_y);
      const bool outer = du <= lens_half && dv <= lens_half;
      const bool inner = du <= lens_half - frame_thickness && dv <= lens_half - frame_thickness;
      if (outer && !inner) return true;
    }
    return std::abs(u - cx) <= eye_dx - lens_half && std::abs(v - eye_y) <= frame_thickness / 2;
  }
  bool in_mouth_box(double u, double v) const {
    return std::abs(u - cx) <= mouth_half_width &&
           std::abs(v - mouth_y) <= 0.5 * mouth_amp + kMouthHalfThickness;
  }
  bool on_mouth(double u, double v, double smile) const {
    const double t = (u - cx) / mouth_half_width;
    if (std::abs(t) > 1.0) return false;
    const double centre = mouth_y + smile * mouth_amp * (0.5 - t * t);
    return std::abs(v - centre) <= kMouthHalfThickness;
  }
  bool on_hat_crown(double u, double v) const {
    return std::abs(u - cx) <= 0.55 * rx && v >= cy - 1.35 * ry && v <= cy - 0.8 * ry;
  }
  bool on_hat_brim(double u, double v) const {
    return std::abs(u - cx) <= 0.9 * rx && v >= cy - 0.85 * ry && v <= cy - 0.75 * ry;
  }
};

// Nuisance parameters drawn from the image seed: skin tone and freckles.
struct Identity {
  Rgb skin;
  int freckles;
  std::array<std::array<double, 2>, kMaxFreckles> freckle_pos;

  explicit Identity(std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, 0x1D));
    const Rgb base = {0.87, 0.68, 0.55};
    for (int c = 0; c < 3; ++c) skin[c] = base[c] + uniform(rng, -0.06, 0.06);
    freckles = static_cast<int>(rng() % (kMaxFreckles + 1));
    for (auto& p : freckle_pos) p = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
  }
};

void check_resolution(int resolution) {
  if (resolution < 32 || (resolution & (resolution - 1)) != 0) {
    throw InvalidInput("resolution must be a power of two >= 32, got " +
                       std::to_string(resolution));
  }
}

void check_range(const char* name, double value, double lo, double hi) {
  if (!(value >= lo && value <= hi)) {
    std::ostringstream os;
    os << "attribute " << name << "=" << value << " outside [" << lo << ", " << hi << "]";
    throw InvalidInput(os.str());
  }
}

constexpr std::uint64_t kTestBit = 1ULL << 63;

}  // namespace

std::string_view attribute_name(Attribute a) {
  switch (a) {
    case Attribute::smile: return "smile";
    case Attribute::glasses: return "glasses";
    case Attribute::hair_shade: return "hair_shade";
    case Attribute::face_size: return "face_size";
    case Attribute::pose: return "pose";
    case Attribute::bg_hue: return "bg_hue";
    case Attribute::accessory: return "accessory";
  }
  return "?";
}

Attribute parse_attribute(std::string_view name) {
  for (Attribute a : kAllAttributes) {
    if (attribute_name(a) == name) return a;
  }
  throw InvalidInput("unknown attribute '" + std::string(name) + "'");
}

void AttributeVector::validate() const {
  check_range("smile", smile, -1.0, 1.0);
  check_range("hair_shade", hair_shade, 0.0, 1.0);
  check_range("face_size", face_size, 0.6, 1.0);
  check_range("pose", pose, -1.0, 1.0);
  check_range("bg_hue", bg_hue, 0.0, 1.0);
}

std::array<double, kNumAttributes> AttributeVector::to_record() const {
  return {smile, glasses ? 1.0 : 0.0, hair_shade, face_size, pose, bg_hue, accessory ? 1.0 : 0.0};
}

AttributeVector AttributeVector::from_record(std::span<const double> r) {
  if (r.size() != kNumAttributes) {
    throw InvalidInput("attribute record must have " + std::to_string(kNumAttributes) +
                       " fields");
  }
  auto as_bool = [](double x, const char* name) {
    if (x != 0.0 && x != 1.0) throw InvalidInput(std::string(name) + " must be 0 or 1");
    return x == 1.0;
  };
  AttributeVector a;
  a.smile = r[0];
  a.glasses = as_bool(r[1], "glasses");
  a.hair_shade = r[2];
  a.face_size = r[3];
  a.pose = r[4];
  a.bg_hue = r[5];
  a.accessory = as_bool(r[6], "accessory");
  a.validate();
  return a;
}

double AttributeVector::value(Attribute a) const {
  return to_record()[static_cast<std::size_t>(a)];
}

bool AttributeVector::presence(Attribute a) const {
  switch (a) {
    case Attribute::smile: return smile > 0.0;
    case Attribute::glasses: return glasses;
    case Attribute::hair_shade: return hair_shade > 0.5;
    case Attribute::face_size: return face_size > 0.8;
    case Attribute::pose: return pose > 0.0;
    case Attribute::bg_hue: return bg_hue > 0.5;
    case Attribute::accessory: return accessory;
  }
  return false;
}

AttributeVector sample_attributes(std::mt19937_64& rng, const Marginals& m) {
  AttributeVector a;
  a.smile = uniform(rng, -1.0, 1.0);
  a.glasses = bernoulli(rng, m.glasses);
  a.hair_shade = uniform01(rng);
  a.face_size = uniform(rng, 0.6, 1.0);
  a.pose = uniform(rng, -1.0, 1.0);
  a.bg_hue = uniform01(rng);
  a.accessory = bernoulli(rng, m.accessory);
  return a;
}

LabeledImage render_sample(const AttributeVector& attrs, std::uint64_t seed, int resolution) {
  check_resolution(resolution);
  attrs.validate();

  const Layout L(attrs);
  const Identity id(seed);
  const Rgb bg = hsv_to_rgb(0.8 * attrs.bg_hue, 0.45, 0.8);
  const Rgb hair = {
      kDarkHair[0] + (kLightHair[0] - kDarkHair[0]) * attrs.hair_shade,
      kDarkHair[1] + (kLightHair[1] - kDarkHair[1]) * attrs.hair_shade,
      kDarkHair[2] + (kLightHair[2] - kDarkHair[2]) * attrs.hair_shade,
  };
  const double freckle_r2 = 0.025 * 0.025;

  const int R = resolution;
  auto pixels = torch::empty({3, R, R}, torch::kFloat32);
  auto mask = torch::empty({R, R}, torch::kBool);
  auto px = pixels.accessor<float, 3>();
  auto mk = mask.accessor<bool, 2>();

  for (int y = 0; y < R; ++y) {
    const double v = (y + 0.5) / R;
    for (int x = 0; x < R; ++x) {
      const double u = (x + 0.5) / R;
      Rgb c;
      const bool face = L.in_face(u, v);
      mk[y][x] = face;
      if (face) {
        c = id.skin;
        for (int i = 0; i < id.freckles; ++i) {
          const double fx = L.cx + 0.5 * L.rx * id.freckle_pos[i][0];
          const double fy = L.cy + 0.25 * L.ry * id.freckle_pos[i][1];
          if ((u - fx) * (u - fx) + (v - fy) * (v - fy) <= freckle_r2) {
            c = {id.skin[0] * 0.7, id.skin[1] * 0.7, id.skin[2] * 0.7};
          }
        }
        if (L.in_hair(u, v)) c = hair;
      } else {
        const double shade = 0.15 * (v - 0.5);
        c = {bg[0] + shade, bg[1] + shade, bg[2] + shade};
      }
      if (L.in_eye(u, v)) c = kEyeColor;
      if (L.on_mouth(u, v, attrs.smile)) c = kMouthColor;
      if (attrs.glasses && L.on_frame(u, v)) c = kFrameColor;
      if (attrs.accessory) {
        if (L.on_hat_crown(u, v)) c = kHatColor;
        if (L.on_hat_brim(u, v)) c = {kHatColor[0] * 0.8, kHatColor[1] * 0.8, kHatColor[2] * 0.8};
      }
      for (int ch = 0; ch < 3; ++ch) {
        px[ch][y][x] = static_cast<float>(std::clamp(c[ch], 0.0, 1.0) * 2.0 - 1.0);
      }
    }
  }
  return LabeledImage{pixels, attrs, mask, seed};
}

torch::Tensor attribute_region(Attribute a, const AttributeVector& attrs, int resolution) {
  check_resolution(resolution);
  const Layout L(attrs);
  const int R = resolution;
  auto region = torch::zeros({R, R}, torch::kBool);
  auto rg = region.accessor<bool, 2>();
  for (int y = 0; y < R; ++y) {
    const double v = (y + 0.5) / R;
    for (int x = 0; x < R; ++x) {
      const double u = (x + 0.5) / R;
      bool in = false;
      switch (a) {
        case Attribute::glasses: in = L.in_eyewear_box(u, v); break;
        case Attribute::smile: in = L.in_mouth_box(u, v); break;
        case Attribute::hair_shade: in = L.in_hair(u, v); break;
        case Attribute::bg_hue: in = !L.in_face(u, v); break;
        case Attribute::accessory: in = L.on_hat_crown(u, v) || L.on_hat_brim(u, v); break;
        case Attribute::face_size:
        case Attribute::pose: in = true; break;
      }
      rg[y][x] = in;
    }
  }
  return region;
}

std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw InvalidInput("unknown split '" + std::string(name) + "'");
}

std::vector<ManifestRecord> build_manifest(int n, std::uint64_t seed, Split split,
                                           const Marginals& marginals) {
  if (n <= 0) throw InvalidInput("dataset size must be >= 1, got " + std::to_string(n));
  const std::uint64_t tag = split == Split::train ? 0x7A : 0x7E;
  std::mt19937_64 rng(derive_seed(seed, tag));
  std::vector<ManifestRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ManifestRecord r;
    r.attrs = sample_attributes(rng, marginals);
    r.seed = derive_seed(seed ^ tag, static_cast<std::uint64_t>(i)) & ~kTestBit;
    if (split == Split::test) r.seed |= kTestBit;
    r.split = split;
    out.push_back(r);
  }
  return out;
}

std::vector<LabeledImage> render_manifest(std::span<const ManifestRecord> records,
                                          int resolution) {
  std::vector<LabeledImage> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(render_sample(r.attrs, r.seed, resolution));
  return out;
}

std::vector<LabeledImage> build_dataset(int n, std::uint64_t seed, Split split, int resolution,
                                        const Marginals& marginals) {
  check_resolution(resolution);
  const auto manifest = build_manifest(n, seed, split, marginals);
  return render_manifest(manifest, resolution);
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestRecord> records) {
  std::ofstream os(path);
  if (!os) throw RuntimeFailure("cannot write manifest " + path.string());
  for (const auto& r : records) {
    const auto rec = r.attrs.to_record();
    nlohmann::ordered_json j;
    j["seed"] = r.seed;
    j["split"] = split_name(r.split);
    for (Attribute a : kAllAttributes) {
      const double x = rec[static_cast<std::size_t>(a)];
      if (a == Attribute::glasses || a == Attribute::accessory) {
        j["attrs"][std::string(attribute_name(a))] = x == 1.0;
      } else {
        j["attrs"][std::string(attribute_name(a))] = x;
      }
    }
    os << j.dump() << '\n';
  }
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open manifest " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRecord r;
      r.seed = j.at("seed").get<std::uint64_t>();
      r.split = parse_split(j.at("split").get<std::string>());
      std::array<double, kNumAttributes> rec{};
      for (Attribute a : kAllAttributes) {
        const auto& v = j.at("attrs").at(std::string(attribute_name(a)));
        rec[static_cast<std::size_t>(a)] = v.is_boolean() ? (v.get<bool>() ? 1.0 : 0.0)
                                                         : v.get<double>();
      }
      r.attrs = AttributeVector::from_record(rec);
      out.push_back(r);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

torch::Tensor stack_pixels(std::span<const LabeledImage> images) {
  std::vector<torch::Tensor> xs;
  xs.reserve(images.size());
  for (const auto& im : images) xs.push_back(im.pixels);
  return torch::stack(xs);
}

torch::Tensor presence_labels(std::span<const LabeledImage> images) {
  auto out = torch::zeros({static_cast<long>(images.size()), kNumAttributes});
  auto acc = out.accessor<float, 2>();
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (Attribute a : kAllAttributes) {
      acc[static_cast<long>(i)][static_cast<int>(a)] = images[i].attrs.presence(a) ? 1.f : 0.f;
    }
  }
  return out;
}

torch::Tensor attribute_values(std::span<const LabeledImage> images) {
  auto out = torch::zeros({static_cast<long>(images.size()), kNumAttributes});
  auto acc = out.accessor<float, 2>();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto rec = images[i].attrs.to_record();
    for (int a = 0; a < kNumAttributes; ++a) {
      acc[static_cast<long>(i)][a] = static_cast<float>(rec[static_cast<std::size_t>(a)]);
    }
  }
  return out;
}

}  // namespace sfe::toyworld
