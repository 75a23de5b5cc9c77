#include "sfe/evalsuite.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>
#include <torch/torch.h>

#include "sfe/blocks.hpp"
#include "sfe/errors.hpp"
#include "sfe/objectives.hpp"

namespace sfe::evalsuite {

torch::Tensor Pipeline::invert(const torch::Tensor& x) const {
  return edit(x, directions::EditingDirection::zero(style_dim), 0.0);
}

torch::Tensor Pipeline::edit_all(const torch::Tensor& x, const directions::EditingDirection& d, double power,
                                 int batch) const {
  torch::NoGradGuard ng;
  std::vector<torch::Tensor> out;
  for (long i = 0; i < x.size(0); i += batch) out.push_back(edit(x.slice(0, i, i + batch), d, power));
  return torch::cat(out);
}

Pipeline sfe_pipeline(std::shared_ptr<feature_editor::SfePipeline> p, const std::string& name) {
  Pipeline out;
  out.name = name;
  out.style_dim = p->generator()->config().style_dim;
  out.edit = [p](const torch::Tensor& x, const directions::EditingDirection& d, double power) {
    return p->edit_image(x, d, power);
  };
  return out;
}

Pipeline e_only_pipeline(stylegen::Generator g, encoder_w::BaseEncoder e) {
  Pipeline out;
  out.name = "e_only";
  out.style_dim = g->config().style_dim;
  g->eval();
  e->eval();
  out.edit = [g, e](const torch::Tensor& x, const directions::EditingDirection& d, double power) mutable {
    torch::NoGradGuard ng;
    return g->synthesize(d.apply(e->encode_wplus(x), power));
  };
  return out;
}

Pipeline identity_pipeline(int style_dim) {
  Pipeline out;
  out.name = "identity";
  out.style_dim = style_dim;
  out.edit = [](const torch::Tensor& x, const directions::EditingDirection&, double) { return x.clone(); };
  return out;
}

InversionRecord inversion_metrics(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images) {
  if (images.size(0) == 0) throw InvalidInput("inversion metrics need a non-empty test set");
  torch::NoGradGuard ng;
  auto recon = p.edit_all(images, directions::EditingDirection::zero(p.style_dim), 0.0);
  InversionRecord r;
  r.n = images.size(0);
  r.l2 = (recon - images).pow(2).mean({1, 2, 3}).to(torch::kFloat64).mean().item<double>();
  std::vector<torch::Tensor> perc;
  for (long i = 0; i < images.size(0); i += 64) {
    perc.push_back(objectives::perceptual_per_sample(clf, recon.slice(0, i, i + 64), images.slice(0, i, i + 64)));
  }
  r.perceptual = torch::cat(perc).to(torch::kFloat64).mean().item<double>();
  r.ms_ssim = objectives::ms_ssim(recon, images).mean().item<double>();
  r.toy_fid = objectives::toy_fid(clf, images, recon);
  return r;
}

namespace {

int target_attribute(const directions::EditingDirection& d) {
  if (!d.attribute) throw InvalidInput("direction '" + d.name + "' is not tied to an attribute");
  return static_cast<int>(*d.attribute);
}

torch::Tensor has_target(const torch::Tensor& presence, const directions::EditingDirection& d) {
  return (presence.select(1, target_attribute(d)) > 0.5) == d.target_presence;
}

}  // namespace

EditingFidRecord editing_fid(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images,
                             const torch::Tensor& presence, const directions::EditingDirection& d, double power) {
  auto in_a = has_target(presence, d);
  auto a = images.index_select(0, in_a.nonzero().squeeze(1));
  auto b = images.index_select(0, in_a.logical_not().nonzero().squeeze(1));
  if (a.size(0) < 2 || b.size(0) < 2) throw InvalidInput("editing FID needs both partitions non-trivial for " + d.name);
  auto b_edit = p.edit_all(b, d, power);
  EditingFidRecord r;
  r.n_a = a.size(0);
  r.n_b = b.size(0);
  r.fid_a_bprime = objectives::toy_fid(clf, a, b_edit);
  r.fid_b_bprime = objectives::toy_fid(clf, b, b_edit);
  return r;
}

RotationFidRecord rotation_fid(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images,
                               const directions::EditingDirection& d, double power, std::uint64_t seed) {
  const auto n = images.size(0);
  if (n % 2 != 0) throw InvalidInput("rotation FID needs an even number of images");
  auto gen = nn::make_generator(seed);
  auto perm = torch::randperm(n, gen);
  auto first = images.index_select(0, perm.slice(0, 0, n / 2));
  auto second = images.index_select(0, perm.slice(0, n / 2, n));
  RotationFidRecord r;
  r.n_half = n / 2;
  // Both halves pass through the pipeline; one of them is also edited.
  r.fid = objectives::toy_fid(clf, p.edit_all(first, d, 0.0), p.edit_all(second, d, power));
  r.fid_swapped = objectives::toy_fid(clf, p.edit_all(second, d, 0.0), p.edit_all(first, d, power));
  return r;
}

double flip_rate(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images_without,
                 const directions::EditingDirection& d, double power) {
  if (images_without.size(0) == 0) throw InvalidInput("flip rate needs images lacking the target attribute");
  torch::NoGradGuard ng;
  const int a = target_attribute(d);
  auto edited = p.edit_all(images_without, d, power);
  auto present = clf->presence_probability(edited).select(1, a) > 0.5;
  return (present == d.target_presence).to(torch::kFloat64).mean().item<double>();
}

double id_similarity(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images,
                     const directions::EditingDirection& d, double power) {
  torch::NoGradGuard ng;
  auto edited = p.edit_all(images, d, power);
  return objectives::identity_similarity(clf, images, edited).to(torch::kFloat64).mean().item<double>();
}

TimingRecord timing(const Pipeline& p, const torch::Tensor& images, const directions::EditingDirection& d,
                    double power, int repeats) {
  using clock = std::chrono::steady_clock;
  torch::NoGradGuard ng;
  const auto n = images.size(0);
  if (n == 0 || repeats < 1) throw InvalidInput("timing needs images and repeats");
  p.edit(images.slice(0, 0, 1), d, power);  // warm-up
  std::vector<double> per_image;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = clock::now();
    for (long i = 0; i < n; ++i) p.edit(images.slice(0, i, i + 1), d, power);
    per_image.push_back(std::chrono::duration<double>(clock::now() - t0).count() / static_cast<double>(n));
  }
  double best_batched = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = clock::now();
    p.edit(images, d, power);
    best_batched = std::min(best_batched, std::chrono::duration<double>(clock::now() - t0).count() / n);
  }
  double mean = 0;
  for (double v : per_image) mean += v;
  mean /= per_image.size();
  double var = 0;
  for (double v : per_image) var += (v - mean) * (v - mean);
  var /= per_image.size();
  return {mean, best_batched, mean > 0 ? std::sqrt(var) / mean : 0.0};
}

PipelineReport evaluate_pipeline(const Pipeline& p, objectives::AttributeClassifier& clf, const torch::Tensor& images,
                                 const torch::Tensor& presence, const directions::DirectionRegistry& registry,
                                 const std::vector<std::string>& rotation_directions, std::uint64_t seed) {
  PipelineReport rep;
  rep.inversion = inversion_metrics(p, clf, images);
  for (const auto& name : registry.names()) {
    const auto& d = registry.at(name);
    if (!d.attribute) continue;
    DirectionRecord r;
    r.power = d.calibrated_power();
    r.holdout = registry.is_holdout(name);
    r.fid = editing_fid(p, clf, images, presence, d, r.power);
    auto without = images.index_select(0, has_target(presence, d).logical_not().nonzero().squeeze(1));
    r.flip_rate = flip_rate(p, clf, without, d, r.power);
    r.id_similarity = id_similarity(p, clf, without, d, r.power);
    rep.editing[name] = r;
  }
  auto even = images.slice(0, 0, images.size(0) - images.size(0) % 2);
  for (const auto& name : rotation_directions) {
    if (!registry.contains(name)) continue;
    const auto& d = registry.at(name);
    rep.rotation[name] = rotation_fid(p, clf, even, d, d.calibrated_power(), seed);
  }
  return rep;
}

// --- report serialisation ---------------------------------------------------------

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["provenance"] = provenance;
  auto& ps = j["pipelines"];
  ps = nlohmann::ordered_json::object();
  for (const auto& [name, p] : pipelines) {
    nlohmann::ordered_json pj;
    pj["inversion"] = {{"l2", p.inversion.l2},
                       {"perceptual", p.inversion.perceptual},
                       {"ms_ssim", p.inversion.ms_ssim},
                       {"toy_fid", p.inversion.toy_fid},
                       {"n", p.inversion.n}};
    auto& ej = pj["editing"];
    ej = nlohmann::ordered_json::object();
    for (const auto& [dn, r] : p.editing) {
      ej[dn] = {{"power", r.power},
                {"holdout", r.holdout},
                {"editing_fid", r.fid.fid_a_bprime},
                {"editing_fid_b", r.fid.fid_b_bprime},
                {"n_a", r.fid.n_a},
                {"n_b", r.fid.n_b},
                {"flip_rate", r.flip_rate},
                {"id_similarity", r.id_similarity}};
    }
    auto& rj = pj["rotation"];
    rj = nlohmann::ordered_json::object();
    for (const auto& [dn, r] : p.rotation) {
      rj[dn] = {{"fid", r.fid}, {"fid_swapped", r.fid_swapped}, {"n_half", r.n_half}};
    }
    ps[name] = pj;
  }
  return j.dump(2) + "\n";
}

EvalReport EvalReport::from_json(const std::string& text) {
  EvalReport rep;
  try {
    const auto j = nlohmann::json::parse(text);
    rep.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    for (const auto& [name, pj] : j.at("pipelines").items()) {
      PipelineReport p;
      const auto& inv = pj.at("inversion");
      p.inversion = {inv.at("l2").get<double>(), inv.at("perceptual").get<double>(), inv.at("ms_ssim").get<double>(),
                     inv.at("toy_fid").get<double>(), inv.at("n").get<long>()};
      for (const auto& [dn, e] : pj.at("editing").items()) {
        DirectionRecord r;
        r.power = e.at("power").get<double>();
        r.holdout = e.at("holdout").get<bool>();
        r.fid = {e.at("editing_fid").get<double>(), e.at("editing_fid_b").get<double>(), e.at("n_a").get<long>(),
                 e.at("n_b").get<long>()};
        r.flip_rate = e.at("flip_rate").get<double>();
        r.id_similarity = e.at("id_similarity").get<double>();
        p.editing[dn] = r;
      }
      for (const auto& [dn, e] : pj.at("rotation").items()) {
        p.rotation[dn] = {e.at("fid").get<double>(), e.at("fid_swapped").get<double>(), e.at("n_half").get<long>()};
      }
      rep.pipelines[name] = p;
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed evaluation report: ") + e.what());
  }
  return rep;
}

std::string EvalReport::to_tsv() const {
  std::ostringstream os;
  os.precision(9);
  os << "pipeline\tsection\tname\tmetric\tvalue\n";
  for (const auto& [name, p] : pipelines) {
    os << name << "\tinversion\t-\tl2\t" << p.inversion.l2 << "\n";
    os << name << "\tinversion\t-\tperceptual\t" << p.inversion.perceptual << "\n";
    os << name << "\tinversion\t-\tms_ssim\t" << p.inversion.ms_ssim << "\n";
    os << name << "\tinversion\t-\ttoy_fid\t" << p.inversion.toy_fid << "\n";
    for (const auto& [dn, r] : p.editing) {
      os << name << "\tediting\t" << dn << "\tpower\t" << r.power << "\n";
      os << name << "\tediting\t" << dn << "\tediting_fid\t" << r.fid.fid_a_bprime << "\n";
      os << name << "\tediting\t" << dn << "\tediting_fid_b\t" << r.fid.fid_b_bprime << "\n";
      os << name << "\tediting\t" << dn << "\tflip_rate\t" << r.flip_rate << "\n";
      os << name << "\tediting\t" << dn << "\tid_similarity\t" << r.id_similarity << "\n";
    }
    for (const auto& [dn, r] : p.rotation) {
      os << name << "\trotation\t" << dn << "\tfid\t" << r.fid << "\n";
      os << name << "\trotation\t" << dn << "\tfid_swapped\t" << r.fid_swapped << "\n";
    }
  }
  return os.str();
}

}  // namespace sfe::evalsuite
