#include "sfe/objectives.hpp"

#include <array>
#include <cmath>

#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace sfe::objectives {
namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw InvalidInput(std::string(what) + ": shape mismatch");
  }
}

void put_terms(LossBreakdown& out, const std::string& prefix, const ImageLossTerms<double>& t,
               bool with_adv) {
  out.values[prefix + ".l2"] = t.l2;
  out.values[prefix + ".lpips"] = t.lpips;
  out.values[prefix + ".id"] = t.id;
  if (with_adv) out.values[prefix + ".adv"] = t.adv;
}

}  // namespace

void LossWeights::validate() const {
  for (double x : {lpips, id, adv, reg}) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidInput("loss weights must be finite and >= 0");
  }
}

double LossBreakdown::at(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw InvalidInput("loss breakdown has no component '" + key + "'");
  return it->second;
}

LossBreakdown compose_phase1(const ImageLossTerms<double>& recon, const ImageLossTerms<double>& w_only,
                             double reg, const LossWeights& w, double w_pair_scale) {
  LossBreakdown out;
  put_terms(out, "recon", recon, true);
  put_terms(out, "w_only", w_only, true);
  out.values["l2"] = recon.l2 + w_pair_scale * w_only.l2;
  out.values["lpips"] = recon.lpips + w_pair_scale * w_only.lpips;
  out.values["id"] = recon.id + w_pair_scale * w_only.id;
  out.values["adv"] = recon.adv + w_pair_scale * w_only.adv;
  out.values["reg"] = reg;
  out.values["total"] = phase1_objective(recon, w_only, reg, w, w_pair_scale);
  return out;
}

LossBreakdown compose_phase2(const ImageLossTerms<double>& edit, const ImageLossTerms<double>& inv,
                             const LossWeights& w, bool with_inversion) {
  LossBreakdown out;
  put_terms(out, "edit", edit, false);
  const ImageLossTerms<double> used_inv = with_inversion ? inv : ImageLossTerms<double>{};
  put_terms(out, "inv", used_inv, true);
  out.values["l2"] = edit.l2 + used_inv.l2;
  out.values["lpips"] = edit.lpips + used_inv.lpips;
  out.values["id"] = edit.id + used_inv.id;
  out.values["adv"] = used_inv.adv;
  out.values["reg"] = 0.0;
  out.values["total"] = phase2_objective(edit, inv, w, with_inversion);
  return out;
}

ImageLossTerms<double> to_double(const ImageLossTerms<torch::Tensor>& t) {
  auto v = [](const torch::Tensor& x) { return x.defined() ? x.item<double>() : 0.0; };
  return {v(t.l2), v(t.lpips), v(t.id), v(t.adv)};
}

// ---------------------------------------------------------------------------

torch::Tensor l2(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "l2");
  return (a - b).pow(2).mean();
}

torch::Tensor perceptual_per_sample(AttributeClassifier& net, const torch::Tensor& a,
                                    const torch::Tensor& b) {
  require_same_shape(a, b, "perceptual");
  if (net.is_empty()) throw InvalidInput("perceptual loss needs a feature network");
  const auto batch = a.size(0);
  auto out = net->forward(torch::cat({a, b}, 0));
  torch::Tensor acc;
  for (const auto& f : out.stages) {
    auto n = f / (f.pow(2).sum(1, true).sqrt() + 1e-10);
    auto d = (n.slice(0, 0, batch) - n.slice(0, batch)).pow(2).sum(1).mean({1, 2});
    acc = acc.defined() ? acc + d : d;
  }
  return acc / static_cast<double>(out.stages.size());
}

torch::Tensor perceptual(AttributeClassifier& net, const torch::Tensor& a, const torch::Tensor& b) {
  return perceptual_per_sample(net, a, b).mean();
}

torch::Tensor identity_similarity(AttributeClassifier& net, const torch::Tensor& a,
                                  const torch::Tensor& b) {
  require_same_shape(a, b, "identity");
  if (net.is_empty()) throw InvalidInput("identity loss needs an embedding network");
  const auto batch = a.size(0);
  auto e = net->forward(torch::cat({a, b}, 0)).embedding;
  return torch::cosine_similarity(e.slice(0, 0, batch), e.slice(0, batch), 1, 1e-8);
}

torch::Tensor identity_loss(AttributeClassifier& net, const torch::Tensor& a, const torch::Tensor& b) {
  return (1.0 - identity_similarity(net, a, b)).mean();
}

torch::Tensor adversarial_g(const torch::Tensor& score_fake) {
  return torch::softplus(-score_fake).mean();
}

torch::Tensor adversarial_d(const torch::Tensor& score_real, const torch::Tensor& score_fake) {
  return torch::softplus(-score_real).mean() + torch::softplus(score_fake).mean();
}

torch::Tensor reg_norm(const torch::Tensor& features) {
  if (features.dim() < 2) throw InvalidInput("reg_norm expects a batched tensor");
  std::vector<long> dims;
  for (long d = 1; d < features.dim(); ++d) dims.push_back(d);
  return torch::linalg_vector_norm(features, 2, dims, false, c10::nullopt).mean();
}

// ---------------------------------------------------------------------------

torch::Tensor ms_ssim(const torch::Tensor& a_in, const torch::Tensor& b_in, const MsSsimOptions& opt) {
  require_same_shape(a_in, b_in, "ms_ssim");
  if (a_in.dim() != 4) throw InvalidInput("ms_ssim expects [B, C, H, W]");
  static constexpr std::array<double, 5> kWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  auto a = a_in.detach().to(torch::kFloat64);
  auto b = b_in.detach().to(torch::kFloat64);
  const auto channels = a.size(1);
  const long min_side = std::min(a.size(2), a.size(3));
  int scales = 1;
  while (scales < opt.max_scales && scales < static_cast<int>(kWeights.size()) &&
         (min_side >> scales) >= opt.window) {
    ++scales;
  }
  if (min_side < opt.window) throw InvalidInput("image smaller than the ms_ssim window");

  auto g = torch::arange(opt.window, torch::kFloat64) - (opt.window - 1) / 2.0;
  g = torch::exp(-g.pow(2) / (2 * opt.sigma * opt.sigma));
  g = g / g.sum();
  auto kh = g.view({1, 1, 1, opt.window}).repeat({channels, 1, 1, 1});
  auto kv = g.view({1, 1, opt.window, 1}).repeat({channels, 1, 1, 1});
  auto blur = [&](const torch::Tensor& x) {
    const torch::Tensor none;
    const std::vector<int64_t> one{1, 1}, zero{0, 0};
    return torch::conv2d(torch::conv2d(x, kh, none, one, zero, one, channels), kv, none, one, zero, one, channels);
  };
  const double c1 = std::pow(0.01 * opt.data_range, 2);
  const double c2 = std::pow(0.03 * opt.data_range, 2);

  double weight_sum = 0.0;
  for (int s = 0; s < scales; ++s) weight_sum += kWeights[s];

  auto result = torch::ones({a.size(0)}, torch::kFloat64);
  for (int s = 0; s < scales; ++s) {
    auto mu_a = blur(a);
    auto mu_b = blur(b);
    auto var_a = blur(a * a) - mu_a * mu_a;
    auto var_b = blur(b * b) - mu_b * mu_b;
    auto cov = blur(a * b) - mu_a * mu_b;
    auto cs = (2 * cov + c2) / (var_a + var_b + c2);
    const double wgt = kWeights[s] / weight_sum;
    if (s + 1 < scales) {
      result = result * torch::relu(cs.mean({1, 2, 3})).pow(wgt);
      a = torch::avg_pool2d(a, 2);
      b = torch::avg_pool2d(b, 2);
    } else {
      auto lum = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
      result = result * torch::relu((lum * cs).mean({1, 2, 3})).pow(wgt);
    }
  }
  return result;
}

GaussianStats gaussian_stats(const torch::Tensor& features) {
  if (features.dim() != 2 || features.size(0) < 2) {
    throw InvalidInput("gaussian_stats needs an [n >= 2, d] feature matrix");
  }
  auto f = features.detach().to(torch::kFloat64).contiguous();
  const long n = f.size(0);
  const long d = f.size(1);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      f.data_ptr<double>(), n, d);
  GaussianStats s;
  s.samples = n;
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - s.mean.transpose();
  s.cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
  return s;
}

namespace {

void check_covariance(const Eigen::MatrixXd& s, long d, const char* name) {
  if (s.rows() != d || s.cols() != d) throw InvalidInput(std::string(name) + " has the wrong shape");
  if (!s.allFinite()) throw InvalidInput(std::string(name) + " has non-finite entries");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw InvalidInput(std::string(name) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
  if (d > 0 && es.eigenvalues().minCoeff() < -1e-6 * scale) {
    throw InvalidInput(std::string(name) + " is not positive semi-definite");
  }
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = ev[i] < 1e-10 ? 0.0 : std::sqrt(ev[i]);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1,
                        const Eigen::VectorXd& mu2, const Eigen::MatrixXd& sigma2) {
  const long d = mu1.size();
  if (mu2.size() != d) throw InvalidInput("frechet_distance: mean dimensions differ");
  check_covariance(sigma1, d, "sigma1");
  check_covariance(sigma2, d, "sigma2");
  const Eigen::MatrixXd root1 = psd_sqrt(sigma1);
  Eigen::MatrixXd m = root1 * sigma2 * root1;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double ev = es.eigenvalues()[i];
    if (ev >= 1e-10) trace_sqrt += std::sqrt(ev);
  }
  return (mu1 - mu2).squaredNorm() + sigma1.trace() + sigma2.trace() - 2.0 * trace_sqrt;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  return frechet_distance(a.mean, a.cov, b.mean, b.cov);
}

torch::Tensor embed_images(AttributeClassifier& net, const torch::Tensor& images, int batch) {
  torch::NoGradGuard ng;
  std::vector<torch::Tensor> parts;
  for (long i = 0; i < images.size(0); i += batch) {
    const long hi = std::min<long>(images.size(0), i + batch);
    parts.push_back(net->forward(images.slice(0, i, hi)).embedding.to(torch::kFloat64));
  }
  return torch::cat(parts, 0);
}

double toy_fid(AttributeClassifier& net, const torch::Tensor& images_a, const torch::Tensor& images_b) {
  return frechet_distance(gaussian_stats(embed_images(net, images_a)),
                          gaussian_stats(embed_images(net, images_b)));
}

}  // namespace sfe::objectives
