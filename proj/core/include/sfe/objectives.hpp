#pragma once

// Loss terms, composite training objectives and metric primitives.

#include <map>
#include <string>

#include <Eigen/Dense>
#include <torch/types.h>

#include "sfe/classifier.hpp"

namespace sfe::objectives {

struct LossWeights {
  double lpips = 0.8;
  double id = 0.1;
  double adv = 0.01;
  double reg = 0.01;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Per-pair image loss components. T is double for bookkeeping and
/// torch::Tensor inside training loops; both go through the same formulas.
template <class T>
struct ImageLossTerms {
  T l2{};
  T lpips{};
  T id{};
  T adv{};
};

/// L_im = L2 + lpips * L_lpips + id * L_id [+ adv * L_adv]
template <class T>
T image_loss(const ImageLossTerms<T>& t, const LossWeights& w, bool with_adv) {
  T total = t.l2 + w.lpips * t.lpips + w.id * t.id;
  if (with_adv) total = total + w.adv * t.adv;
  return total;
}

/// Inverter objective: image loss on (X, X_hat) and (X, X_hat_w) plus the
/// F_k norm penalty. w_pair_scale weights the w-only pair (1 = plain sum).
template <class T>
T phase1_objective(const ImageLossTerms<T>& recon, const ImageLossTerms<T>& w_only, const T& reg,
                   const LossWeights& w, double w_pair_scale = 1.0) {
  return image_loss(recon, w, true) + w_pair_scale * image_loss(w_only, w, true) + w.reg * reg;
}

/// Feature-editor objective: editing loss without the adversarial term plus
/// the inversion loss with it. The inversion branch is dropped entirely when
/// `with_inversion` is false.
template <class T>
T phase2_objective(const ImageLossTerms<T>& edit, const ImageLossTerms<T>& inv, const LossWeights& w,
                   bool with_inversion = true) {
  T total = image_loss(edit, w, false);
  if (with_inversion) total = total + image_loss(inv, w, true);
  return total;
}

/// Named scalars for one training step. The aggregate keys {l2, lpips, id,
/// adv, reg} always satisfy
///   total = l2 + lpips*w.lpips + id*w.id + adv*w.adv + reg*w.reg.
/// Per-branch components are kept under "<branch>.<term>".
struct LossBreakdown {
  std::map<std::string, double> values;

  double at(const std::string& key) const;
  double total() const { return at("total"); }
};

LossBreakdown compose_phase1(const ImageLossTerms<double>& recon, const ImageLossTerms<double>& w_only,
                             double reg, const LossWeights& w, double w_pair_scale = 1.0);

LossBreakdown compose_phase2(const ImageLossTerms<double>& edit, const ImageLossTerms<double>& inv,
                             const LossWeights& w, bool with_inversion = true);

ImageLossTerms<double> to_double(const ImageLossTerms<torch::Tensor>& t);

// --- differentiable terms ---------------------------------------------------

/// Mean squared error over all entries.
torch::Tensor l2(const torch::Tensor& a, const torch::Tensor& b);

/// Multi-layer feature distance: channel-normalised activations of every
/// classifier stage, squared difference summed over channels, averaged over
/// space, then averaged over stages and batch.
torch::Tensor perceptual(AttributeClassifier& net, const torch::Tensor& a, const torch::Tensor& b);
/// Per-sample version, [B].
torch::Tensor perceptual_per_sample(AttributeClassifier& net, const torch::Tensor& a,
                                    const torch::Tensor& b);

/// 1 - cos(embed(a), embed(b)), averaged over the batch. Range [0, 2].
torch::Tensor identity_loss(AttributeClassifier& net, const torch::Tensor& a, const torch::Tensor& b);
/// Per-sample cosine similarity of embeddings, [B].
torch::Tensor identity_similarity(AttributeClassifier& net, const torch::Tensor& a,
                                  const torch::Tensor& b);

/// Non-saturating generator term: mean softplus(-score_fake).
torch::Tensor adversarial_g(const torch::Tensor& score_fake);
/// Logistic critic term: mean softplus(-score_real) + mean softplus(score_fake).
torch::Tensor adversarial_d(const torch::Tensor& score_real, const torch::Tensor& score_fake);

/// ||F||_2 per sample over all non-batch dims, averaged over the batch.
torch::Tensor reg_norm(const torch::Tensor& features);

// --- metrics ------------------------------------------------------------------

struct MsSsimOptions {
  int window = 7;
  double sigma = 1.5;
  double data_range = 2.0;
  int max_scales = 5;
};

/// Multi-scale SSIM per sample ([B], float64). Uses as many scales as the
/// image supports for the window (at most max_scales) with the standard
/// scale weights renormalised.
torch::Tensor ms_ssim(const torch::Tensor& a, const torch::Tensor& b, const MsSsimOptions& opt = {});

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  long samples = 0;
};

/// Mean and unbiased covariance of rows of a [n, d] tensor.
GaussianStats gaussian_stats(const torch::Tensor& features);

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)). The trace of the matrix
/// square root is evaluated on the symmetric product S1^(1/2) S2 S1^(1/2);
/// eigenvalues below 1e-10 are clipped to zero. Rejects non-symmetric or
/// materially indefinite covariances.
double frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& sigma1,
                        const Eigen::VectorXd& mu2, const Eigen::MatrixXd& sigma2);
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Embeddings of the classifier for a stack of images, float64 [n, d].
torch::Tensor embed_images(AttributeClassifier& net, const torch::Tensor& images, int batch = 64);

/// Fréchet distance between classifier embeddings of two image sets.
double toy_fid(AttributeClassifier& net, const torch::Tensor& images_a, const torch::Tensor& images_b);

}  // namespace sfe::objectives
