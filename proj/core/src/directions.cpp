#include "sfe/directions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <json.hpp>
#include <torch/torch.h>

#include "sfe/blocks.hpp"
#include "sfe/errors.hpp"
#include "sfe/objectives.hpp"
#include "sfe/random.hpp"

namespace sfe::directions {

namespace {

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::MatrixXd m = Eigen::Map<RowMajor>(c.data_ptr<double>(), c.size(0), c.size(1));
  return m;
}

torch::Tensor to_tensor(const Eigen::VectorXd& v) {
  auto t = torch::empty({v.size()}, torch::kFloat64);
  std::copy_n(v.data(), v.size(), t.data_ptr<double>());
  return t;
}

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hexfloat(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw InvalidInput("bad float literal '" + s + "' in registry");
  return v;
}

torch::Tensor synthesize_w(stylegen::Generator& g, const torch::Tensor& w) {
  return g->synthesize(stylegen::WPlusLatent::broadcast(w, g->num_layers()));
}

}  // namespace

double LogisticModel::accuracy(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) const {
  if (x.rows() == 0) return 0.0;
  const Eigen::VectorXd s = (x * weights).array() + bias;
  long ok = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) ok += (s(i) > 0) == (y(i) != 0);
  return static_cast<double>(ok) / static_cast<double>(x.rows());
}

LogisticModel fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, double l2, int max_iter) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (n == 0 || y.size() != n) throw InvalidInput("logistic fit needs matching non-empty data");
  const long pos = (y.array() != 0).count();
  if (pos == 0 || pos == n) throw InvalidInput("degenerate labels: only one class present");

  Eigen::MatrixXd xa(n, d + 1);
  xa.leftCols(d) = x;
  xa.col(d).setOnes();
  Eigen::VectorXd yd = y.cast<double>().cwiseMin(1.0);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);
  Eigen::VectorXd reg = Eigen::VectorXd::Constant(d + 1, l2);
  reg(d) = 0.0;  // bias is not penalised

  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd p = ((-(xa * beta).array()).exp() + 1.0).inverse().matrix();
    const Eigen::VectorXd grad = xa.transpose() * (p - yd) / static_cast<double>(n) + reg.cwiseProduct(beta);
    const Eigen::VectorXd s = (p.array() * (1.0 - p.array())).max(1e-12);
    Eigen::MatrixXd h = xa.transpose() * s.asDiagonal() * xa / static_cast<double>(n);
    h.diagonal() += reg;
    h.diagonal().array() += 1e-10;
    const Eigen::VectorXd step = h.ldlt().solve(grad);
    beta -= step;
    if (step.norm() < 1e-10 * (1.0 + beta.norm())) break;
  }
  return {beta.head(d), beta(d)};
}

torch::Tensor sample_w(stylegen::Generator& g, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample count must be >= 1");
  torch::NoGradGuard ng;
  auto gen = nn::make_generator(seed);
  const int d = g->config().style_dim;
  std::vector<torch::Tensor> chunks;
  for (int i = 0; i < n; i += 512) {
    const int b = std::min(512, n - i);
    chunks.push_back(g->map_latent(torch::randn({b, d}, gen)));
  }
  return torch::cat(chunks, 0);
}

ProbeResult fit_linear_probe(stylegen::Generator& g, objectives::AttributeClassifier& clf,
                             toyworld::Attribute attribute, int n_samples, std::uint64_t seed) {
  if (n_samples < 10) throw InvalidInput("linear probe needs at least 10 samples");
  torch::NoGradGuard ng;
  g->eval();
  clf->eval();
  auto w = sample_w(g, n_samples, seed);
  const int a = static_cast<int>(attribute);
  std::vector<torch::Tensor> labels;
  for (int i = 0; i < n_samples; i += 128) {
    const int b = std::min(128, n_samples - i);
    auto img = synthesize_w(g, w.slice(0, i, i + b));
    labels.push_back(clf->presence_probability(img).select(1, a) > 0.5);
  }
  auto y_t = torch::cat(labels).to(torch::kInt32).contiguous();
  Eigen::MatrixXd x = to_eigen(w);
  Eigen::VectorXi y = Eigen::Map<Eigen::VectorXi>(y_t.data_ptr<int>(), n_samples);

  const int n_train = n_samples * 4 / 5;
  auto model = fit_logistic(x.topRows(n_train), y.head(n_train));
  ProbeResult r;
  r.train_accuracy = model.accuracy(x.topRows(n_train), y.head(n_train));
  r.heldout_accuracy = model.accuracy(x.bottomRows(n_samples - n_train), y.tail(n_samples - n_train));
  r.positive_fraction = static_cast<double>((y.array() != 0).count()) / n_samples;
  const double norm = model.weights.norm();
  if (!(norm > 0)) throw InvalidInput("probe for " + std::string(toyworld::attribute_name(attribute)) + " is degenerate");
  r.direction.name = std::string(toyworld::attribute_name(attribute)) + "+";
  r.direction.vector = to_tensor(model.weights / norm);
  r.direction.attribute = attribute;
  r.direction.target_presence = true;
  r.direction.source = "probe";
  return r;
}

PcaResult pca_from_samples(const Eigen::MatrixXd& samples, int n_components) {
  const auto d = samples.cols();
  if (n_components < 1 || n_components > d) throw InvalidInput("n_components must be in [1, style_dim]");
  if (samples.rows() < 2) throw InvalidInput("PCA needs at least two samples");
  PcaResult r;
  r.mean = samples.colwise().mean();
  const Eigen::MatrixXd c = samples.rowwise() - r.mean.transpose();
  const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(samples.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  for (int i = 0; i < n_components; ++i) {
    const auto col = d - 1 - i;  // eigenvalues ascend
    Eigen::VectorXd v = es.eigenvectors().col(col);
    // Sign convention: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    EditingDirection dir;
    dir.name = "pca-" + std::to_string(i + 1);
    dir.vector = to_tensor(v / v.norm());
    dir.source = "pca";
    r.components.push_back(std::move(dir));
    r.variances.push_back(es.eigenvalues()(col));
  }
  return r;
}

PcaResult fit_pca_directions(stylegen::Generator& g, int n_samples, int n_components, std::uint64_t seed) {
  if (n_components > g->config().style_dim) throw InvalidInput("n_components exceeds style_dim");
  return pca_from_samples(to_eigen(sample_w(g, n_samples, seed)), n_components);
}

double calibrate_powers(EditingDirection& d, stylegen::Generator& g, encoder_w::BaseEncoder& e,
                        objectives::AttributeClassifier& clf, const torch::Tensor& images,
                        const torch::Tensor& presence, double latent_std, const CalibrationOptions& opt) {
  if (!(latent_std > 0)) throw InvalidInput("latent spread must be positive");
  auto set_powers = [&d](double p) {
    d.default_powers = {0.5 * p, 0.75 * p, p};
    return p;
  };
  if (!d.attribute) return set_powers(2.0 * latent_std);

  torch::NoGradGuard ng;
  g->eval();
  e->eval();
  clf->eval();
  const int a = static_cast<int>(*d.attribute);
  auto lacking = (presence.select(1, a) > 0.5) != d.target_presence;
  auto idx = lacking.nonzero().squeeze(1);
  if (idx.numel() == 0) throw InvalidInput("no calibration images lack attribute for " + d.name);
  idx = idx.slice(0, 0, opt.images);
  auto x = images.index_select(0, idx);
  auto w_e = e->encode_wplus(x);
  auto base = g->synthesize(w_e);

  double best_p = opt.grid.back() * latent_std;
  double best_conf = -1.0;
  for (double m : opt.grid) {
    const double p = m * latent_std;
    auto edited = g->synthesize(d.apply(w_e, p));
    auto prob = clf->presence_probability(edited).select(1, a);
    const double conf = (d.target_presence ? prob : 1 - prob).mean().item<double>();
    const double id = objectives::identity_similarity(clf, base, edited).mean().item<double>();
    if (conf >= opt.min_confidence && id >= opt.min_identity) return set_powers(p);
    if (id >= opt.min_identity && conf > best_conf) {
      best_conf = conf;
      best_p = p;
    }
  }
  return set_powers(best_p);
}

// --- registry -----------------------------------------------------------------

void DirectionRegistry::add(EditingDirection d, bool holdout) {
  if (directions_.count(d.name)) throw InvalidInput("duplicate direction name '" + d.name + "'");
  if (holdout) holdout_.insert(d.name);
  directions_.emplace(d.name, std::move(d));
}

const EditingDirection& DirectionRegistry::at(const std::string& name) const {
  auto it = directions_.find(name);
  if (it == directions_.end()) throw InvalidInput("unknown direction '" + name + "'");
  return it->second;
}

std::vector<std::string> DirectionRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : directions_) out.push_back(n);
  return out;
}

std::vector<std::string> DirectionRegistry::train_names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : directions_) {
    if (!holdout_.count(n)) out.push_back(n);
  }
  return out;
}

std::vector<std::string> DirectionRegistry::holdout_names() const {
  return {holdout_.begin(), holdout_.end()};
}

void DirectionRegistry::set_small_set(std::vector<std::string> names) {
  for (const auto& n : names) {
    if (!directions_.count(n)) throw InvalidInput("small set names unknown direction '" + n + "'");
    if (holdout_.count(n)) throw InvalidInput("small set may not contain holdout direction '" + n + "'");
  }
  small_set_ = std::move(names);
}

std::vector<const EditingDirection*> DirectionRegistry::training_directions(bool small) const {
  std::vector<const EditingDirection*> out;
  for (const auto& n : small ? small_set_ : train_names()) out.push_back(&at(n));
  return out;
}

void DirectionRegistry::validate(int num_layers, int style_dim, int min_directions, int min_holdout) const {
  if (static_cast<int>(directions_.size()) < min_directions) {
    throw InvalidInput("registry has " + std::to_string(directions_.size()) + " directions, need " +
                       std::to_string(min_directions));
  }
  if (static_cast<int>(holdout_.size()) < min_holdout) throw InvalidInput("registry has too few holdout directions");
  for (const auto& [n, d] : directions_) {
    if (n != d.name) throw InvalidInput("registry key mismatch for '" + n + "'");
    d.validate(num_layers, style_dim);
  }
  std::set<std::string> seen;
  for (const auto& n : small_set_) {
    if (!seen.insert(n).second) throw InvalidInput("small set repeats '" + n + "'");
    if (!directions_.count(n) || holdout_.count(n)) throw InvalidInput("small set must be a subset of train");
  }
}

void DirectionRegistry::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["schema_version"] = kSchemaVersion;
  j["small_set"] = small_set_;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& [n, d] : directions_) {
    nlohmann::ordered_json e;
    e["name"] = n;
    e["source"] = d.source;
    e["holdout"] = holdout_.count(n) != 0;
    e["attribute"] = d.attribute ? nlohmann::ordered_json(std::string(toyworld::attribute_name(*d.attribute)))
                                 : nlohmann::ordered_json(nullptr);
    e["target_presence"] = d.target_presence;
    e["layer_range"] = d.layer_range ? nlohmann::ordered_json::array({d.layer_range->first, d.layer_range->second})
                                     : nlohmann::ordered_json(nullptr);
    auto powers = nlohmann::ordered_json::array();
    for (double p : d.default_powers) powers.push_back(hexfloat(p));
    e["default_powers"] = powers;
    auto v = d.vector.to(torch::kFloat64).contiguous();
    e["shape"] = v.sizes().vec();
    auto vals = nlohmann::ordered_json::array();
    const double* p = v.data_ptr<double>();
    for (long i = 0; i < v.numel(); ++i) vals.push_back(hexfloat(p[i]));
    e["vector"] = vals;
    arr.push_back(e);
  }
  j["directions"] = arr;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  f << j.dump(1) << "\n";
}

DirectionRegistry DirectionRegistry::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InvalidInput("cannot read direction registry " + path.string());
  DirectionRegistry r;
  try {
    const auto j = nlohmann::json::parse(f);
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw InvalidInput("unsupported registry schema version in " + path.string());
    }
    for (const auto& e : j.at("directions")) {
      EditingDirection d;
      d.name = e.at("name").get<std::string>();
      d.source = e.at("source").get<std::string>();
      if (!e.at("attribute").is_null()) d.attribute = toyworld::parse_attribute(e.at("attribute").get<std::string>());
      d.target_presence = e.at("target_presence").get<bool>();
      if (!e.at("layer_range").is_null()) {
        d.layer_range = std::make_pair(e.at("layer_range")[0].get<int>(), e.at("layer_range")[1].get<int>());
      }
      for (const auto& p : e.at("default_powers")) d.default_powers.push_back(parse_hexfloat(p.get<std::string>()));
      const auto shape = e.at("shape").get<std::vector<int64_t>>();
      std::vector<double> vals;
      for (const auto& v : e.at("vector")) vals.push_back(parse_hexfloat(v.get<std::string>()));
      d.vector = torch::tensor(vals, torch::kFloat64).reshape(shape);
      const bool holdout = e.at("holdout").get<bool>();
      r.add(std::move(d), holdout);
    }
    r.set_small_set(j.at("small_set").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidInput("malformed direction registry " + path.string() + ": " + ex.what());
  }
  return r;
}

DirectionRegistry registry_build(stylegen::Generator& g, objectives::AttributeClassifier& clf,
                                 encoder_w::BaseEncoder& e, const torch::Tensor& calibration_images,
                                 const torch::Tensor& calibration_presence, const RegistryBuildConfig& cfg,
                                 RegistryBuildReport* report) {
  DirectionRegistry reg;
  const std::set<std::string> holdout(cfg.holdout.begin(), cfg.holdout.end());
  CalibrationOptions copt;
  copt.images = cfg.calibration_images;
  int tag = 0;
  for (auto attr : toyworld::kAllAttributes) {
    auto probe = fit_linear_probe(g, clf, attr, cfg.probe_samples, derive_seed(cfg.seed, ++tag));
    const std::string base(toyworld::attribute_name(attr));
    auto w = sample_w(g, 2000, derive_seed(cfg.seed, 1000 + tag)).to(torch::kFloat64);
    const double spread = torch::matmul(w, probe.direction.vector).std().item<double>();
    for (bool positive : {true, false}) {
      EditingDirection d = probe.direction;
      d.name = base + (positive ? "+" : "-");
      d.target_presence = positive;
      if (!positive) d.vector = -d.vector;
      const double p = calibrate_powers(d, g, e, clf, calibration_images, calibration_presence, spread, copt);
      if (report) {
        report->probe_heldout_accuracy[d.name] = probe.heldout_accuracy;
        report->calibrated_power[d.name] = p;
      }
      reg.add(std::move(d), holdout.count(base + (positive ? "+" : "-")) != 0);
    }
  }
  auto pca = fit_pca_directions(g, cfg.pca_samples, cfg.pca_components, derive_seed(cfg.seed, 999));
  for (std::size_t i = 0; i < pca.components.size(); ++i) {
    auto d = pca.components[i];
    const double p = calibrate_powers(d, g, e, clf, calibration_images, calibration_presence,
                                      std::sqrt(pca.variances[i]), copt);
    if (report) report->calibrated_power[d.name] = p;
    const bool h = holdout.count(d.name) != 0;
    reg.add(std::move(d), h);
  }
  reg.set_small_set(cfg.small_set);
  return reg;
}

}  // namespace sfe::directions
