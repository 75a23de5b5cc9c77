#include "sfe/classifier.hpp"

#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace sfe::objectives {

AttributeClassifierImpl::AttributeClassifierImpl(const ClassifierConfig& cfg) : cfg_(cfg) {
  if (cfg.stage_channels.empty()) throw InvalidInput("classifier needs at least one stage");
  auto gen = nn::make_generator(cfg.init_seed);
  int cin = 3;
  for (std::size_t i = 0; i < cfg.stage_channels.size(); ++i) {
    const int cout = cfg.stage_channels[i];
    stages_.push_back(register_module("stage" + std::to_string(i), nn::Conv2d(cin, cout, 3, 2, gen)));
    cin = cout;
  }
  embed_ = register_module("embed", nn::Linear(cin, cfg.embedding_dim, gen));
  logits_ = register_module("logits", nn::Linear(cfg.embedding_dim, toyworld::kNumAttributes, gen));
  values_ = register_module("values", nn::Linear(cfg.embedding_dim, toyworld::kNumAttributes, gen));
}

ClassifierOutput AttributeClassifierImpl::forward(const torch::Tensor& images) {
  const int r = cfg_.image_resolution;
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != r || images.size(3) != r) {
    throw InvalidInput("classifier expects [B, 3, " + std::to_string(r) + ", " + std::to_string(r) + "]");
  }
  ClassifierOutput out;
  auto h = images;
  for (auto& s : stages_) {
    h = nn::leaky_relu(s->forward(h));
    out.stages.push_back(h);
  }
  out.embedding = embed_->forward(h.mean({2, 3}));
  auto a = nn::leaky_relu(out.embedding);
  out.logits = logits_->forward(a);
  out.values = values_->forward(a);
  return out;
}

torch::Tensor AttributeClassifierImpl::presence_probability(const torch::Tensor& images) {
  return torch::sigmoid(forward(images).logits);
}

namespace {

torch::Tensor augment(const torch::Tensor& x, at::Generator& gen) {
  const auto b = x.size(0);
  auto blurred = torch::avg_pool2d(torch::replication_pad2d(x, {1, 1, 1, 1}), 3, 1);
  auto pick = (torch::rand({b, 1, 1, 1}, gen) < 0.5).to(x.dtype());
  auto y = pick * blurred + (1 - pick) * x;
  return y + torch::randn(x.sizes(), gen) * 0.03;
}

}  // namespace

ClassifierReport train_classifier(AttributeClassifier& net,
                                  std::span<const toyworld::LabeledImage> train,
                                  std::span<const toyworld::LabeledImage> test,
                                  const ClassifierTrainConfig& cfg) {
  if (train.empty()) throw InvalidInput("classifier training set is empty");
  auto gen = nn::make_generator(cfg.seed);
  const auto images = toyworld::stack_pixels(train);
  const auto labels = toyworld::presence_labels(train);
  const auto values = toyworld::attribute_values(train);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.lr));
  net->train();
  ClassifierReport report;
  for (int step = 0; step < cfg.steps; ++step) {
    auto idx = torch::randint(static_cast<long>(train.size()), {cfg.batch_size}, gen);
    auto x = augment(images.index_select(0, idx), gen);
    auto out = net->forward(x);
    auto loss = torch::binary_cross_entropy_with_logits(out.logits, labels.index_select(0, idx)) +
                torch::mse_loss(out.values, values.index_select(0, idx));
    opt.zero_grad();
    loss.backward();
    opt.step();
    report.final_loss = loss.item<double>();
    if (!std::isfinite(report.final_loss)) throw TrainingDiverged("classifier loss is not finite");
  }
  net->eval();
  report.test_accuracy.assign(toyworld::kNumAttributes, 0.0);
  if (!test.empty()) {
    torch::NoGradGuard ng;
    const auto tx = toyworld::stack_pixels(test);
    const auto ty = toyworld::presence_labels(test);
    auto pred = (net->presence_probability(tx) > 0.5).to(torch::kFloat32);
    auto acc = (pred == ty).to(torch::kFloat64).mean(0);
    for (int a = 0; a < toyworld::kNumAttributes; ++a) report.test_accuracy[a] = acc[a].item<double>();
  }
  return report;
}

}  // namespace sfe::objectives
