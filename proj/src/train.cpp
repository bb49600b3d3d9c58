#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sopt/data.hpp"
#include "sopt/rng.hpp"

namespace sopt {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch_size must be positive");
  if (!(learning_rate > 0) || !(momentum >= 0 && momentum < 1)) throw ConfigError("train: invalid learning rate or momentum");
  if (!(validation_fraction > 0 && validation_fraction < 1)) throw ConfigError("train: validation_fraction must be in (0, 1)");
}

Tensor stack_images(const std::vector<const Tensor*>& images) {
  if (images.empty()) throw ShapeError("stack_images: no images");
  const Shape& shape = images.front()->shape();
  if (shape.size() != 3) throw ShapeError("stack_images: images must be C x H x W");
  std::vector<float> data;
  data.reserve(images.size() * images.front()->numel());
  for (const Tensor* t : images) {
    if (t->shape() != shape) throw ShapeError("stack_images: mixed shapes " + shape_str(shape) + " and " + shape_str(t->shape()));
    data.insert(data.end(), t->vec().begin(), t->vec().end());
  }
  return Tensor({images.size(), shape[0], shape[1], shape[2]}, std::move(data));
}

std::size_t argmax_row(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

namespace {

constexpr std::size_t kEvalBatch = 64;

struct BatchStats {
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

BatchStats forward_batch(const RecognitionNet& net, const std::vector<LabeledImage>& data,
                         std::span<const std::size_t> idx) {
  std::vector<const Tensor*> imgs;
  std::vector<std::size_t> labels;
  for (auto i : idx) {
    imgs.push_back(&data[i].image);
    labels.push_back(data[i].label);
  }
  Tape tape;
  const auto taped = forward_on_tape(net, tape.constant(stack_images(imgs)));
  const auto xent = softmax_cross_entropy(taped.logits(), labels);
  BatchStats s;
  s.loss_sum = static_cast<double>(xent.loss.value()[0]) * static_cast<double>(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r)
    if (argmax_row(xent.probs.data().subspan(r * net.classes, net.classes)) == labels[r]) ++s.correct;
  return s;
}

double accuracy_on(const RecognitionNet& net, const std::vector<LabeledImage>& data, const std::vector<std::size_t>& idx) {
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += kEvalBatch) {
    const std::size_t end = std::min(idx.size(), start + kEvalBatch);
    correct += forward_batch(net, data, std::span(idx).subspan(start, end - start)).correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(RecognitionNet net, const std::vector<LabeledImage>& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  for (const auto& item : data) {
    if (item.label >= net.classes) throw ShapeError("train: label " + std::to_string(item.label) + " out of range");
    validate_images(net, item.image.reshaped({1, item.image.dim(0), item.image.dim(1), item.image.dim(2)}));
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(derive_seed(cfg.seed, seed_tag::kSplit));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(data.size()) * cfg.validation_fraction));
  if (n_val >= data.size()) throw ConfigError("train: validation split leaves no training data");
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> trn(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  TrainResult result;
  {
    double total = 0.0;
    for (std::size_t start = 0; start < trn.size(); start += kEvalBatch) {
      const std::size_t end = std::min(trn.size(), start + kEvalBatch);
      total += forward_batch(net, data, std::span(trn).subspan(start, end - start)).loss_sum;
    }
    result.initial_loss = total / static_cast<double>(trn.size());
  }

  std::vector<std::vector<std::vector<double>>> velocity(net.params.size());
  for (std::size_t l = 0; l < net.params.size(); ++l)
    for (const auto& p : net.params[l]) velocity[l].emplace_back(p.numel(), 0.0);

  const std::uint64_t shuffle_stream = derive_seed(cfg.seed, seed_tag::kShuffle);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(item_seed(shuffle_stream, epoch));
    std::shuffle(trn.begin(), trn.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    try {
      for (std::size_t start = 0; start < trn.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(trn.size(), start + cfg.batch_size);
        std::vector<const Tensor*> imgs;
        std::vector<std::size_t> labels;
        for (std::size_t i = start; i < end; ++i) {
          imgs.push_back(&data[trn[i]].image);
          labels.push_back(data[trn[i]].label);
        }
        Tape tape;
        const auto taped = forward_on_tape(net, tape.constant(stack_images(imgs)), /*trainable=*/true);
        const auto xent = softmax_cross_entropy(taped.logits(), labels);
        tape.backward(xent.loss);
        loss_sum += static_cast<double>(xent.loss.value()[0]) * static_cast<double>(labels.size());
        for (std::size_t r = 0; r < labels.size(); ++r)
          if (argmax_row(xent.probs.data().subspan(r * net.classes, net.classes)) == labels[r]) ++correct;
        for (std::size_t l = 0; l < net.params.size(); ++l)
          for (std::size_t k = 0; k < net.params[l].size(); ++k) {
            const Tensor g = tape.grad(taped.params[l][k]);
            auto& v = velocity[l][k];
            auto p = net.params[l][k].data();
            for (std::size_t j = 0; j < p.size(); ++j) {
              v[j] = cfg.momentum * v[j] + static_cast<double>(g[j]);
              p[j] = static_cast<float>(p[j] - cfg.learning_rate * v[j]);
            }
            net.params[l][k].check_finite("parameter update");
          }
      }
    } catch (const NumericError& e) {
      throw DivergenceError(epoch, "training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    if (!std::isfinite(loss_sum)) throw DivergenceError(epoch, "training diverged in epoch " + std::to_string(epoch));
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(trn.size());
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(trn.size());
    try {
      if (!val.empty()) m.validation_accuracy = accuracy_on(net, data, val);
    } catch (const NumericError& e) {
      throw DivergenceError(epoch, "training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
    }
    result.epochs.push_back(m);
  }
  result.net = std::move(net);
  return result;
}

std::vector<std::size_t> predict(const RecognitionNet& net, const std::vector<Tensor>& images) {
  std::vector<std::size_t> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kEvalBatch) {
    const std::size_t end = std::min(images.size(), start + kEvalBatch);
    std::vector<const Tensor*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&images[i]);
    const auto rec = forward(net, stack_images(batch));
    for (std::size_t r = 0; r < batch.size(); ++r)
      out.push_back(argmax_row(rec.logits.data().subspan(r * net.classes, net.classes)));
  }
  return out;
}

EvalResult evaluate_predictions(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& labels,
                                std::size_t classes) {
  if (predicted.empty()) throw ConfigError("evaluate: empty data");
  if (predicted.size() != labels.size()) throw ShapeError("evaluate: prediction/label count mismatch");
  EvalResult r;
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t trace = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predicted[i] >= classes) throw ShapeError("evaluate: class index out of range");
    ++r.confusion[labels[i]][predicted[i]];
    if (labels[i] == predicted[i]) ++trace;
  }
  r.accuracy = static_cast<double>(trace) / static_cast<double>(labels.size());
  return r;
}

EvalResult evaluate(const RecognitionNet& net, const std::vector<LabeledImage>& data) {
  if (data.empty()) throw ConfigError("evaluate: empty data");
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  for (const auto& item : data) {
    images.push_back(item.image);
    labels.push_back(item.label);
  }
  return evaluate_predictions(predict(net, images), labels, net.classes);
}

Agreement cross_net_agreement(const RecognitionNet& a, const RecognitionNet& b, const std::vector<Tensor>& images) {
  if (a.class_names != b.class_names) throw ConfigError("cross_net_agreement: nets have different class sets");
  if (images.empty()) throw ConfigError("cross_net_agreement: no images");
  const auto pa = predict(a, images), pb = predict(b, images);
  Agreement out;
  std::size_t same = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    out.top1.emplace_back(pa[i], pb[i]);
    if (pa[i] == pb[i]) ++same;
  }
  out.rate = static_cast<double>(same) / static_cast<double>(images.size());
  return out;
}

}  // namespace sopt
