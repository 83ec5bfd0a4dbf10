#include "ahmsa/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "ahmsa/errors.hpp"
#include "ahmsa/model/network.hpp"
#include "ahmsa/tensor/adam.hpp"

namespace ahmsa::train {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Fisher-Yates on raw engine output; std::shuffle is not specified bit-for-bit.
void shuffle_indices(std::vector<std::size_t>& idx, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> out;
  if (epochs < 1) out.emplace_back("epochs must be >= 1");
  if (batch_size < 1) out.emplace_back("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    out.emplace_back("learning_rate must be > 0");
  }
  return out;
}

void TrainConfig::validate() const {
  const auto bad = violations();
  if (bad.empty()) return;
  std::string msg = "invalid train config:";
  for (const auto& b : bad) msg += "\n  - " + b;
  throw ConfigError(msg);
}

TrainResult train_fold(std::span<const optflow::FlowFeatureMap> maps, std::span<const int> labels,
                       model::ModelParams<float> initial, const TrainConfig& config,
                       const LogFn& log) {
  if (maps.empty()) throw ValidationError("train_fold needs at least one sample");
  if (maps.size() != labels.size()) {
    throw ValidationError("train_fold got " + std::to_string(maps.size()) + " maps but " +
                          std::to_string(labels.size()) + " labels");
  }
  if (config.epochs < 1 || config.batch_size < 1) {
    throw ConfigError("epochs and batch_size must be >= 1");
  }
  const auto n_classes = static_cast<int>(initial.config.n_classes);
  for (int label : labels) {
    if (label < 0 || label >= n_classes) {
      throw ValidationError("label " + std::to_string(label) + " out of range");
    }
  }

  TrainResult result{std::move(initial), {}};
  auto params = result.params.parameters();
  auto adam = AdamState<float>::for_params(params, config.learning_rate);
  // Validates every map's size once up front.
  const auto all_inputs = model::make_input_batch<float>(maps, result.params.config);
  const std::size_t per_sample = all_inputs.numel() / maps.size();
  const auto input_shape = all_inputs.shape();

  std::vector<std::size_t> order(maps.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      std::iota(order.begin(), order.end(), 0);
      shuffle_indices(order, mix(config.seed, epoch));
    }
    double loss_sum = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      std::vector<float> data(count * per_sample);
      std::vector<int> batch_labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(all_inputs.data().begin() + static_cast<std::ptrdiff_t>(src * per_sample),
                    per_sample, data.begin() + static_cast<std::ptrdiff_t>(i * per_sample));
        batch_labels[i] = labels[src];
      }
      Shape shape = input_shape;
      shape[0] = count;
      const auto input = Tensor::from_data(std::move(shape), std::move(data));

      for (auto* p : params) p->zero_grad();
      const auto loss = ops::cross_entropy(model::forward(input, result.params), batch_labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss " + format_double(value) + " at epoch " +
                             std::to_string(epoch + 1) + ", batch " + std::to_string(batch + 1));
      }
      loss.backward();
      adam_step<float>(params, adam);
      loss_sum += value * static_cast<double>(count);
    }
    result.loss_history.push_back(loss_sum / static_cast<double>(maps.size()));
    if (log && config.log_every > 0 && ((epoch + 1) % config.log_every == 0 || epoch == 0)) {
      log("epoch " + std::to_string(epoch + 1) + "/" + std::to_string(config.epochs) +
          " loss " + format_double(result.loss_history.back()));
    }
  }
  return result;
}

std::vector<int> predict(const model::ModelParams<float>& params,
                         std::span<const optflow::FlowFeatureMap> maps, std::size_t batch_size) {
  if (maps.empty()) throw ValidationError("cannot evaluate an empty sample set");
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::vector<int> out;
  out.reserve(maps.size());
  for (std::size_t start = 0; start < maps.size(); start += batch_size) {
    const auto chunk = maps.subspan(start, std::min(batch_size, maps.size() - start));
    const auto logits = model::forward(chunk, params);
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      int best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        if (logits.at(i * k + c) > logits.at(i * k + static_cast<std::size_t>(best))) {
          best = static_cast<int>(c);
        }
      }
      out.push_back(best);
    }
  }
  return out;
}

data::ConfusionMatrix evaluate(const model::ModelParams<float>& params,
                               std::span<const optflow::FlowFeatureMap> maps,
                               std::span<const int> labels, std::size_t batch_size) {
  if (maps.size() != labels.size()) {
    throw ValidationError("evaluate got " + std::to_string(maps.size()) + " maps but " +
                          std::to_string(labels.size()) + " labels");
  }
  const auto predictions = predict(params, maps, batch_size);
  data::ConfusionMatrix matrix(params.config.n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    data::confusion_accumulate(matrix, labels[i], predictions[i]);
  }
  return matrix;
}

}  // namespace ahmsa::train
