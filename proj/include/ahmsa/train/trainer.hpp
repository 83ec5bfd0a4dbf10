#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ahmsa/data/metrics.hpp"
#include "ahmsa/model/params.hpp"
#include "ahmsa/optflow/feature_map.hpp"

namespace ahmsa::train {

/// Defaults are the full-scale schedule: 800 epochs, Adam lr 5e-6, batch 256.
struct TrainConfig {
  std::size_t epochs = 800;
  double learning_rate = 5e-6;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::size_t log_every = 0;  // epochs between progress lines; 0 disables

  std::vector<std::string> violations() const;
  /// Throws ConfigError listing every violation.
  void validate() const;
};

using LogFn = std::function<void(const std::string&)>;

struct TrainResult {
  model::ModelParams<float> params;
  std::vector<double> loss_history;  // sample-weighted mean loss per epoch
};

/// Mini-batch Adam on cross-entropy, starting from `initial`. Each epoch
/// reshuffles with a generator seeded by (config.seed, epoch). A learning rate
/// of 0 is accepted and leaves the parameters unchanged. Throws NumericalError
/// naming epoch, batch and loss when the loss becomes non-finite.
TrainResult train_fold(std::span<const optflow::FlowFeatureMap> maps, std::span<const int> labels,
                       model::ModelParams<float> initial, const TrainConfig& config,
                       const LogFn& log = {});

/// Class with the largest logit; ties go to the lowest index.
std::vector<int> predict(const model::ModelParams<float>& params,
                         std::span<const optflow::FlowFeatureMap> maps,
                         std::size_t batch_size = 64);

/// Predicts every map and accumulates (label, prediction) pairs.
data::ConfusionMatrix evaluate(const model::ModelParams<float>& params,
                               std::span<const optflow::FlowFeatureMap> maps,
                               std::span<const int> labels, std::size_t batch_size = 64);

}  // namespace ahmsa::train
