#pragma once

#include <span>
#include <string>
#include <vector>

#include "ahmsa/data/manifest.hpp"
#include "ahmsa/model/config.hpp"
#include "ahmsa/train/report.hpp"
#include "ahmsa/train/trainer.hpp"

namespace ahmsa::train {

struct LosoOptions {
  std::size_t parallel_folds = 1;  // further capped by AHMSA_THREADS
  std::size_t eval_batch = 64;
  LogFn log;
};

/// Throws LeakageError if any training index belongs to the held-out subject
/// or any test index belongs to another subject.
void check_no_leakage(const data::DatasetManifest& manifest, const data::Fold& fold);

/// Worker count for `requested` parallel folds: at least 1, at most n_folds,
/// and at most AHMSA_THREADS when that variable holds a positive integer.
std::size_t resolve_fold_workers(std::size_t requested, std::size_t n_folds);

/// Leave-one-subject-out evaluation. maps[i] is the feature map of manifest
/// sample i. Each fold re-initializes the model with seed (train.seed XOR fold
/// index) and trains on the other subjects' samples, visited in sample_id
/// order so that manifest row order does not matter. A fold that throws is
/// recorded as failed and the remaining folds still run; leakage is checked
/// for every fold before any training and is always fatal.
MetricsReport run_loso(const data::DatasetManifest& manifest,
                       std::span<const optflow::FlowFeatureMap> maps,
                       const model::ModelConfig& model_config, const TrainConfig& train_config,
                       const LosoOptions& options = {});

nlohmann::ordered_json to_json(const TrainConfig& config);

}  // namespace ahmsa::train
