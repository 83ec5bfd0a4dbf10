#include "ahmsa/train/loso.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

#include "ahmsa/errors.hpp"

namespace ahmsa::train {

namespace {

struct FoldOutput {
  FoldRecord record;
  std::vector<int> predictions;  // aligned with the fold's test indices
};

std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t fold) {
  return seed ^ (0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(fold) + 1));
}

}  // namespace

void check_no_leakage(const data::DatasetManifest& manifest, const data::Fold& fold) {
  for (auto i : fold.train) {
    if (manifest[i].subject_id == fold.held_out_subject) {
      throw LeakageError("fold '" + fold.held_out_subject + "': training sample '" +
                         manifest[i].sample_id + "' belongs to the held-out subject");
    }
  }
  for (auto i : fold.test) {
    if (manifest[i].subject_id != fold.held_out_subject) {
      throw LeakageError("fold '" + fold.held_out_subject + "': test sample '" +
                         manifest[i].sample_id + "' belongs to subject '" +
                         manifest[i].subject_id + "'");
    }
  }
}

std::size_t resolve_fold_workers(std::size_t requested, std::size_t n_folds) {
  std::size_t workers = std::max<std::size_t>(requested, 1);
  if (const char* env = std::getenv("AHMSA_THREADS")) {
    std::size_t cap = 0;
    const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), cap);
    if (ec == std::errc() && *ptr == '\0' && cap > 0) workers = std::min(workers, cap);
  }
  return std::min(workers, std::max<std::size_t>(n_folds, 1));
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"shuffle", c.shuffle},
          {"log_every", c.log_every}};
}

MetricsReport run_loso(const data::DatasetManifest& manifest,
                       std::span<const optflow::FlowFeatureMap> maps,
                       const model::ModelConfig& model_config, const TrainConfig& train_config,
                       const LosoOptions& options) {
  if (maps.size() != manifest.size()) {
    throw ValidationError("run_loso got " + std::to_string(maps.size()) + " feature maps for " +
                          std::to_string(manifest.size()) + " samples");
  }
  model_config.validate();
  const auto folds = data::loso_splits(manifest);
  for (const auto& fold : folds) check_no_leakage(manifest, fold);

  std::vector<int> labels(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) labels[i] = manifest[i].class_id;

  std::mutex log_mutex;
  auto log = [&](const std::string& line) {
    if (!options.log) return;
    std::lock_guard lock(log_mutex);
    options.log(line);
  };

  std::vector<FoldOutput> outputs(folds.size());
  auto run_fold = [&](std::size_t f) {
    const auto& fold = folds[f];
    auto& out = outputs[f];
    out.record.subject = fold.held_out_subject;
    out.record.n_train = fold.train.size();
    out.record.n_test = fold.test.size();
    try {
      auto train_idx = fold.train;
      std::sort(train_idx.begin(), train_idx.end(), [&](std::size_t a, std::size_t b) {
        return manifest[a].sample_id < manifest[b].sample_id;
      });
      std::vector<optflow::FlowFeatureMap> train_maps, test_maps;
      std::vector<int> train_labels;
      for (auto i : train_idx) {
        train_maps.push_back(maps[i]);
        train_labels.push_back(labels[i]);
      }
      for (auto i : fold.test) test_maps.push_back(maps[i]);

      TrainConfig cfg = train_config;
      cfg.seed = shuffle_seed(train_config.seed, f);
      const std::string tag = "[fold " + fold.held_out_subject + "] ";
      log(tag + "training on " + std::to_string(train_maps.size()) + " samples, testing on " +
          std::to_string(test_maps.size()));
      auto result = train_fold(train_maps, train_labels,
                               model::init_model<float>(model_config, train_config.seed ^ f), cfg,
                               [&](const std::string& line) { log(tag + line); });
      out.record.loss_history = std::move(result.loss_history);
      out.predictions = predict(result.params, test_maps, options.eval_batch);
    } catch (const std::exception& e) {
      out.record.error = e.what();
      out.predictions.clear();
      log("[fold " + fold.held_out_subject + "] failed: " + e.what());
    }
  };

  const std::size_t workers = resolve_fold_workers(options.parallel_folds, folds.size());
  if (workers <= 1) {
    for (std::size_t f = 0; f < folds.size(); ++f) run_fold(f);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f = next++; f < folds.size(); f = next++) run_fold(f);
      });
    }
    for (auto& t : pool) t.join();
  }

  // Merge in fold order; the result does not depend on scheduling.
  MetricsReport report;
  data::ConfusionMatrix pooled(model_config.n_classes);
  std::map<std::string, data::ConfusionMatrix> per_db;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    auto& out = outputs[f];
    if (out.record.ok()) {
      for (std::size_t k = 0; k < folds[f].test.size(); ++k) {
        const auto& sample = manifest[folds[f].test[k]];
        data::confusion_accumulate(pooled, sample.class_id, out.predictions[k]);
        auto it = per_db.try_emplace(sample.database_id, model_config.n_classes).first;
        data::confusion_accumulate(it->second, sample.class_id, out.predictions[k]);
      }
    }
    report.folds.push_back(std::move(out.record));
  }
  report.pooled = summarize(pooled);
  for (const auto& [db, m] : per_db) report.per_database.emplace(db, summarize(m));
  report.config = {{"model", model::to_json(model_config)}, {"train", to_json(train_config)}};
  return report;
}

}  // namespace ahmsa::train
