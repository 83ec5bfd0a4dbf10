#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ahmsa/data/metrics.hpp"

namespace ahmsa::train {

struct MetricsSummary {
  data::ConfusionMatrix confusion;
  double uf1 = 0.0;
  double uar = 0.0;
  std::vector<double> per_class_accuracy;  // NaN for classes without samples
  std::vector<std::string> warnings;
};

/// Computes every score from the matrix alone.
MetricsSummary summarize(const data::ConfusionMatrix& confusion);

struct FoldRecord {
  std::string subject;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<double> loss_history;
  std::string error;  // empty when the fold completed

  bool ok() const { return error.empty(); }
};

struct MetricsReport {
  MetricsSummary pooled;
  std::map<std::string, MetricsSummary> per_database;
  std::vector<FoldRecord> folds;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

/// {"pooled", "per_database", "history": {"fold_<subject>": [...]}, "folds",
///  "failures", "config"}. Scores are recomputed from the matrices on load.
nlohmann::ordered_json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::ordered_json& j);

std::vector<std::string> class_names(std::size_t n_classes);

/// Header row of predicted classes, one row per true class.
std::string confusion_csv(const data::ConfusionMatrix& m);

/// Heatmap with counts and row-normalized percentages per cell.
std::string confusion_svg(const data::ConfusionMatrix& m, const std::string& title);

/// Writes metrics.json, confusion_pooled.{csv,svg} and confusion_<database>.csv.
/// Throws IoError on failure.
void write_report(const MetricsReport& report, const std::filesystem::path& out_dir);

MetricsReport read_report(const std::filesystem::path& metrics_json);

}  // namespace ahmsa::train
