#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace ahmsa::data {

/// Square count matrix: rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes = 3);
  /// Throws ValidationError unless `rows` is square and non-empty.
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows);

  std::size_t n_classes() const { return n_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * n_ + predicted];
  }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t c) const;
  std::uint64_t col_sum(std::size_t c) const;
  std::vector<std::vector<std::uint64_t>> rows() const;

  /// Element-wise sum. Throws ValidationError on a class-count mismatch.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  friend void confusion_accumulate(ConfusionMatrix&, int, int);
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

/// Increments M[truth][predicted]. Throws ValidationError for an out-of-range class.
void confusion_accumulate(ConfusionMatrix& matrix, int truth, int predicted);

/// Macro F1: mean over classes of 2TP / (2TP + FP + FN). A class with
/// TP = FP = FN = 0 scores 0 and a warning is appended to `warnings`.
double uf1(const ConfusionMatrix& matrix, std::vector<std::string>* warnings = nullptr);

/// Unweighted average recall: mean over populated classes of TP / n_c. Empty
/// classes are excluded with a warning; an all-empty matrix scores 0.
double uar(const ConfusionMatrix& matrix, std::vector<std::string>* warnings = nullptr);

/// Recall per class; an empty class yields NaN.
std::vector<double> per_class_accuracy(const ConfusionMatrix& matrix);

}  // namespace ahmsa::data
