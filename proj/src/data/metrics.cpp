#include "ahmsa/data/metrics.hpp"

#include <limits>
#include <numeric>

#include "ahmsa/errors.hpp"

namespace ahmsa::data {

ConfusionMatrix::ConfusionMatrix(std::size_t n_classes)
    : n_(n_classes), counts_(n_classes * n_classes, 0) {
  if (n_classes == 0) throw ValidationError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix m(rows.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t].size() != rows.size()) throw ValidationError("confusion matrix must be square");
    for (std::size_t p = 0; p < rows.size(); ++p) m.counts_[t * m.n_ + p] = rows[t][p];
  }
  return m;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += at(c, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < n_; ++t) s += at(t, c);
  return s;
}

std::vector<std::vector<std::uint64_t>> ConfusionMatrix::rows() const {
  std::vector<std::vector<std::uint64_t>> out(n_);
  for (std::size_t t = 0; t < n_; ++t) {
    out[t].assign(counts_.begin() + static_cast<std::ptrdiff_t>(t * n_),
                  counts_.begin() + static_cast<std::ptrdiff_t>((t + 1) * n_));
  }
  return out;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.n_ != n_) {
    throw ValidationError("cannot add a " + std::to_string(other.n_) + "-class matrix to a " +
                          std::to_string(n_) + "-class matrix");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

void confusion_accumulate(ConfusionMatrix& matrix, int truth, int predicted) {
  const auto n = static_cast<int>(matrix.n_);
  if (truth < 0 || truth >= n || predicted < 0 || predicted >= n) {
    throw ValidationError("class pair (" + std::to_string(truth) + ", " +
                          std::to_string(predicted) + ") out of range for " + std::to_string(n) +
                          " classes");
  }
  ++matrix.counts_[static_cast<std::size_t>(truth) * matrix.n_ + static_cast<std::size_t>(predicted)];
}

double uf1(const ConfusionMatrix& m, std::vector<std::string>* warnings) {
  double sum = 0.0;
  for (std::size_t c = 0; c < m.n_classes(); ++c) {
    const double tp = static_cast<double>(m.at(c, c));
    const double fp = static_cast<double>(m.col_sum(c)) - tp;
    const double fn = static_cast<double>(m.row_sum(c)) - tp;
    const double denom = 2.0 * tp + fp + fn;
    if (denom == 0.0) {
      if (warnings) warnings->push_back("uf1: class " + std::to_string(c) + " has TP=FP=FN=0, F1 set to 0");
      continue;
    }
    sum += 2.0 * tp / denom;
  }
  return sum / static_cast<double>(m.n_classes());
}

double uar(const ConfusionMatrix& m, std::vector<std::string>* warnings) {
  double sum = 0.0;
  std::size_t populated = 0;
  for (std::size_t c = 0; c < m.n_classes(); ++c) {
    const auto n = m.row_sum(c);
    if (n == 0) {
      if (warnings) warnings->push_back("uar: class " + std::to_string(c) + " has no samples, excluded");
      continue;
    }
    sum += static_cast<double>(m.at(c, c)) / static_cast<double>(n);
    ++populated;
  }
  return populated == 0 ? 0.0 : sum / static_cast<double>(populated);
}

std::vector<double> per_class_accuracy(const ConfusionMatrix& m) {
  std::vector<double> out(m.n_classes(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < m.n_classes(); ++c) {
    const auto n = m.row_sum(c);
    if (n > 0) out[c] = static_cast<double>(m.at(c, c)) / static_cast<double>(n);
  }
  return out;
}

}  // namespace ahmsa::data
