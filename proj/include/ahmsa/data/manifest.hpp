#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ahmsa/optflow/feature_map.hpp"

namespace ahmsa::data {

struct Sample {
  std::string database_id;
  std::string subject_id;
  std::string sample_id;
  std::filesystem::path onset_path;
  std::filesystem::path apex_path;
  optflow::LandmarkSet landmarks;
  std::string emotion_raw;
  int class_id = 0;
};

/// Immutable list of samples plus a subject_id -> sample indices index.
class DatasetManifest {
 public:
  /// Throws ValidationError on an empty list or duplicate sample ids.
  explicit DatasetManifest(std::vector<Sample> samples);

  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  /// Ordered by subject_id; indices ascending.
  const std::map<std::string, std::vector<std::size_t>>& subject_index() const {
    return subject_index_;
  }

 private:
  std::vector<Sample> samples_;
  std::map<std::string, std::vector<std::size_t>> subject_index_;
};

inline constexpr const char* kManifestHeader =
    "database,subject,sample,onset_path,apex_path,lx_eye,ly_eye,rx_eye,ry_eye,nx,ny,"
    "lx_lip,ly_lip,rx_lip,ry_lip,emotion";

/// Parses manifest CSV text. Relative image paths are resolved against
/// `base_dir`. Every bad row is reported (with its line number) in a single
/// ValidationError.
DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                               const std::string& source_name = "manifest");

/// Throws IoError if the file cannot be opened.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes samples as manifest CSV. Paths are written as given.
void write_manifest(std::ostream& out, const std::vector<Sample>& samples);

/// File stem used for extracted features: <database>_<subject>_<sample>.
std::string sample_key(const Sample& sample);

struct Fold {
  std::string held_out_subject;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// One fold per subject, ordered by subject_id. Throws ValidationError with
/// fewer than two subjects.
std::vector<Fold> loso_splits(const DatasetManifest& manifest);

}  // namespace ahmsa::data
