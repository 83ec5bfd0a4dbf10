#include "ahmsa/data/manifest.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "ahmsa/data/emotion.hpp"
#include "ahmsa/errors.hpp"

namespace ahmsa::data {

namespace {

constexpr std::size_t kFields = 16;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int parse_coord(const std::string& text, const char* column) {
  int value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ValidationError(std::string(column) + " '" + text + "' is not an integer");
  }
  if (value < 0) throw ValidationError(std::string(column) + " must be non-negative");
  return value;
}

Sample parse_row(const std::vector<std::string>& f, const std::filesystem::path& base_dir) {
  Sample s;
  s.database_id = f[0];
  s.subject_id = f[1];
  s.sample_id = f[2];
  for (std::size_t i = 0; i < 5; ++i) {
    if (f[i].empty()) {
      static const char* names[] = {"database", "subject", "sample", "onset_path", "apex_path"};
      throw ValidationError(std::string(names[i]) + " is empty");
    }
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  s.onset_path = resolve(f[3]);
  s.apex_path = resolve(f[4]);
  s.landmarks.left_eye = {parse_coord(f[5], "lx_eye"), parse_coord(f[6], "ly_eye")};
  s.landmarks.right_eye = {parse_coord(f[7], "rx_eye"), parse_coord(f[8], "ry_eye")};
  s.landmarks.nose = {parse_coord(f[9], "nx"), parse_coord(f[10], "ny")};
  s.landmarks.left_lip = {parse_coord(f[11], "lx_lip"), parse_coord(f[12], "ly_lip")};
  s.landmarks.right_lip = {parse_coord(f[13], "rx_lip"), parse_coord(f[14], "ry_lip")};
  s.emotion_raw = f[15];
  s.class_id = map_emotion(f[15]);
  return s;
}

}  // namespace

DatasetManifest::DatasetManifest(std::vector<Sample> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw ValidationError("manifest has no samples");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!seen.insert(samples_[i].sample_id).second) {
      throw ValidationError("duplicate sample id '" + samples_[i].sample_id + "'");
    }
    subject_index_[samples_[i].subject_id].push_back(i);
  }
}

DatasetManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                               const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> errors;
  auto fail = [&](std::size_t n, const std::string& what) {
    errors.push_back(source_name + ":" + std::to_string(n) + ": " + what);
  };

  if (!std::getline(in, line)) throw ValidationError(source_name + ": no samples (file is empty)");
  ++line_no;
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  if (trim(line) != kManifestHeader) {
    throw ValidationError(source_name + ":1: header must be '" + std::string(kManifestHeader) +
                          "'");
  }

  std::vector<Sample> samples;
  std::vector<std::size_t> sample_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != kFields) {
      fail(line_no, "expected " + std::to_string(kFields) + " fields, found " +
                        std::to_string(fields.size()) + " (paths may not contain commas)");
      continue;
    }
    try {
      samples.push_back(parse_row(fields, base_dir));
      sample_lines.push_back(line_no);
    } catch (const ValidationError& e) {
      fail(line_no, e.what());
    }
  }

  std::map<std::string, std::size_t> first_line;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto [it, inserted] = first_line.emplace(samples[i].sample_id, sample_lines[i]);
    if (!inserted) {
      fail(sample_lines[i], "duplicate sample id '" + samples[i].sample_id +
                                "' (first seen on line " + std::to_string(it->second) + ")");
    }
  }
  if (errors.empty() && samples.empty()) errors.push_back(source_name + ": no samples");
  if (!errors.empty()) {
    std::string msg = errors.front();
    for (std::size_t i = 1; i < errors.size(); ++i) msg += "\n" + errors[i];
    throw ValidationError(msg);
  }
  return DatasetManifest(std::move(samples));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  return parse_manifest(in, path.parent_path(), path.string());
}

void write_manifest(std::ostream& out, const std::vector<Sample>& samples) {
  out << kManifestHeader << '\n';
  for (const auto& s : samples) {
    const auto& l = s.landmarks;
    out << s.database_id << ',' << s.subject_id << ',' << s.sample_id << ','
        << s.onset_path.generic_string() << ',' << s.apex_path.generic_string() << ','
        << l.left_eye.x << ',' << l.left_eye.y << ',' << l.right_eye.x << ',' << l.right_eye.y
        << ',' << l.nose.x << ',' << l.nose.y << ',' << l.left_lip.x << ',' << l.left_lip.y << ','
        << l.right_lip.x << ',' << l.right_lip.y << ',' << s.emotion_raw << '\n';
  }
}

std::string sample_key(const Sample& sample) {
  return sample.database_id + "_" + sample.subject_id + "_" + sample.sample_id;
}

std::vector<Fold> loso_splits(const DatasetManifest& manifest) {
  const auto& index = manifest.subject_index();
  if (index.size() < 2) {
    throw ValidationError("LOSO needs at least 2 subjects, manifest has " +
                          std::to_string(index.size()));
  }
  std::vector<Fold> folds;
  for (const auto& [subject, test] : index) {
    Fold fold;
    fold.held_out_subject = subject;
    fold.test = test;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      if (manifest[i].subject_id != subject) fold.train.push_back(i);
    }
    folds.push_back(std::move(fold));
  }
  return folds;
}

}  // namespace ahmsa::data
