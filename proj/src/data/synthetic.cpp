#include "ahmsa/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "ahmsa/data/emotion.hpp"
#include "ahmsa/errors.hpp"

namespace ahmsa::data {

namespace {

// Draws are built from raw mt19937_64 output so files are identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  double normal() {
    const double u1 = 1.0 - unit();  // (0, 1]
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct Wave {
  double kx, ky, phase, amp;
};

void add_waves(Rng& rng, std::vector<Wave>& waves, std::size_t count, double amp_scale,
               double image_size) {
  for (std::size_t i = 0; i < count; ++i) {
    const double wavelength = rng.uniform(0.09, 0.25) * image_size;
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double k = 2.0 * std::numbers::pi / wavelength;
    waves.push_back({k * std::cos(angle), k * std::sin(angle),
                     rng.uniform(0.0, 2.0 * std::numbers::pi), amp_scale * rng.uniform(0.5, 1.0)});
  }
}

struct Texture {
  std::vector<Wave> waves;
  double offset = 0.5;
  double gain = 0.0;

  double operator()(double x, double y) const {
    double s = 0.0;
    for (const auto& w : waves) s += w.amp * std::cos(w.kx * x + w.ky * y + w.phase);
    return offset + gain * s;
  }
};

struct Motion {
  double cx, cy, dx, dy;
};

optflow::LandmarkSet base_landmarks(double size, Rng& rng) {
  auto place = [&](double fx, double fy) {
    return optflow::Point{static_cast<int>(std::lround(fx * size + rng.uniform(-2.0, 2.0))),
                          static_cast<int>(std::lround(fy * size + rng.uniform(-2.0, 2.0)))};
  };
  optflow::LandmarkSet l;
  l.left_eye = place(0.31, 0.33);
  l.right_eye = place(0.69, 0.33);
  l.nose = place(0.50, 0.54);
  l.left_lip = place(0.35, 0.75);
  l.right_lip = place(0.65, 0.75);
  return l;
}

optflow::GrayImage render(const Texture& tex, const std::vector<Motion>& motions, double sigma,
                          std::size_t size, double noise_sigma, Rng& noise) {
  optflow::GrayImage img(size, size);
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double px = static_cast<double>(x), py = static_cast<double>(y);
      // Backward warp: apex(p) = onset(p - d(p)), so content moves by d.
      double dx = 0.0, dy = 0.0;
      for (const auto& m : motions) {
        const double r2 = (px - m.cx) * (px - m.cx) + (py - m.cy) * (py - m.cy);
        const double w = std::exp(-r2 * inv_two_var);
        dx += w * m.dx;
        dy += w * m.dy;
      }
      const double v = tex(px - dx, py - dy) + noise_sigma * noise.normal();
      img.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return img;
}

const char* raw_label(int class_id, std::size_t variant) {
  static const char* negative[] = {"disgust", "sadness", "fear", "anger", "contempt"};
  switch (class_id) {
    case kNegative: return negative[variant % 5];
    case kPositive: return "happiness";
    default: return "surprise";
  }
}

}  // namespace

std::vector<std::string> SyntheticOptions::violations() const {
  std::vector<std::string> out;
  if (n_subjects < 2) out.emplace_back("n_subjects must be >= 2 (LOSO needs two subjects)");
  if (samples_per_subject < kNumClasses) {
    out.emplace_back("samples_per_subject must be >= 3 (one per class)");
  }
  if (image_size < 64) out.emplace_back("image_size must be >= 64");
  if (!(min_shift_px > 0.0) || !(max_shift_px >= min_shift_px)) {
    out.emplace_back("shift range must satisfy 0 < min_shift_px <= max_shift_px");
  }
  if (!(noise_sigma >= 0.0)) out.emplace_back("noise_sigma must be >= 0");
  return out;
}

SyntheticDataset gen_synthetic(const SyntheticOptions& options,
                               const std::filesystem::path& out_dir) {
  if (const auto bad = options.violations(); !bad.empty()) {
    std::string msg = "invalid synthetic options:";
    for (const auto& b : bad) msg += "\n  - " + b;
    throw ConfigError(msg);
  }
  const auto image_dir = out_dir / "images";
  std::error_code ec;
  std::filesystem::create_directories(image_dir, ec);
  if (ec) throw IoError("cannot create '" + image_dir.string() + "': " + ec.message());

  const double size = static_cast<double>(options.image_size);
  const double sigma = 0.075 * size;
  SyntheticDataset out;
  for (std::size_t s = 0; s < options.n_subjects; ++s) {
    char subject[16];
    std::snprintf(subject, sizeof subject, "sub%02zu", s + 1);
    Rng subject_rng(mix(options.seed, s));
    const auto landmarks = base_landmarks(size, subject_rng);
    Texture face;
    add_waves(subject_rng, face.waves, 10, 1.0, size);
    face.offset = subject_rng.uniform(0.45, 0.55);

    for (std::size_t k = 0; k < options.samples_per_subject; ++k) {
      Rng rng(mix(mix(options.seed, s), k + 1000));
      const int class_id = static_cast<int>(k % kNumClasses);
      Texture tex = face;
      add_waves(rng, tex.waves, 6, 0.5, size);
      double total = 0.0;
      for (const auto& w : tex.waves) total += w.amp;
      tex.gain = 0.35 / total;

      const double m = rng.uniform(options.min_shift_px, options.max_shift_px);
      std::vector<Motion> motions;
      auto at = [](optflow::Point p, double dx, double dy) {
        return Motion{static_cast<double>(p.x), static_cast<double>(p.y), dx, dy};
      };
      if (class_id == kSurprise) {
        motions = {at(landmarks.left_eye, -m, 0.0), at(landmarks.right_eye, m, 0.0)};
      } else {
        const double dy = class_id == kNegative ? m : -m;
        motions = {at(landmarks.left_lip, 0.0, dy), at(landmarks.right_lip, 0.0, dy)};
      }

      char sample_id[32];
      std::snprintf(sample_id, sizeof sample_id, "%s_%02zu", subject, k + 1);
      Sample sample;
      sample.database_id = "synth";
      sample.subject_id = subject;
      sample.sample_id = sample_id;
      sample.onset_path = std::filesystem::path("images") / (std::string(sample_id) + "_onset.pgm");
      sample.apex_path = std::filesystem::path("images") / (std::string(sample_id) + "_apex.pgm");
      sample.landmarks = landmarks;
      sample.emotion_raw = raw_label(class_id, k / kNumClasses);
      sample.class_id = class_id;

      optflow::write_pgm(out_dir / sample.onset_path,
                         render(tex, {}, sigma, options.image_size, options.noise_sigma, rng));
      optflow::write_pgm(out_dir / sample.apex_path,
                         render(tex, motions, sigma, options.image_size, options.noise_sigma, rng));
      out.samples.push_back(std::move(sample));
    }
  }

  out.manifest_path = out_dir / "manifest.csv";
  std::ofstream manifest(out.manifest_path);
  if (!manifest) throw IoError("cannot write '" + out.manifest_path.string() + "'");
  write_manifest(manifest, out.samples);
  if (!manifest) throw IoError("failed writing '" + out.manifest_path.string() + "'");
  return out;
}

}  // namespace ahmsa::data
