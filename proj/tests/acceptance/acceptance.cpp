// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "ahmsa/cli/commands.hpp"
#include "ahmsa/data/manifest.hpp"
#include "ahmsa/data/metrics.hpp"
#include "ahmsa/errors.hpp"
#include "ahmsa/model/checkpoint.hpp"
#include "ahmsa/model/network.hpp"
#include "ahmsa/optflow/strain.hpp"
#include "ahmsa/optflow/tvl1.hpp"
#include "ahmsa/tensor/ops.hpp"
#include "ahmsa/train/loso.hpp"
#include "gradcheck.hpp"
#include "synthetic_texture.hpp"

using namespace ahmsa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------- gradients

TensorD weighted_sum(const TensorD& t, std::uint64_t seed) {
  TensorD w = testing::random_tensor(t.shape(), seed);
  w.set_requires_grad(false);
  return ops::sum(ops::mul(t, w));
}

Outcome gradient_suite() {
  using testing::grad_check;
  using testing::random_tensor;
  const auto start = std::chrono::steady_clock::now();
  double op_max = 0.0;
  std::size_t op_checks = 0;
  auto track = [&](const testing::GradCheckResult& r) {
    op_max = std::max(op_max, r.max_rel_error);
    op_checks += r.checked;
  };

  TensorD x = random_tensor({2, 3, 5, 5}, 1), k = random_tensor({4, 3, 3, 3}, 2),
          b = random_tensor({4}, 3), k2 = random_tensor({2, 3, 3, 3}, 4);
  track(grad_check({&x, &k, &b}, [&] { return ops::sum(ops::conv2d(x, k, b, 1, 0)); }));
  track(grad_check({&x, &k2}, [&] { return weighted_sum(ops::conv2d(x, k2, TensorD{}, 2, 1), 5); }));

  TensorD ln_x = random_tensor({2, 6, 3, 3}, 25);
  auto ln = ops::LayerNormParams<double>::identity(6, true);
  ln.gamma = random_tensor({6}, 22);
  ln.beta = random_tensor({6}, 23);
  track(grad_check({&ln_x, &ln.gamma, &ln.beta},
                   [&] { return weighted_sum(ops::layer_norm(ln_x, ln, 1), 26); }));

  TensorD pool_x = random_tensor({2, 2, 5, 7}, 41);
  for (auto mode : {ops::PoolMode::kMax, ops::PoolMode::kAvg}) {
    track(grad_check({&pool_x},
                     [&] { return weighted_sum(ops::adaptive_pool(pool_x, 3, 4, mode), 42); }));
  }

  TensorD act = random_tensor({3, 4, 5}, 61);
  track(grad_check({&act}, [&] { return weighted_sum(ops::relu(act), 62); }));
  track(grad_check({&act}, [&] { return weighted_sum(ops::sigmoid(act), 63); }));
  for (std::size_t axis = 0; axis < 3; ++axis) {
    track(grad_check({&act}, [&] { return weighted_sum(ops::softmax(act, axis), 64 + axis); }));
  }

  TensorD ma = random_tensor({2, 3, 4, 5}, 91), mb = random_tensor({2, 3, 5, 2}, 92),
          mw = random_tensor({5, 3}, 93);
  track(grad_check({&ma, &mb}, [&] { return weighted_sum(ops::matmul(ma, mb), 94); }));
  track(grad_check({&ma, &mw}, [&] { return weighted_sum(ops::matmul(ma, mw), 95); }));

  TensorD logits = random_tensor({8, 3}, 101, -3.0, 3.0);
  const std::vector<int> labels = {0, 1, 2, 2, 1, 0, 0, 2};
  track(grad_check({&logits}, [&] { return ops::cross_entropy(logits, labels); }));

  TensorD ea = random_tensor({2, 3, 2, 2}, 111), eb = random_tensor({2, 3, 1, 1}, 112);
  track(grad_check({&ea, &eb}, [&] { return weighted_sum(ops::mul(ea, eb), 114); }));
  track(grad_check({&ea, &eb}, [&] { return weighted_sum(ops::add(ea, eb), 115); }));
  track(grad_check({&ea}, [&] { return weighted_sum(ops::scale(ea, 0.37), 117); }));
  track(grad_check({&ea}, [&] {
    return weighted_sum(ops::transpose_last2(ops::reshape(ea, {4, 3, 2})), 118);
  }));

  // Tiny network in double precision. ReLU biases are shifted into the linear
  // region so that no step of +/-1e-3 crosses a kink (see the ledger).
  model::ModelConfig tiny;
  tiny.h_flow = tiny.w_flow = 8;
  tiny.patch_size = 2;
  tiny.embed_channels = 6;
  tiny.heads = 3;
  tiny.blocks_per_layer = {1, 1, 1};
  auto p = model::init_model<double>(tiny, 61);
  std::mt19937_64 rng(63);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (auto* t : p.parameters()) {
    for (double& v : t->mutable_data()) v += jitter(rng);
  }
  for (auto& level : p.levels) {
    for (auto& blk : level) {
      for (double& v : blk.ca_reduce_b.mutable_data()) v += 3.0;
      for (double& v : blk.ffn_in_b.mutable_data()) v += 3.0;
    }
  }
  TensorD input = random_tensor({2, 3, 8, 8}, 64);
  input.set_requires_grad(false);
  const std::vector<int> net_labels = {0, 2};
  const auto net = grad_check(p.parameters(), [&] {
    return ops::cross_entropy(model::forward(input, p), net_labels);
  });

  const double elapsed = seconds_since(start);
  const bool pass = op_max < 1e-4 && net.max_rel_error < 1e-3 &&
                    net.checked == model::expected_parameter_count(tiny) && elapsed < 120.0;
  return {pass, "per-op max rel " + fmt("%.2e", op_max) + " over " + std::to_string(op_checks) +
                    " entries (< 1e-4), network max rel " + fmt("%.2e", net.max_rel_error) +
                    " over " + std::to_string(net.checked) + " params (< 1e-3), " +
                    fmt("%.1f", elapsed) + " s (< 120 s)"};
}

// --------------------------------------------------------------- flow/strain

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

double central_median_epe(const optflow::FlowField& f, double du, double dv) {
  const std::size_t my = f.height / 8, mx = f.width / 8;
  std::vector<double> epe;
  for (std::size_t y = my; y < f.height - my; ++y) {
    for (std::size_t x = mx; x < f.width - mx; ++x) {
      const std::size_t i = y * f.width + x;
      epe.push_back(std::hypot(f.u[i] - du, f.v[i] - dv));
    }
  }
  return median(epe);
}

Outcome flow_oracle() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::pair<double, double>> shifts = {{2.0, 0.0}, {0.0, -1.0}, {-3.0, 0.0}};
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi), mag(0.1, 3.0);
  for (int i = 0; i < 6; ++i) {
    const double a = ang(rng), m = mag(rng);
    shifts.emplace_back(m * std::cos(a), m * std::sin(a));
  }
  double worst_epe = 0.0;
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    testing::PeriodicTexture tex(64, 100 + static_cast<unsigned>(i));
    const auto [du, dv] = shifts[i];
    const auto f = optflow::tvl1_flow(tex.render(), tex.render(du, dv));
    worst_epe = std::max(worst_epe, central_median_epe(f, du, dv));
  }
  const auto img = testing::PeriodicTexture(64, 3).render();
  const auto still = optflow::tvl1_flow(img, img);
  double max_still = 0.0;
  for (std::size_t i = 0; i < still.u.size(); ++i) {
    max_still = std::max({max_still, double(std::abs(still.u[i])), double(std::abs(still.v[i]))});
  }
  const double elapsed = seconds_since(start);
  return {worst_epe < 0.3 && max_still < 0.05 && elapsed < 60.0,
          "worst median EPE " + fmt("%.3f", worst_epe) + " px over " +
              std::to_string(shifts.size()) + " shifts (< 0.3), identical frames max |flow| " +
              fmt("%.2e", max_still) + " px (< 0.05), " + fmt("%.1f", elapsed) + " s (< 60 s)"};
}

Outcome strain_oracle() {
  const std::size_t h = 9, w = 11;
  optflow::FlowField constant(h, w), stretch(h, w), shear(h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      constant.u[i] = 2.5f;
      constant.v[i] = -1.25f;
      stretch.u[i] = static_cast<float>(x);
      shear.u[i] = static_cast<float>(y);
      shear.v[i] = static_cast<float>(x);
    }
  }
  double max_const = 0.0, err_stretch = 0.0, err_shear = 0.0;
  for (float e : optflow::optical_strain(constant).os) max_const = std::max(max_const, double(e));
  const auto s1 = optflow::optical_strain(stretch).os, s2 = optflow::optical_strain(shear).os;
  for (std::size_t y = 1; y + 1 < h; ++y) {
    for (std::size_t x = 1; x + 1 < w; ++x) {
      err_stretch = std::max(err_stretch, std::abs(s1[y * w + x] - 1.0));
      err_shear = std::max(err_shear, std::abs(s2[y * w + x] - std::sqrt(2.0)));
    }
  }
  return {max_const == 0.0 && err_stretch <= 1e-6 && err_shear <= 1e-6,
          "constant flow max os " + fmt("%.1e", max_const) + " (== 0), u=x |os-1| " +
              fmt("%.1e", err_stretch) + ", u=y,v=x |os-sqrt2| " + fmt("%.1e", err_shear) +
              " (<= 1e-6)"};
}

// ------------------------------------------------------------------ metrics

Outcome metric_oracle() {
  const auto hand = data::ConfusionMatrix::from_rows({{2, 0}, {1, 1}});
  const auto perfect = data::ConfusionMatrix::from_rows({{4, 0, 0}, {0, 3, 0}, {0, 0, 5}});
  const double f = data::uf1(hand), r = data::uar(hand);
  const double f_err = std::abs(f - 11.0 / 15.0), r_err = std::abs(r - 0.75);
  const bool pass = f_err < 1e-12 && r_err < 1e-12 && data::uf1(perfect) == 1.0 &&
                    data::uar(perfect) == 1.0;
  return {pass, "[[2,0],[1,1]] UF1 " + fmt("%.12f", f) + " UAR " + fmt("%.12f", r) +
                    " (11/15, 0.75 within 1e-12), diagonal UF1 " + fmt("%.1f", data::uf1(perfect)) +
                    " UAR " + fmt("%.1f", data::uar(perfect))};
}

// -------------------------------------------------------------------- model

Tensor random_input(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> data(shape_numel(shape));
  for (float& v : data) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(data));
}

Outcome shape_suite() {
  const model::ModelConfig config;
  const auto p = model::init_model<float>(config, 43);
  model::ForwardTrace trace;
  const auto logits = model::forward(random_input({2, 3, 28, 28}, 9), p, &trace);
  const std::vector<Shape> expected = {
      {2, 3, 28, 28}, {2, 96, 4, 4}, {2, 96, 2, 2}, {2, 96, 1, 1}, {2, 3}};
  bool pass = trace.shapes == expected && trace.blocks_executed == 12 &&
              config.blocks_per_layer == std::vector<std::size_t>{2, 2, 8};
  for (float v : logits.data()) pass = pass && std::isfinite(v);
  std::size_t ablations = 0;
  using Blocks = std::vector<std::size_t>;
  for (const auto& blocks :
       {Blocks{1, 1, 8}, Blocks{3, 3, 8}, Blocks{4, 4, 8}, Blocks{6, 6, 8}, Blocks{8, 8, 8}}) {
    model::ModelConfig c;
    c.blocks_per_layer = blocks;
    model::ForwardTrace t;
    const auto out = model::forward(random_input({1, 3, 28, 28}, 10), model::init_model<float>(c, 47), &t);
    if (out.shape() == Shape{1, 3} && t.blocks_executed == blocks[0] + blocks[1] + blocks[2]) {
      ++ablations;
    }
  }
  std::string trace_text;
  for (const auto& s : trace.shapes) trace_text += (trace_text.empty() ? "" : " -> ") + shape_to_string(s);
  return {pass && ablations == 5, trace_text + ", " + std::to_string(trace.blocks_executed) +
                                      " blocks; ablations constructed and ran: " +
                                      std::to_string(ablations) + "/5"};
}

Tensor permute_grid(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t bc_count = x.dim(0) * x.dim(1), n = x.dim(2) * x.dim(3);
  std::vector<float> out(x.numel());
  const auto in = x.data();
  for (std::size_t bc = 0; bc < bc_count; ++bc) {
    for (std::size_t i = 0; i < n; ++i) out[bc * n + i] = in[bc * n + perm[i]];
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

Outcome permutation_equivariance() {
  const auto p = model::init_model<float>(model::ModelConfig{}, 31);
  float worst = 0.0f;
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const auto x = random_input({2, 96, 4, 4}, 100 + trial);
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(trial));
    const auto y = permute_grid(model::msa_block(x, p.levels[0][0], 3), perm);
    const auto yp = model::msa_block(permute_grid(x, perm), p.levels[0][0], 3);
    for (std::size_t i = 0; i < y.numel(); ++i) {
      worst = std::max(worst, std::abs(y.data()[i] - yp.data()[i]));
    }
  }
  return {worst < 1e-5f, "max abs deviation " + fmt("%.2e", worst) + " over 5 permutations (< 1e-5)"};
}

Outcome checkpoint_round_trip() {
  const auto p = model::init_model<float>(model::ModelConfig{}, 71);
  const auto path = fs::temp_directory_path() / "ahmsa_acceptance_model.ahmc";
  model::save_checkpoint(path, p);
  const auto q = model::load_checkpoint(path);
  fs::remove(path);
  const auto x = random_input({4, 3, 28, 28}, 72);
  const auto a = model::forward(x, p), b = model::forward(x, q);
  const bool same = a.shape() == b.shape() &&
                    std::equal(a.data().begin(), a.data().end(), b.data().begin());
  return {same && q.config == p.config,
          std::string(same ? "bit-identical" : "different") + " logits for a 4-sample batch"};
}

// ------------------------------------------------------------------ harness

Outcome leakage_guard(const fs::path& manifest_path) {
  const auto manifest = data::load_manifest(manifest_path);
  const auto folds = data::loso_splits(manifest);
  for (const auto& fold : folds) train::check_no_leakage(manifest, fold);
  auto leaky = folds.front();
  leaky.train.push_back(leaky.test.front());
  bool caught = false;
  try {
    train::check_no_leakage(manifest, leaky);
  } catch (const LeakageError&) {
    caught = true;
  }
  return {caught, std::to_string(folds.size()) +
                      " clean folds accepted; a fold training on its held-out subject " +
                      (caught ? "raised LeakageError" : "was NOT rejected")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct PipelineRun {
  int code = -1;
  double seconds = 0.0;
  std::string log;
};

// gen-synthetic -> extract-flow -> loso through the command-line entry point.
PipelineRun run_pipeline(const fs::path& root) {
  fs::remove_all(root);
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream out, err;
  auto call = [&](std::vector<std::string> args) {
    args.insert(args.begin(), "ahmsa");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  };
  const auto ds = (root / "dataset").string(), flow = (root / "flow").string();
  PipelineRun run;
  run.code = call({"gen-synthetic", "--out", ds, "--seed", "42", "--subjects", "6",
                   "--samples-per-subject", "9"});
  if (run.code == 0) {
    run.code = call({"extract-flow", "--manifest", ds + "/manifest.csv", "--out", flow});
  }
  if (run.code == 0) {
    run.code = call({"loso", "--manifest", ds + "/manifest.csv", "--flow-dir", flow, "--out",
                     (root / "results").string(), "--epochs", "200", "--batch-size", "32", "--lr",
                     "1e-4", "--parallel-folds", "4"});
  }
  run.seconds = seconds_since(start);
  run.log = out.str() + err.str();
  return run;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  };

  report("gradient suite", gradient_suite);
  report("flow oracle", flow_oracle);
  report("strain oracle", strain_oracle);
  report("metric oracle", metric_oracle);
  report("shape suite", shape_suite);
  report("permutation equivariance", permutation_equivariance);

  const auto root = fs::temp_directory_path() / "ahmsa_acceptance";
  fs::remove_all(root);
  const auto first = run_pipeline(root / "run1");
  const auto metrics_path = root / "run1" / "results" / "metrics.json";
  report("end-to-end synthetic LOSO", [&]() -> Outcome {
    if (first.code != 0) return {false, "pipeline exit code " + std::to_string(first.code) + "\n" + first.log};
    const auto j = nlohmann::json::parse(slurp(metrics_path));
    const double uf1 = j["pooled"]["uf1"], uar = j["pooled"]["uar"];
    return {uf1 >= 0.8 && uar >= 0.8 && first.seconds < 900.0,
            "pooled UF1 " + fmt("%.4f", uf1) + " UAR " + fmt("%.4f", uar) + " (>= 0.8), " +
                fmt("%.1f", first.seconds) + " s (< 900 s) on " +
                std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " core(s)"};
  });
  report("determinism", [&]() -> Outcome {
    const auto bytes = slurp(metrics_path);
    // Same paths as the first run so the echoed configuration is identical too.
    fs::rename(root / "run1", root / "run1_first");
    const auto second = run_pipeline(root / "run1");
    if (second.code != 0) return {false, "second run exit code " + std::to_string(second.code)};
    const bool same = !bytes.empty() && slurp(metrics_path) == bytes;
    return {same, "two end-to-end runs, metrics.json " +
                      std::string(same ? "byte-identical" : "DIFFERS") + " (" +
                      std::to_string(bytes.size()) + " bytes)"};
  });
  report("leakage guard",
         [&] { return leakage_guard(root / "run1" / "dataset" / "manifest.csv"); });
  report("checkpoint round trip", checkpoint_round_trip);

  fs::remove_all(root);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
