#include "ahmsa/cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>

#include "ahmsa/cli/run_config.hpp"
#include "ahmsa/data/manifest.hpp"
#include "ahmsa/data/synthetic.hpp"
#include "ahmsa/errors.hpp"
#include "ahmsa/model/checkpoint.hpp"
#include "ahmsa/optflow/image.hpp"
#include "ahmsa/train/loso.hpp"

#ifndef AHMSA_VERSION
#define AHMSA_VERSION "0.0.0"
#endif

namespace ahmsa::cli {

namespace {

namespace fs = std::filesystem;

// Flags shared by the commands that build a RunConfig. Precedence, lowest
// first: defaults, --config file, --set assignments, dedicated flags.
struct RunFlags {
  std::string config_path;
  std::vector<std::string> assignments;
  std::string manifest, flow_dir, out_dir;
  std::size_t epochs = 0, batch_size = 0, log_every = 0, parallel_folds = 0, layers = 0,
              factor = 0;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  std::string blocks;
  bool extract = false;

  std::vector<std::pair<std::string, CLI::Option*>> flag_options;
};

void add_config_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_path, "Flat JSON config with dotted keys");
  cmd->add_option("--set", f.assignments, "Override one config key, e.g. --set tvl1.theta=0.3")
      ->type_name("KEY=VALUE");
  f.flag_options.emplace_back("paths.manifest",
                              cmd->add_option("--manifest", f.manifest, "Dataset manifest CSV"));
}

void add_training_flags(CLI::App* cmd, RunFlags& f) {
  f.flag_options.emplace_back("paths.flow_dir",
                              cmd->add_option("--flow-dir", f.flow_dir, "Directory of .flow files"));
  f.flag_options.emplace_back("paths.output_dir",
                              cmd->add_option("--out", f.out_dir, "Output directory"));
  f.flag_options.emplace_back("train.epochs", cmd->add_option("--epochs", f.epochs));
  f.flag_options.emplace_back("train.batch_size", cmd->add_option("--batch-size", f.batch_size));
  f.flag_options.emplace_back("train.learning_rate", cmd->add_option("--lr", f.learning_rate));
  f.flag_options.emplace_back("train.seed", cmd->add_option("--seed", f.seed));
  f.flag_options.emplace_back("train.log_every",
                              cmd->add_option("--log-every", f.log_every, "Epochs between log lines"));
  f.flag_options.emplace_back("model.n_layers", cmd->add_option("--layers", f.layers));
  f.flag_options.emplace_back("model.downsample_factor",
                              cmd->add_option("--factor", f.factor, "Downsample factor"));
  f.flag_options.emplace_back("model.blocks_per_layer",
                              cmd->add_option("--blocks", f.blocks, "Blocks per level, e.g. 1,1,8"));
  cmd->add_flag("--extract", f.extract, "Compute flow features from the images instead of --flow-dir");
}

nlohmann::json flag_value(const std::string& key, const RunFlags& f) {
  if (key == "paths.manifest") return f.manifest;
  if (key == "paths.flow_dir") return f.flow_dir;
  if (key == "paths.output_dir") return f.out_dir;
  if (key == "train.epochs") return f.epochs;
  if (key == "train.batch_size") return f.batch_size;
  if (key == "train.learning_rate") return f.learning_rate;
  if (key == "train.seed") return f.seed;
  if (key == "train.log_every") return f.log_every;
  if (key == "loso.parallel_folds") return f.parallel_folds;
  if (key == "model.n_layers") return f.layers;
  if (key == "model.downsample_factor") return f.factor;
  if (key == "model.blocks_per_layer") return parse_size_list(f.blocks);
  throw UsageError("unmapped flag for key " + key);
}

RunConfig resolve(const RunFlags& f) {
  RunConfig config;
  if (!f.config_path.empty()) config = apply_flat_json(config, read_flat_json(f.config_path));
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& a : f.assignments) {
    auto [key, value] = parse_assignment(a);
    overrides[key] = value;
  }
  config = apply_flat_json(config, overrides);
  nlohmann::json flags = nlohmann::json::object();
  for (const auto& [key, option] : f.flag_options) {
    if (option->count() > 0) flags[key] = flag_value(key, f);
  }
  config = apply_flat_json(config, flags);
  config.validate();
  return config;
}

void require_path(const fs::path& p, const std::string& key, const std::string& flag) {
  if (p.empty()) throw ConfigError(key + " is required (" + flag + " or the config file)");
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

optflow::FlowFeatureMap extract_sample(const data::Sample& s, const RunConfig& config) {
  return optflow::extract_features(optflow::read_pgm(s.onset_path), optflow::read_pgm(s.apex_path),
                                   s.landmarks, config.features);
}

// Feature maps for every manifest sample, either extracted inline or read from
// <flow_dir>/<key>.flow. Any failure names the sample and aborts.
std::vector<optflow::FlowFeatureMap> load_maps(const data::DatasetManifest& manifest,
                                               const RunConfig& config, bool extract,
                                               std::ostream& err) {
  std::vector<optflow::FlowFeatureMap> maps;
  maps.reserve(manifest.size());
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& s = manifest[i];
    const auto key = data::sample_key(s);
    try {
      if (extract) {
        err << "[" << i + 1 << "/" << manifest.size() << "] extracting " << key << "\n";
        maps.push_back(extract_sample(s, config));
      } else {
        maps.push_back(optflow::read_flow_map(config.flow_dir / (key + ".flow")));
      }
    } catch (const std::exception& e) {
      throw IoError("sample " + key + ": " + e.what());
    }
    const auto& m = maps.back();
    if (m.height != config.model.h_flow || m.width != config.model.w_flow) {
      throw ValidationError("sample " + key + ": feature map is " + std::to_string(m.height) +
                            "x" + std::to_string(m.width) + ", model expects " +
                            std::to_string(config.model.h_flow) + "x" +
                            std::to_string(config.model.w_flow));
    }
  }
  return maps;
}

train::LogFn stream_log(std::ostream& err) {
  auto mutex = std::make_shared<std::mutex>();
  return [&err, mutex](const std::string& line) {
    std::lock_guard lock(*mutex);
    err << line << "\n" << std::flush;
  };
}

int cmd_extract_flow(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const auto config = resolve(f);
  require_path(config.manifest, "paths.manifest", "--manifest");
  require_path(config.flow_dir, "paths.flow_dir", "--out");
  const auto manifest = data::load_manifest(config.manifest);
  std::error_code ec;
  fs::create_directories(config.flow_dir, ec);
  if (ec) throw IoError("cannot create '" + config.flow_dir.string() + "': " + ec.message());
  std::size_t failed = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto key = data::sample_key(manifest[i]);
    err << "[" << i + 1 << "/" << manifest.size() << "] " << key << "\n";
    try {
      optflow::write_flow_map(config.flow_dir / (key + ".flow"),
                              extract_sample(manifest[i], config));
    } catch (const std::exception& e) {
      ++failed;
      err << "error: sample " << key << ": " << e.what() << "\n";
    }
  }
  out << "wrote " << manifest.size() - failed << " of " << manifest.size() << " flow files to "
      << config.flow_dir.string() << "\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

struct SyntheticFlags {
  data::SyntheticOptions options;
  std::string out_dir;
};

int cmd_gen_synthetic(const SyntheticFlags& f, std::ostream& out) {
  const auto dataset = data::gen_synthetic(f.options, f.out_dir);
  out << dataset.manifest_path.string() << "\n";
  return kExitOk;
}

int cmd_train(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const auto config = resolve(f);
  require_path(config.manifest, "paths.manifest", "--manifest");
  if (!f.extract) require_path(config.flow_dir, "paths.flow_dir", "--flow-dir");
  require_path(config.output_dir, "paths.output_dir", "--out");
  const auto manifest = data::load_manifest(config.manifest);
  const auto maps = load_maps(manifest, config, f.extract, err);
  std::vector<int> labels;
  for (const auto& s : manifest.samples()) labels.push_back(s.class_id);

  auto result = train::train_fold(maps, labels, model::init_model<float>(config.model, config.train.seed),
                                  config.train, stream_log(err));
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create '" + config.output_dir.string() + "': " + ec.message());
  model::save_checkpoint(config.output_dir / "model.ahmc", result.params);
  nlohmann::ordered_json history;
  history["config"] = to_flat_json(config);
  history["loss_history"] = result.loss_history;
  std::ofstream hist(config.output_dir / "history.json");
  hist << history.dump(2) << "\n";
  if (!hist) throw IoError("cannot write history.json");
  out << "final loss " << result.loss_history.back() << "\n"
      << "wrote " << (config.output_dir / "model.ahmc").string() << "\n";
  return kExitOk;
}

int cmd_loso(const RunFlags& f, std::ostream& out, std::ostream& err) {
  const auto config = resolve(f);
  require_path(config.manifest, "paths.manifest", "--manifest");
  if (!f.extract) require_path(config.flow_dir, "paths.flow_dir", "--flow-dir");
  require_path(config.output_dir, "paths.output_dir", "--out");
  const auto manifest = data::load_manifest(config.manifest);
  const auto maps = load_maps(manifest, config, f.extract, err);

  train::LosoOptions options;
  options.parallel_folds = config.parallel_folds;
  options.eval_batch = config.eval_batch;
  options.log = stream_log(err);
  auto report = train::run_loso(manifest, maps, config.model, config.train, options);
  report.config = to_flat_json(config);
  train::write_report(report, config.output_dir);

  out << "pooled UF1 " << fixed4(report.pooled.uf1) << " UAR " << fixed4(report.pooled.uar)
      << "\n";
  for (const auto& [db, summary] : report.per_database) {
    out << db << " UF1 " << fixed4(summary.uf1) << " UAR " << fixed4(summary.uar) << "\n";
  }
  out << "wrote " << (config.output_dir / "metrics.json").string() << "\n";
  std::size_t failed = 0;
  for (const auto& fold : report.folds) {
    if (!fold.ok()) {
      ++failed;
      err << "error: fold " << fold.subject << ": " << fold.error << "\n";
    }
  }
  return failed == 0 ? kExitOk : kExitFailure;
}

int cmd_report(const std::string& metrics, const std::string& out_dir, std::ostream& out) {
  const auto report = train::read_report(metrics);
  const fs::path dir = out_dir.empty() ? fs::path(metrics).parent_path() : fs::path(out_dir);
  train::write_report(report, dir.empty() ? fs::path(".") : dir);
  out << "pooled UF1 " << fixed4(report.pooled.uf1) << " UAR " << fixed4(report.pooled.uar)
      << "\n";
  for (const auto& w : report.pooled.warnings) out << "warning: " << w << "\n";
  return kExitOk;
}

}  // namespace

std::string version() { return AHMSA_VERSION; }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Micro-expression recognition from optical flow with hierarchical attention",
               "ahmsa"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  RunFlags extract_flags;
  auto* extract = app.add_subcommand("extract-flow", "Compute one .flow feature map per sample");
  extract->set_version_flag("--version", version());
  add_config_flags(extract, extract_flags);
  extract_flags.flag_options.emplace_back(
      "paths.flow_dir", extract->add_option("--out", extract_flags.flow_dir, "Output directory"));

  SyntheticFlags synth;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic onset/apex dataset");
  gen->set_version_flag("--version", version());
  gen->add_option("--out", synth.out_dir, "Output directory")->required();
  gen->add_option("--seed", synth.options.seed)->capture_default_str();
  gen->add_option("--subjects", synth.options.n_subjects)->capture_default_str();
  gen->add_option("--samples-per-subject", synth.options.samples_per_subject)
      ->capture_default_str();
  gen->add_option("--image-size", synth.options.image_size)->capture_default_str();
  gen->add_option("--min-shift", synth.options.min_shift_px)->capture_default_str();
  gen->add_option("--max-shift", synth.options.max_shift_px)->capture_default_str();
  gen->add_option("--noise", synth.options.noise_sigma)->capture_default_str();

  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train one model on every manifest sample");
  train_cmd->set_version_flag("--version", version());
  add_config_flags(train_cmd, train_flags);
  add_training_flags(train_cmd, train_flags);

  RunFlags loso_flags;
  auto* loso = app.add_subcommand("loso", "Leave-one-subject-out evaluation");
  loso->set_version_flag("--version", version());
  add_config_flags(loso, loso_flags);
  add_training_flags(loso, loso_flags);
  loso_flags.flag_options.emplace_back(
      "loso.parallel_folds",
      loso->add_option("--parallel-folds", loso_flags.parallel_folds,
                       "Folds run concurrently (capped by AHMSA_THREADS)"));

  std::string metrics_path, report_out;
  auto* report = app.add_subcommand("report", "Regenerate CSV/SVG outputs from metrics.json");
  report->set_version_flag("--version", version());
  report->add_option("--metrics", metrics_path, "metrics.json to read")->required();
  report->add_option("--out", report_out, "Output directory (default: next to metrics.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*extract) return cmd_extract_flow(extract_flags, out, err);
    if (*gen) return cmd_gen_synthetic(synth, out);
    if (*train_cmd) return cmd_train(train_flags, out, err);
    if (*loso) return cmd_loso(loso_flags, out, err);
    if (*report) return cmd_report(metrics_path, report_out, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace ahmsa::cli
