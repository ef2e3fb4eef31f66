// Command-line front end: train, eval, gradcheck, synth, experiment.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ipg/data_synth.hpp"
#include "ipg/errors.hpp"
#include "ipg/gradsuite.hpp"
#include "ipg/harness/checkpoint.hpp"
#include "ipg/harness/config.hpp"
#include "ipg/harness/experiment.hpp"
#include "ipg/harness/trainer.hpp"
#include "ipg/rng.hpp"

namespace fs = std::filesystem;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

ipg::RunConfig config_or_default(const std::string& path) {
  return path.empty() ? ipg::RunConfig{} : ipg::load_config(path);
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& resume, const std::string& out, int stop_after, int log_every) {
  ipg::RunConfig cfg = ipg::load_config(config_path);
  if (seed) cfg.seed = *seed;
  ipg::TrainOptions opts;
  opts.out_dir = out;
  opts.resume = resume;
  opts.stop_after_epoch = stop_after;
  opts.log = log_line;
  opts.log_every = log_every;
  ipg::TrainResult res = ipg::train(cfg, opts);
  ipg::save_config(cfg, (fs::path(out) / "config.json").string());
  std::printf("metrics: %s\ncheckpoint: %s\nval AP %.4f  AP_S %.4f  AP_M %.4f  AP_L %.4f\n",
              res.metrics_path.c_str(), res.last_checkpoint.c_str(), res.val.ap, res.val.ap_small,
              res.val.ap_medium, res.val.ap_large);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& ckpt_path,
             const std::string& dump) {
  const ipg::RunConfig cfg = ipg::load_config(config_path);
  cfg.validate();
  ipg::IpgNet net(cfg.model, ipg::derive_seed(cfg.seed, "init"));
  ipg::restore(ipg::load_checkpoint(ckpt_path), net.params(), ipg::config_digest(cfg.model));
  const ipg::DatasetSplit val = ipg::generate_split("val", cfg.data.val_size, cfg.data.val_seed);
  std::vector<ipg::SynthScene> scenes;
  for (int i = 0; i < val.size; ++i) scenes.push_back(ipg::generate_scene(val.seed(i), cfg.data.image_size));
  ipg::Evaluation eval = ipg::evaluate_split(net, scenes, cfg.eval, cfg.schedule.batch_size);
  if (!dump.empty()) {
    std::ofstream os(dump);
    for (std::size_t i = 0; i < eval.detections.size(); ++i) {
      ipg::write_detections(os, static_cast<int>(i), eval.detections[i]);
    }
  }
  const ipg::ApReport& r = eval.report;
  std::printf("val AP %.4f  AP_S %.4f  AP_M %.4f  AP_L %.4f\n", r.ap, r.ap_small, r.ap_medium,
              r.ap_large);
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    std::printf("  class %zu (%s): %.4f\n", c,
                ipg::to_string(static_cast<ipg::ShapeClass>(c)).c_str(), r.per_class[c]);
  }
  return 0;
}

int cmd_gradcheck(const std::string& module, int seeds) {
  bool ok = true;
  for (const std::string& name : ipg::gradient_cases(module)) {
    double worst = 0.0;
    int checked = 0, skipped = 0;
    std::string where;
    for (int s = 0; s < seeds; ++s) {
      ipg::GradCheckResult r = ipg::run_gradient_case(name, static_cast<std::uint64_t>(s));
      checked += r.checked;
      skipped += r.skipped_kinks;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        where = r.worst;
      }
    }
    const bool pass = worst < 1e-4;
    ok = ok && pass;
    std::printf("%-28s %s  max rel err %.3e at %s  (%d probes, %d kink skips)\n", name.c_str(),
                pass ? "PASS" : "FAIL", worst, where.c_str(), checked, skipped);
  }
  return ok ? 0 : 1;
}

int cmd_synth(const std::string& out, int count, std::uint64_t base_seed, int size) {
  if (count < 1) throw ipg::UsageError("--count must be >= 1");
  fs::create_directories(out);
  for (int i = 0; i < count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%05d", i);
    const ipg::SynthScene scene = ipg::generate_scene(base_seed + static_cast<std::uint64_t>(i), size);
    ipg::export_scene(scene, (fs::path(out) / (std::string(stem) + ".pfm")).string(),
                      (fs::path(out) / (std::string(stem) + ".txt")).string(), i);
  }
  std::printf("wrote %d scenes to %s\n", count, out.c_str());
  return 0;
}

int cmd_experiment(const std::string& name, int seeds, const std::string& config_path,
                   const std::string& out, int epochs) {
  ipg::ExperimentOptions opts;
  opts.base = config_or_default(config_path);
  if (epochs > 0) {
    opts.base.schedule.total_epochs = epochs;
    std::vector<int> kept;
    for (int d : opts.base.schedule.decay_epochs) {
      if (d < epochs) kept.push_back(d);
    }
    opts.base.schedule.decay_epochs = kept;
  }
  opts.seeds = seeds;
  opts.out_dir = out.empty() ? "runs/" + name : out;
  opts.log = log_line;
  const ipg::ExperimentReport report = ipg::run_experiment(name, opts);
  std::cout << ipg::format_summary(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image pyramid guidance network: training, evaluation and checks"};
  app.require_subcommand(1);

  std::string config, resume, out = "runs/train", ckpt, dump, module;
  std::uint64_t seed = 0;
  int stop_after = 0, seeds = 3, count = 16, size = ipg::kSynthImageSize, epochs = 0;
  std::string experiment;

  auto* train = app.add_subcommand("train", "train a detector and log per-epoch metrics");
  train->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  auto* seed_opt = train->add_option("--seed", seed, "override the master seed");
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--out", out, "output directory")->capture_default_str();
  train->add_option("--stop-after", stop_after, "stop after this epoch");
  int log_every = 0;
  train->add_option("--log-every", log_every, "print the loss every N iterations");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the validation split");
  eval->add_option("--config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
  eval->add_option("--ckpt", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--dump", dump, "write detections in the text dump format");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--module", module, "case-name prefix: op, module, net, op.conv2d, ...");
  grad->add_option("--seeds", seeds, "seeds per case")->capture_default_str();

  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "export synthetic scenes as PFM plus box files");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--count", count, "number of scenes")->required();
  synth->add_option("--seed", synth_seed, "seed of the first scene");
  synth->add_option("--size", size, "image side in pixels")->capture_default_str();

  auto* exp = app.add_subcommand("experiment", "run an ablation sweep");
  exp->add_option("name", experiment, "fusion_variants | depth_sweep | fusion_position | "
                                      "deep_layer_effect | baseline_vs_ipg")->required();
  exp->add_option("--seeds", seeds, "seeds per configuration")->capture_default_str();
  exp->add_option("--config", config, "base JSON run configuration")->check(CLI::ExistingFile);
  exp->add_option("--out", out, "output directory (default runs/<name>)");
  exp->add_option("--epochs", epochs, "override total epochs");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) {
      return cmd_train(config, *seed_opt ? std::optional(seed) : std::nullopt, resume, out, stop_after, log_every);
    }
    if (*eval) return cmd_eval(config, ckpt, dump);
    if (*grad) return cmd_gradcheck(module, seeds);
    if (*synth) return cmd_synth(out, count, synth_seed, size);
    if (*exp) return cmd_experiment(experiment, seeds, config, exp->count("--out") ? out : "", epochs);
  } catch (const ipg::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
