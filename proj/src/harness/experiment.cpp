#include "ipg/harness/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ipg/errors.hpp"

namespace ipg {

namespace fs = std::filesystem;

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {"fusion_variants", "depth_sweep",
                                                 "fusion_position", "deep_layer_effect",
                                                 "baseline_vs_ipg"};
  return names;
}

std::vector<ExperimentVariant> experiment_variants(const std::string& name,
                                                   const NetworkConfig& base) {
  std::vector<ExperimentVariant> out;
  auto with = [&](std::string label, auto edit) {
    NetworkConfig m = base;
    edit(m);
    m.validate();
    out.push_back({std::move(label), m});
  };
  if (name == "fusion_variants") {
    for (FusionKind k : {FusionKind::Sum, FusionKind::ResidualProduct, FusionKind::Concatenation}) {
      with(to_string(k), [&](NetworkConfig& m) { m.fusion_variant = k; });
    }
  } else if (name == "depth_sweep") {
    for (int n : {4, 5, 6}) {
      with("depth" + std::to_string(n), [&](NetworkConfig& m) {
        m.n_stages = n;
        m.keep_last3 = false;
      });
    }
    with("depth7keep", [](NetworkConfig& m) {
      m.n_stages = 7;
      m.keep_last3 = true;
    });
  } else if (name == "fusion_position") {
    for (int s = 1; s <= 4; ++s) {
      with("stage" + std::to_string(s), [&](NetworkConfig& m) { m.fusion_stages = {s}; });
    }
  } else if (name == "deep_layer_effect") {
    auto deep = [](NetworkConfig& m) {
      m.n_stages = 7;
      m.keep_last3 = true;
      m.head_levels = 4;
    };
    with("plain", [&](NetworkConfig& m) {
      deep(m);
      m.fusion_stages = {};
    });
    with("ipg", [&](NetworkConfig& m) {
      deep(m);
      m.fusion_stages = {1, 2, 3, 4};
    });
  } else if (name == "baseline_vs_ipg") {
    with("plain", [](NetworkConfig& m) { m.fusion_stages = {}; });
    with("ipg", [](NetworkConfig&) {});
  } else {
    std::string valid;
    for (const auto& n : experiment_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw UsageError("unknown experiment '" + name + "'; valid names: " + valid);
  }
  return out;
}

std::vector<VariantSummary> summarize(const std::vector<ExperimentRun>& runs) {
  std::vector<VariantSummary> out;
  std::map<std::string, std::size_t> index;
  std::vector<int> counts;
  for (const ExperimentRun& r : runs) {
    auto it = index.find(r.label);
    if (it == index.end()) {
      it = index.emplace(r.label, out.size()).first;
      VariantSummary s;
      s.label = r.label;
      s.ap_min = s.ap_max = r.val.ap;
      s.ap_small_min = s.ap_small_max = r.val.ap_small;
      out.push_back(s);
      counts.push_back(0);
    }
    VariantSummary& s = out[it->second];
    s.ap_mean += r.val.ap;
    s.ap_small_mean += r.val.ap_small;
    s.ap_min = std::min(s.ap_min, r.val.ap);
    s.ap_max = std::max(s.ap_max, r.val.ap);
    s.ap_small_min = std::min(s.ap_small_min, r.val.ap_small);
    s.ap_small_max = std::max(s.ap_small_max, r.val.ap_small);
    ++counts[it->second];
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].ap_mean /= counts[i];
    out[i].ap_small_mean /= counts[i];
  }
  return out;
}

std::string format_summary(const ExperimentReport& report) {
  std::ostringstream os;
  char line[256];
  os << "experiment " << report.name << "\n\nper run\n";
  std::snprintf(line, sizeof line, "  %-14s %6s %8s %8s %8s %8s\n", "variant", "seed", "AP",
                "AP_S", "AP_M", "AP_L");
  os << line;
  for (const ExperimentRun& r : report.runs) {
    std::snprintf(line, sizeof line, "  %-14s %6llu %8.4f %8.4f %8.4f %8.4f\n", r.label.c_str(),
                  static_cast<unsigned long long>(r.seed), r.val.ap, r.val.ap_small,
                  r.val.ap_medium, r.val.ap_large);
    os << line;
  }
  os << "\nmean [min, max] over seeds\n";
  for (const VariantSummary& s : report.summary) {
    std::snprintf(line, sizeof line, "  %-14s AP %.4f [%.4f, %.4f]  AP_S %.4f [%.4f, %.4f]\n",
                  s.label.c_str(), s.ap_mean, s.ap_min, s.ap_max, s.ap_small_mean, s.ap_small_min,
                  s.ap_small_max);
    os << line;
  }
  return os.str();
}

ExperimentReport run_experiment(const std::string& name, const ExperimentOptions& options) {
  const std::vector<ExperimentVariant> variants = experiment_variants(name, options.base.model);
  if (options.seeds < 1) throw UsageError("--seeds must be >= 1");
  if (options.out_dir.empty()) throw UsageError("experiment needs an output directory");
  fs::create_directories(options.out_dir);

  ExperimentReport report;
  report.name = name;
  for (const ExperimentVariant& v : variants) {
    for (int k = 0; k < options.seeds; ++k) {
      RunConfig cfg = options.base;
      cfg.model = v.model;
      cfg.seed = options.base.seed + static_cast<std::uint64_t>(k);
      TrainOptions topt;
      topt.out_dir = (fs::path(options.out_dir) / v.label / ("seed" + std::to_string(cfg.seed))).string();
      topt.log = options.log;
      if (options.log) options.log("== " + name + " / " + v.label + " / seed " + std::to_string(cfg.seed));
      TrainResult res = train(cfg, topt);
      report.runs.push_back({v.label, cfg.seed, res.val});
    }
  }
  report.summary = summarize(report.runs);

  std::ofstream runs(fs::path(options.out_dir) / "runs.csv");
  runs << "variant,seed,ap,ap_small,ap_medium,ap_large\n";
  for (const ExperimentRun& r : report.runs) {
    runs << r.label << ',' << r.seed << ',' << r.val.ap << ',' << r.val.ap_small << ','
         << r.val.ap_medium << ',' << r.val.ap_large << '\n';
  }
  std::ofstream summary(fs::path(options.out_dir) / "summary.csv");
  summary << "variant,ap_mean,ap_min,ap_max,ap_small_mean,ap_small_min,ap_small_max\n";
  for (const VariantSummary& s : report.summary) {
    summary << s.label << ',' << s.ap_mean << ',' << s.ap_min << ',' << s.ap_max << ','
            << s.ap_small_mean << ',' << s.ap_small_min << ',' << s.ap_small_max << '\n';
  }
  std::ofstream(fs::path(options.out_dir) / "summary.txt") << format_summary(report);
  return report;
}

}  // namespace ipg
