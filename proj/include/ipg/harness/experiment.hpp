#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipg/harness/trainer.hpp"

namespace ipg {

const std::vector<std::string>& experiment_names();

struct ExperimentVariant {
  std::string label;
  NetworkConfig model;
};

// Configurations compared by `name`, derived from `base`. Throws UsageError
// for unknown names.
std::vector<ExperimentVariant> experiment_variants(const std::string& name,
                                                   const NetworkConfig& base);

struct ExperimentOptions {
  RunConfig base;
  int seeds = 3;
  std::string out_dir;
  LogFn log;
};

struct ExperimentRun {
  std::string label;
  std::uint64_t seed = 0;
  ApReport val;
};

struct VariantSummary {
  std::string label;
  double ap_mean = 0, ap_min = 0, ap_max = 0;
  double ap_small_mean = 0, ap_small_min = 0, ap_small_max = 0;
};

struct ExperimentReport {
  std::string name;
  std::vector<ExperimentRun> runs;
  std::vector<VariantSummary> summary;
};

// Trains every variant with seeds base.seed .. base.seed + seeds - 1. Each run
// writes to out_dir/<label>/seed<k>; runs.csv, summary.csv and summary.txt
// land in out_dir.
ExperimentReport run_experiment(const std::string& name, const ExperimentOptions& options);

std::vector<VariantSummary> summarize(const std::vector<ExperimentRun>& runs);
std::string format_summary(const ExperimentReport& report);

}  // namespace ipg
