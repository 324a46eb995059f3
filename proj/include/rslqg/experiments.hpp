#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rslqg/data_driven.hpp"
#include "rslqg/dual_loop.hpp"
#include "rslqg/plant.hpp"
#include "rslqg/sysid_init.hpp"

namespace rslqg {

enum class Mode { kExact, kDisturbed, kLearn, kSysid };

std::string mode_name(Mode mode);
Mode mode_from_name(const std::string& name);

/// One seeded Monte Carlo campaign over a single model and procedure.
struct ExperimentConfig {
  ExperimentConfig(PlantModel m, Mode md) : model(std::move(m)), mode(md) {}

  PlantModel model;
  Mode mode;
  std::string name = "experiment";
  int trials = 1;
  std::uint64_t master_seed = 0;
  int outer_iters = 10;
  int inner_iters = 20;
  double delta_k = 0.0;  // disturbance magnitudes (disturbed mode)
  double delta_l = 0.0;
  int tau = 5000;        // samples (learn / sysid modes)
  double sigma1 = 1.0;   // exploration noise levels
  double sigma2 = 1.0;
  bool verbose_inner = false;
  std::optional<GainK> k_init;  // default: LMI solve on the true matrices
};

struct TrialResult {
  bool failed = false;
  std::string failure_stage;
  IterationTrace trace;
  GainK final_gain;
  double outer_rate = 0.0;  // exact mode only
  std::vector<double> inner_rates;
  double max_ls_residual = 0.0;  // learn mode only
};

/// Per-step metrics of one trial as they appear in traces.csv.
struct StepMetrics {
  double rel_err_K = 0.0;
  double rel_err_P = 0.0;
  double hinf = 0.0;
  bool admissible = false;
};

struct AggregateCurves {
  std::vector<double> mean_rel_err_K, var_rel_err_K;
  std::vector<double> mean_rel_err_P, var_rel_err_P;
  std::vector<double> mean_hinf, var_hinf;
  std::vector<int> count;  // trials contributing at each outer step
};

struct CampaignResult {
  ExperimentConfig config;
  GameSolution oracle;
  std::vector<TrialResult> trials;
  AggregateCurves aggregates;
  int failures = 0;
  double alpha_hat = 0.0;     // largest outer contraction factor (exact mode)
  double beta_hat_max = 0.0;  // largest inner contraction factor (exact mode)
};

/// Runs `config.trials` independent trials with seeds master_seed + index,
/// optionally across `jobs` threads. Failed trials are recorded with their
/// failure stage, counted, and excluded from the aggregates.
CampaignResult run_campaign(const ExperimentConfig& config, int jobs = 1);

/// Writes traces.csv, aggregate.csv and summary.json into out_dir (created if
/// missing). Refuses (invalid-argument) when no trial produced a trace.
void emit(const CampaignResult& result, const std::string& out_dir);

std::vector<std::vector<StepMetrics>> parse_traces_csv(std::istream& is);
AggregateCurves compute_aggregates(const std::vector<std::vector<StepMetrics>>& rows);

/// Paper-model payloads and the named built-in campaign configurations
/// (illustrative-* / cartpole-* with suffix exact, disturbed, learn, sysid).
PlantModel illustrative_model();
PlantModel cartpole_model();
ExperimentConfig builtin_config(const std::string& name);
std::vector<std::string> builtin_config_names();

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);

}  // namespace rslqg
