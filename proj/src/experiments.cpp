#include "rslqg/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include "rslqg/game_oracle.hpp"

namespace rslqg {
namespace {

void write_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

std::string error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kUnstableMatrix: return "unstable-matrix";
    case ErrorCode::kIllConditioned: return "ill-conditioned";
    case ErrorCode::kNumericalFailure: return "numerical-failure";
    case ErrorCode::kRiskInfeasible: return "risk-infeasible";
    case ErrorCode::kGammaTooSmall: return "gamma-too-small";
    case ErrorCode::kNoConvergence: return "no-convergence";
    case ErrorCode::kNotAdmissible: return "not-admissible";
    case ErrorCode::kInsufficientExcitation: return "insufficient-excitation";
    case ErrorCode::kLmiInfeasible: return "lmi-infeasible";
    case ErrorCode::kUnstableExploration: return "unstable-exploration";
    case ErrorCode::kNotStabilizable: return "not-stabilizable";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

// Stabilizing (not necessarily admissible) gain for data collection: the
// risk-neutral regulator obtained with the disturbance channel zeroed out.
// Moderate gain keeps the exploration noise visible in the inputs, which the
// off-policy estimators need.
GainK exploration_gain(const PlantModel& model) {
  const PlantModel lqr(model.A(), model.B(), model.C(),
                       Matrix::Zero(model.n(), model.q()), model.E(), 1.0,
                       model.sigma());
  return solve_gare_value_iteration(lqr, 1e-12, 200000).K_star;
}

}  // namespace

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kExact: return "exact";
    case Mode::kDisturbed: return "disturbed";
    case Mode::kLearn: return "learn";
    case Mode::kSysid: return "sysid";
  }
  return "unknown";
}

Mode mode_from_name(const std::string& name) {
  if (name == "exact") return Mode::kExact;
  if (name == "disturbed") return Mode::kDisturbed;
  if (name == "learn") return Mode::kLearn;
  if (name == "sysid") return Mode::kSysid;
  throw Error(ErrorCode::kInvalidArgument, "unknown mode '" + name + "'");
}

PlantModel illustrative_model() {
  Matrix A(3, 3), B(3, 3), D(3, 3), C(6, 3), E(6, 3);
  A << 1, 0, -5, -1, 1, 0, 0, 0, 1;
  B << 1, -10, 0, 0, 3, 1, -1, 0, 2;
  D << 0.5, 0, 0, 0, 0.2, 0, 0, 0, 0.2;
  C << Matrix::Identity(3, 3), Matrix::Zero(3, 3);
  E << Matrix::Zero(3, 3), Matrix::Identity(3, 3);
  return PlantModel(A, B, C, D, E, /*gamma=*/5.0, Matrix::Identity(3, 3));
}

PlantModel cartpole_model() {
  Matrix A(4, 4), B(4, 1), C(5, 4), E(5, 1);
  A << 1, 0.01, 0, 0,
       0, 1, -0.01, 0,
       0, 0, 1, 0.01,
       0, 0, 0.16, 1;
  B << 0, 0.01, 0, -0.015;
  C << Matrix::Identity(4, 4), Matrix::Zero(1, 4);
  E << Matrix::Zero(4, 1), Matrix::Identity(1, 1);
  const Matrix D = 0.001 * Matrix::Identity(4, 4);
  return PlantModel(A, B, C, D, E, /*gamma=*/10.0, 0.1 * Matrix::Identity(4, 4));
}

std::vector<std::string> builtin_config_names() {
  std::vector<std::string> names;
  for (const char* base : {"illustrative", "cartpole"})
    for (const char* mode : {"exact", "disturbed", "learn", "sysid"})
      names.push_back(std::string(base) + "-" + mode);
  return names;
}

ExperimentConfig builtin_config(const std::string& name) {
  const auto dash = name.rfind('-');
  if (dash == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "unknown built-in config '" + name + "'");
  }
  const std::string base = name.substr(0, dash);
  const Mode mode = mode_from_name(name.substr(dash + 1));

  if (base == "illustrative") {
    ExperimentConfig cfg(illustrative_model(), mode);
    cfg.name = name;
    cfg.outer_iters = 10;
    cfg.inner_iters = 20;
    cfg.trials = mode == Mode::kExact ? 1 : 50;
    cfg.delta_k = cfg.delta_l = mode == Mode::kDisturbed ? 0.09 : 0.0;
    cfg.tau = mode == Mode::kSysid ? 10000 : 5000;
    cfg.sigma1 = cfg.sigma2 = 1.0;
    return cfg;
  }
  if (base == "cartpole") {
    ExperimentConfig cfg(cartpole_model(), mode);
    cfg.name = name;
    cfg.outer_iters = 10;
    cfg.inner_iters = 20;
    cfg.trials = mode == Mode::kExact ? 1 : 50;
    cfg.delta_k = mode == Mode::kDisturbed ? 0.7 : 0.0;
    cfg.delta_l = mode == Mode::kDisturbed ? 0.1 : 0.0;
    cfg.tau = 10000;
    cfg.sigma1 = cfg.sigma2 = 20.0;
    return cfg;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown built-in config '" + name + "'");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.contains("model") || !j.contains("mode")) {
    throw Error(ErrorCode::kInvalidArgument,
                "config JSON must contain 'model' and 'mode'");
  }
  ExperimentConfig cfg(PlantModel::from_json(j["model"]),
                       mode_from_name(j["mode"].get<std::string>()));
  cfg.name = j.value("name", std::string("experiment"));
  cfg.trials = j.value("trials", 1);
  cfg.master_seed = j.value("master_seed", std::uint64_t{0});
  cfg.outer_iters = j.value("outer_iters", 10);
  cfg.inner_iters = j.value("inner_iters", 20);
  cfg.delta_k = j.value("delta_k", 0.0);
  cfg.delta_l = j.value("delta_l", 0.0);
  cfg.tau = j.value("tau", 5000);
  cfg.sigma1 = j.value("sigma1", 1.0);
  cfg.sigma2 = j.value("sigma2", 1.0);
  cfg.verbose_inner = j.value("verbose_inner", false);

  if (cfg.trials < 1) {
    throw Error(ErrorCode::kInvalidArgument, "config: trials must be >= 1");
  }
  if (cfg.outer_iters < 1 || cfg.inner_iters < 1) {
    throw Error(ErrorCode::kInvalidArgument, "config: iteration counts must be >= 1");
  }
  if (cfg.mode == Mode::kDisturbed && !(j.contains("delta_k") && j.contains("delta_l"))) {
    throw Error(ErrorCode::kInvalidArgument,
                "config: disturbed mode requires delta_k and delta_l");
  }
  if ((cfg.mode == Mode::kLearn || cfg.mode == Mode::kSysid) && !j.contains("tau")) {
    throw Error(ErrorCode::kInvalidArgument, "config: this mode requires tau");
  }
  if (cfg.tau < 1) throw Error(ErrorCode::kInvalidArgument, "config: tau must be >= 1");
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  return nlohmann::json{{"model", cfg.model.to_json()},
                        {"mode", mode_name(cfg.mode)},
                        {"name", cfg.name},
                        {"trials", cfg.trials},
                        {"master_seed", cfg.master_seed},
                        {"outer_iters", cfg.outer_iters},
                        {"inner_iters", cfg.inner_iters},
                        {"delta_k", cfg.delta_k},
                        {"delta_l", cfg.delta_l},
                        {"tau", cfg.tau},
                        {"sigma1", cfg.sigma1},
                        {"sigma2", cfg.sigma2},
                        {"verbose_inner", cfg.verbose_inner}};
}

namespace {

TrialResult run_one_trial(const ExperimentConfig& cfg, const GameSolution& oracle,
                          const GainK& k_init, const GainK& k_explore, int index) {
  TrialResult out;
  const std::uint64_t seed = cfg.master_seed + static_cast<std::uint64_t>(index);
  try {
    switch (cfg.mode) {
      case Mode::kExact:
      case Mode::kDisturbed: {
        DualLoopConfig dl;
        dl.outer_iters = cfg.outer_iters;
        dl.inner_iters = cfg.inner_iters;
        dl.k_init = k_init;
        if (cfg.mode == Mode::kDisturbed) {
          dl.disturbance_k = DisturbanceSpec{cfg.delta_k};
          dl.disturbance_l = DisturbanceSpec{cfg.delta_l};
        }
        dl.rng_seed = seed;
        dl.record_inner = cfg.verbose_inner || cfg.mode == Mode::kExact;
        DualLoopResult res = run(cfg.model, dl);
        out.trace = std::move(res.trace);
        out.final_gain = res.final_gain;
        if (cfg.mode == Mode::kExact) {
          const RateEstimates rates = measure_rates(out.trace, oracle.P_star);
          out.outer_rate = rates.outer_rate;
          out.inner_rates = rates.inner_rates;
        }
        break;
      }
      case Mode::kLearn: {
        LearnConfig lc;
        lc.outer_iters = cfg.outer_iters;
        lc.inner_iters = cfg.inner_iters;
        lc.tau = cfg.tau;
        lc.k_init = k_init;
        lc.rng_seed = seed;
        lc.record_inner = cfg.verbose_inner;
        ExplorationPolicy policy{k_explore,
                                 GainL(Matrix::Zero(cfg.model.q(), cfg.model.n())),
                                 cfg.sigma1, cfg.sigma2};
        LearningResult res = run_learning(cfg.model, policy, lc);
        out.trace = std::move(res.trace);
        out.final_gain = res.final_gain;
        out.max_ls_residual = res.max_ls_residual;
        break;
      }
      case Mode::kSysid: {
        Rng rng(seed);
        ExplorationPolicy policy{k_explore,
                                 GainL(Matrix::Zero(cfg.model.q(), cfg.model.n())),
                                 cfg.sigma1, cfg.sigma2};
        const GainK K =
            learn_initial_controller(cfg.model, policy, cfg.tau, -1.0, -1.0, rng);
        OuterStep step;
        step.K = K;
        step.rel_err_K = (K.mat() - oracle.K_star.mat()).norm() /
                         std::max(1e-300, oracle.K_star.mat().norm());
        const Admissibility adm = is_admissible(cfg.model, K);
        step.admissible = adm.admissible;
        step.hinf = adm.admissible || adm.reason != "unstable"
                        ? hinf_norm(cfg.model, K)
                        : std::numeric_limits<double>::infinity();
        if (adm.certificate) {
          step.P_end = *adm.certificate;
          step.rel_err_P = (step.P_end - oracle.P_star).norm() /
                           std::max(1e-300, oracle.P_star.norm());
        } else {
          step.rel_err_P = std::numeric_limits<double>::infinity();
        }
        out.trace.outer.push_back(std::move(step));
        out.final_gain = K;
        break;
      }
    }
  } catch (const Error& e) {
    out.failed = true;
    out.failure_stage = error_code_name(e.code()) + std::string(": ") + e.what();
  } catch (const std::exception& e) {
    out.failed = true;
    out.failure_stage = std::string("exception: ") + e.what();
  }
  return out;
}

std::vector<std::vector<StepMetrics>> metrics_of(const CampaignResult& result) {
  std::vector<std::vector<StepMetrics>> rows;
  for (const TrialResult& trial : result.trials) {
    if (trial.failed) continue;
    std::vector<StepMetrics> steps;
    for (const OuterStep& s : trial.trace.outer) {
      steps.push_back({s.rel_err_K, s.rel_err_P, s.hinf, s.admissible});
    }
    rows.push_back(std::move(steps));
  }
  return rows;
}

}  // namespace

CampaignResult run_campaign(const ExperimentConfig& config, int jobs) {
  const GameSolution oracle = solve_gare_value_iteration(config.model, 1e-12, 200000);
  GainK k_init = config.k_init ? *config.k_init : GainK();
  if (!config.k_init && config.mode != Mode::kSysid) {
    k_init = initial_gain_from_model(config.model);
  }
  GainK k_explore;
  if (config.mode == Mode::kSysid || config.mode == Mode::kLearn) {
    k_explore = exploration_gain(config.model);
  }

  CampaignResult result{config, oracle, {}, {}, 0, 0.0, 0.0};
  result.trials.resize(config.trials);

  const int workers = std::max(1, std::min(jobs, config.trials));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      const int idx = next.fetch_add(1);
      if (idx >= config.trials) return;
      result.trials[idx] = run_one_trial(config, oracle, k_init, k_explore, idx);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  for (const TrialResult& t : result.trials) {
    if (t.failed) {
      ++result.failures;
      continue;
    }
    result.alpha_hat = std::max(result.alpha_hat, t.outer_rate);
    for (double b : t.inner_rates) result.beta_hat_max = std::max(result.beta_hat_max, b);
  }
  result.aggregates = compute_aggregates(metrics_of(result));
  return result;
}

AggregateCurves compute_aggregates(const std::vector<std::vector<StepMetrics>>& rows) {
  AggregateCurves agg;
  std::size_t horizon = 0;
  for (const auto& r : rows) horizon = std::max(horizon, r.size());
  for (std::size_t i = 0; i < horizon; ++i) {
    double mK = 0, mP = 0, mH = 0;
    int count = 0;
    for (const auto& r : rows) {
      if (i >= r.size()) continue;
      mK += r[i].rel_err_K;
      mP += r[i].rel_err_P;
      mH += r[i].hinf;
      ++count;
    }
    mK /= count;
    mP /= count;
    mH /= count;
    double vK = 0, vP = 0, vH = 0;
    for (const auto& r : rows) {
      if (i >= r.size()) continue;
      vK += (r[i].rel_err_K - mK) * (r[i].rel_err_K - mK);
      vP += (r[i].rel_err_P - mP) * (r[i].rel_err_P - mP);
      vH += (r[i].hinf - mH) * (r[i].hinf - mH);
    }
    agg.mean_rel_err_K.push_back(mK);
    agg.var_rel_err_K.push_back(vK / count);
    agg.mean_rel_err_P.push_back(mP);
    agg.var_rel_err_P.push_back(vP / count);
    agg.mean_hinf.push_back(mH);
    agg.var_hinf.push_back(vH / count);
    agg.count.push_back(count);
  }
  return agg;
}

namespace {

void write_traces_csv(const CampaignResult& result, std::ostream& os) {
  os << "trial,i,j,rel_err_K,rel_err_P,hinf,admissible\n";
  const double pnorm = std::max(1e-300, result.oracle.P_star.norm());
  for (std::size_t t = 0; t < result.trials.size(); ++t) {
    const TrialResult& trial = result.trials[t];
    if (trial.failed) continue;
    for (std::size_t i = 0; i < trial.trace.outer.size(); ++i) {
      const OuterStep& s = trial.trace.outer[i];
      os << t << ',' << (i + 1) << ",0,";
      write_double(os, s.rel_err_K);
      os << ',';
      write_double(os, s.rel_err_P);
      os << ',';
      write_double(os, s.hinf);
      os << ',' << (s.admissible ? 1 : 0) << '\n';
      if (result.config.verbose_inner) {
        for (std::size_t j = 0; j < s.inner.size(); ++j) {
          os << t << ',' << (i + 1) << ',' << (j + 1) << ',';
          write_double(os, s.rel_err_K);
          os << ',';
          write_double(os, (s.inner[j].P - result.oracle.P_star).norm() / pnorm);
          os << ',';
          write_double(os, s.hinf);
          os << ',' << (s.admissible ? 1 : 0) << '\n';
        }
      }
    }
  }
}

void write_aggregate_csv(const AggregateCurves& agg, std::ostream& os) {
  os << "i,mean_rel_err_K,var_rel_err_K,mean_rel_err_P,var_rel_err_P,mean_hinf,"
        "var_hinf\n";
  for (std::size_t i = 0; i < agg.mean_rel_err_K.size(); ++i) {
    os << (i + 1) << ',';
    write_double(os, agg.mean_rel_err_K[i]);
    os << ',';
    write_double(os, agg.var_rel_err_K[i]);
    os << ',';
    write_double(os, agg.mean_rel_err_P[i]);
    os << ',';
    write_double(os, agg.var_rel_err_P[i]);
    os << ',';
    write_double(os, agg.mean_hinf[i]);
    os << ',';
    write_double(os, agg.var_hinf[i]);
    os << '\n';
  }
}

nlohmann::json summary_json(const CampaignResult& result) {
  const AggregateCurves& agg = result.aggregates;
  nlohmann::json j;
  j["name"] = result.config.name;
  j["mode"] = mode_name(result.config.mode);
  j["trials"] = result.config.trials;
  j["failures"] = result.failures;
  j["master_seed"] = result.config.master_seed;
  j["gamma"] = result.config.model.gamma();
  if (!agg.mean_rel_err_K.empty()) {
    j["final_mean_rel_err_K"] = agg.mean_rel_err_K.back();
    j["final_var_rel_err_K"] = agg.var_rel_err_K.back();
    j["final_mean_rel_err_P"] = agg.mean_rel_err_P.back();
    j["final_var_rel_err_P"] = agg.var_rel_err_P.back();
    j["final_mean_hinf"] = agg.mean_hinf.back();
  }

  int steps = 0, below = 0, admissible = 0;
  for (const TrialResult& t : result.trials) {
    if (t.failed) continue;
    for (const OuterStep& s : t.trace.outer) {
      ++steps;
      if (s.hinf < result.config.model.gamma()) ++below;
      if (s.admissible) ++admissible;
    }
  }
  if (steps > 0) {
    j["hinf_below_gamma_fraction"] = static_cast<double>(below) / steps;
    j["admissible_fraction"] = static_cast<double>(admissible) / steps;
  }
  if (result.config.mode == Mode::kExact) {
    j["alpha_hat"] = result.alpha_hat;
    j["beta_hat_max"] = result.beta_hat_max;
  }
  if (result.config.mode == Mode::kLearn) {
    double res = 0;
    for (const TrialResult& t : result.trials)
      if (!t.failed) res = std::max(res, t.max_ls_residual);
    j["max_ls_residual"] = res;
  }
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t t = 0; t < result.trials.size(); ++t) {
    if (result.trials[t].failed) {
      failures.push_back({{"trial", t}, {"stage", result.trials[t].failure_stage}});
    }
  }
  j["failed_trials"] = failures;
  return j;
}

}  // namespace

void emit(const CampaignResult& result, const std::string& out_dir) {
  bool any = false;
  for (const TrialResult& t : result.trials) {
    if (!t.failed && !t.trace.outer.empty()) any = true;
  }
  if (!any) {
    throw Error(ErrorCode::kInvalidArgument, "emit: no successful trials to write");
  }
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIo, "emit: cannot create '" + out_dir + "': " + ec.message());
  }
  auto open = [&](const std::string& file) {
    std::ofstream os(fs::path(out_dir) / file, std::ios::binary);
    if (!os) throw Error(ErrorCode::kIo, "emit: cannot write '" + file + "'");
    return os;
  };
  {
    std::ofstream os = open("traces.csv");
    write_traces_csv(result, os);
    if (!os.good()) throw Error(ErrorCode::kIo, "emit: write failure on traces.csv");
  }
  {
    std::ofstream os = open("aggregate.csv");
    write_aggregate_csv(result.aggregates, os);
    if (!os.good()) throw Error(ErrorCode::kIo, "emit: write failure on aggregate.csv");
  }
  {
    std::ofstream os = open("summary.json");
    os << summary_json(result).dump(2) << '\n';
    if (!os.good()) throw Error(ErrorCode::kIo, "emit: write failure on summary.json");
  }
}

std::vector<std::vector<StepMetrics>> parse_traces_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) {
    throw Error(ErrorCode::kInvalidArgument, "parse_traces_csv: empty input");
  }
  std::map<long, std::vector<StepMetrics>> by_trial;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    const long trial = std::stol(field);
    std::getline(ss, field, ',');
    const long i = std::stol(field);
    std::getline(ss, field, ',');
    const long jidx = std::stol(field);
    if (jidx != 0) continue;  // inner rows do not enter the aggregates
    StepMetrics m;
    std::getline(ss, field, ',');
    m.rel_err_K = std::stod(field);
    std::getline(ss, field, ',');
    m.rel_err_P = std::stod(field);
    std::getline(ss, field, ',');
    m.hinf = std::stod(field);
    std::getline(ss, field, ',');
    m.admissible = std::stoi(field) != 0;
    auto& steps = by_trial[trial];
    if (static_cast<long>(steps.size()) + 1 != i) {
      throw Error(ErrorCode::kInvalidArgument,
                  "parse_traces_csv: non-contiguous outer indices");
    }
    steps.push_back(m);
  }
  std::vector<std::vector<StepMetrics>> rows;
  for (auto& [trial, steps] : by_trial) rows.push_back(std::move(steps));
  return rows;
}

}  // namespace rslqg
