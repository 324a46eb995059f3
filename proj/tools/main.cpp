#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rslqg/experiments.hpp"
#include "rslqg/game_oracle.hpp"

namespace {

using rslqg::Error;
using rslqg::ErrorCode;

nlohmann::json matrix_rows(const rslqg::Matrix& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw Error(ErrorCode::kInvalidArgument, "cannot read config file '" + path + "'");
  }
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument,
                "config file '" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

rslqg::ExperimentConfig resolve_config(const std::string& spec, rslqg::Mode mode) {
  const auto names = rslqg::builtin_config_names();
  if (std::find(names.begin(), names.end(), spec) != names.end()) {
    rslqg::ExperimentConfig cfg = rslqg::builtin_config(spec);
    if (cfg.mode != mode) {
      throw Error(ErrorCode::kInvalidArgument,
                  "built-in config '" + spec + "' does not match this subcommand");
    }
    return cfg;
  }
  const std::string with_mode = spec + "-" + rslqg::mode_name(mode);
  if (std::find(names.begin(), names.end(), with_mode) != names.end()) {
    return rslqg::builtin_config(with_mode);
  }
  rslqg::ExperimentConfig cfg = rslqg::config_from_json(read_json_file(spec));
  if (cfg.mode != mode) {
    throw Error(ErrorCode::kInvalidArgument,
                "config mode '" + rslqg::mode_name(cfg.mode) +
                    "' does not match this subcommand");
  }
  return cfg;
}

rslqg::PlantModel resolve_model(const std::string& spec) {
  if (spec == "illustrative") return rslqg::illustrative_model();
  if (spec == "cartpole") return rslqg::cartpole_model();
  const nlohmann::json j = read_json_file(spec);
  return rslqg::PlantModel::from_json(j.contains("model") ? j["model"] : j);
}

struct CliOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int trials = 0;
  bool verbose_inner = false;
  int jobs = 1;
};

int run_campaign_command(const CliOptions& opt, rslqg::Mode mode) {
  rslqg::ExperimentConfig cfg = resolve_config(opt.config, mode);
  if (opt.seed_set) cfg.master_seed = opt.seed;
  if (opt.trials > 0) cfg.trials = opt.trials;
  if (opt.verbose_inner) cfg.verbose_inner = true;
  const rslqg::CampaignResult result = rslqg::run_campaign(cfg, opt.jobs);
  rslqg::emit(result, opt.out);
  std::cout << "wrote " << opt.out << " (" << cfg.trials << " trials, "
            << result.failures << " failed)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy optimization for risk-sensitive LQG / zero-sum LQ games"};
  app.require_subcommand(1);

  CliOptions opt;
  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", opt.config,
                    "built-in config name or JSON config file")
        ->required();
    sub->add_option("--seed", opt.seed, "master seed")->each([&](const std::string&) {
      opt.seed_set = true;
    });
    sub->add_option("--trials", opt.trials, "number of Monte Carlo trials");
    sub->add_option("--jobs", opt.jobs, "concurrent trials");
    sub->add_flag("--verbose-inner", opt.verbose_inner,
                  "record per-inner-iteration rows in traces.csv");
    auto* out = sub->add_option("--out", opt.out, "output directory");
    if (needs_out) out->required();
  };

  CLI::App* solve = app.add_subcommand("solve", "exact dual-loop policy optimization");
  CLI::App* robust =
      app.add_subcommand("robust", "dual loop with injected gain disturbances");
  CLI::App* learn = app.add_subcommand("learn", "off-policy learning from data");
  CLI::App* sysid =
      app.add_subcommand("sysid", "identification + LMI initial-gain pipeline");
  CLI::App* oracle =
      app.add_subcommand("oracle", "value-iteration reference solution only");
  for (CLI::App* sub : {solve, robust, learn, sysid}) add_common(sub, true);
  add_common(oracle, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (solve->parsed()) return run_campaign_command(opt, rslqg::Mode::kExact);
    if (robust->parsed()) return run_campaign_command(opt, rslqg::Mode::kDisturbed);
    if (learn->parsed()) return run_campaign_command(opt, rslqg::Mode::kLearn);
    if (sysid->parsed()) return run_campaign_command(opt, rslqg::Mode::kSysid);
    if (oracle->parsed()) {
      const rslqg::PlantModel model = resolve_model(opt.config);
      const rslqg::GameSolution sol = rslqg::solve_gare_value_iteration(model);
      nlohmann::json j{{"P_star", matrix_rows(sol.P_star)},
                       {"K_star", matrix_rows(sol.K_star.mat())},
                       {"L_star", matrix_rows(sol.L_star.mat())},
                       {"iterations", sol.iterations},
                       {"residual", sol.residual}};
      std::cout << j.dump(2) << '\n';
      if (!opt.out.empty()) {
        std::filesystem::create_directories(opt.out);
        std::ofstream os(std::filesystem::path(opt.out) / "solution.json");
        if (!os) throw Error(ErrorCode::kIo, "cannot write solution.json");
        os << j.dump(2) << '\n';
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::kIo ? 2 : 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
