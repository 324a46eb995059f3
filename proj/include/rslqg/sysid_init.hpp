#pragma once

#include <optional>

#include <json.hpp>

#include "rslqg/data_driven.hpp"
#include "rslqg/plant.hpp"
#include "rslqg/rng.hpp"

namespace rslqg {

/// Least-squares estimate of the open-loop matrices from input-state data.
struct IdentifiedModel {
  Matrix A_hat;
  Matrix B_hat;
  Matrix D_hat;
  std::optional<double> residual_norm;  // ||[A^,B^,D^] - [A,B,D]||_F when known

  nlohmann::json to_json() const;
};

IdentifiedModel identify(const DataBuffer& buffer,
                         const PlantModel* truth = nullptr);

/// Feasible point of the initial-gain LMIs: W > 0 with the bounded-real block
/// matrix below -epsilon I and the norm-coupling block satisfied at level mu;
/// K = V W^{-1}.
struct LmiSolution {
  Matrix W;
  Matrix V;
  double epsilon = 0.0;
  double mu = 0.0;
  GainK K;
};

LmiSolution find_initial_gain(const IdentifiedModel& idm, const Matrix& C,
                              const Matrix& E, double gamma, double epsilon,
                              double mu);

/// simulate -> identify -> LMI solve -> admissibility check against the true
/// model (evaluation only). Non-positive epsilon/mu select the defaults
/// (1e-3 ||[A^,B^,D^]||_F and 1e-2); infeasibility retries with halved
/// margins, up to ten times.
GainK learn_initial_controller(const PlantModel& model,
                               const ExplorationPolicy& policy, int tau,
                               double epsilon, double mu, Rng& rng);

/// The same LMI pipeline run on the true system matrices; the deterministic
/// default initial gain for the paper models.
GainK initial_gain_from_model(const PlantModel& model);

}  // namespace rslqg
