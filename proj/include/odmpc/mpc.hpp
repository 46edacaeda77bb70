#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <random>

#include "odmpc/envs.hpp"
#include "odmpc/ilqr.hpp"
#include "odmpc/online_estimator.hpp"
#include "odmpc/priors.hpp"

namespace odmpc {

struct MpcConfig {
  int horizon = 15;
  double rate_hz = 20.0;
  double gamma = 0.95;
  int ilqr_iters = 2;
  double noise_scale = 1.0;  // exploration covariance = noise_scale * Quu^-1
  bool adapt = true;
  std::uint64_t seed = 0;
  AdaptConfig adapt_cfg;
  MeanRule mean_rule = MeanRule::Paper;
  IlqrOptions ilqr;
  double divergence_norm = 1e6;
};

struct StepDiagnostics {
  double rho = std::numeric_limits<double>::quiet_NaN();
  double beta = std::numeric_limits<double>::quiet_NaN();
  double n_eff = std::numeric_limits<double>::quiet_NaN();
  double planned_cost = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  bool degraded = false;
};

// One control tick: moment update, prior evaluation, beta/N adaptation,
// NIW fusion, conditioning, warm-started iLQR, and exploration sampling
// with covariance proportional to Quu^-1.
class Controller {
 public:
  Controller(std::shared_ptr<const PriorModel> prior, RunningMoments moments,
             MpcConfig cfg);

  VectorXd step(const VectorXd& x_t, const CostModel& cost,
                StepDiagnostics* diag = nullptr);

  const MpcConfig& config() const { return cfg_; }
  const RunningMoments& moments() const { return moments_; }
  const std::optional<TimeVaryingLinearPolicy>& policy() const {
    return warm_;
  }
  // The conditioned dynamics used for planning at the last tick.
  const std::optional<LinearGaussianDynamics>& last_dynamics() const {
    return last_dyn_;
  }

 private:
  VectorXd fallback_action(const VectorXd& x_t, int d_u, StepDiagnostics* diag);

  std::shared_ptr<const PriorModel> prior_;
  RunningMoments moments_;
  MpcConfig cfg_;
  std::optional<std::pair<VectorXd, VectorXd>> prev_;  // (x, u)
  std::optional<TimeVaryingLinearPolicy> warm_;
  std::optional<LinearGaussianDynamics> last_dyn_;
  std::mt19937_64 rng_;
};

struct TickLog {
  int t = 0;
  VectorXd x;
  VectorXd u;
  StepDiagnostics diag;
};

struct EpisodeResult {
  std::vector<TickLog> ticks;
  VectorXd final_state;
  bool success = false;
  bool aborted = false;
  double final_distance = std::numeric_limits<double>::quiet_NaN();
  // First time the distance criterion was met, seconds; NaN if never.
  double time_to_success = std::numeric_limits<double>::quiet_NaN();
};

using SuccessPredicate =
    std::function<bool(const Environment&, const VectorXd& final_state)>;

// Runs the control loop from x0 for at most t_max ticks. Success is
// judged at the episode end (distance below the environment threshold
// unless a custom predicate is given). State norms beyond
// cfg.divergence_norm abort the episode as a failure.
EpisodeResult run_episode(Environment& env, Controller& ctrl,
                          const CostModel& cost, const VectorXd& x0,
                          int t_max, const SuccessPredicate& pred = {});

}  // namespace odmpc
