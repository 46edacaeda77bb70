#pragma once

#include <Eigen/Dense>
#include <optional>

#include "odmpc/dataset.hpp"
#include "odmpc/gaussian.hpp"

namespace odmpc {

// Hyperparameters of the adaptive forgetting rule. The 1 - eta0*rho and
// nu0/rho updates go out of range for large empirical error, so both
// outputs are clamped.
struct AdaptConfig {
  double eta0 = 8.0;
  double nu0 = 1.0;
  double beta_min = 0.0;
  double beta_max = 0.9995;
  double n_min = 1.0;
  double n_max = 50.0;
  double rho_floor = 1e-8;
};

// Exponentially forgetting estimate of the mean and second moment of the
// stream of stacked transition vectors p_t = [x_{t-1}; u_{t-1}; x_t].
class RunningMoments {
 public:
  RunningMoments() = default;
  RunningMoments(VectorXd mean0, MatrixXd second_moment0, double beta,
                 double n_eff);

  // mu <- beta mu + (1-beta) p;  Delta <- beta Delta + (1-beta) p p^T.
  void observe(const VectorXd& p_t);

  MatrixXd empirical_cov() const;  // Delta - mu mu^T, symmetrized

  const VectorXd& mean() const { return mu_hat_; }
  const MatrixXd& second_moment() const { return delta_; }
  double beta() const { return beta_; }
  double n_eff() const { return n_eff_; }
  void set_beta(double b) { beta_ = b; }
  void set_n_eff(double n) { n_eff_ = n; }
  const std::optional<VectorXd>& last_obs() const { return last_obs_; }
  int dim() const { return static_cast<int>(mu_hat_.size()); }

 private:
  VectorXd mu_hat_;
  MatrixXd delta_;
  double beta_ = 0.9995;
  double n_eff_ = 1.0;
  std::optional<VectorXd> last_obs_;
};

struct AdaptResult {
  double beta = 0.0;
  double n_eff = 0.0;
  double rho = 0.0;
};

// Compares one-step predictions of the empirical model N(mu_hat, Sigma_hat)
// and the prior model N(mu0, Phi/n0), both conditioned on (x_prev, u_prev),
// against the observed x_t, and maps the error ratio rho into new (beta, N).
AdaptResult adapt(const RunningMoments& moments,
                  const JointGaussian& prior_gaussian, const VectorXd& x_prev,
                  const VectorXd& u_prev, const VectorXd& x_t,
                  const AdaptConfig& cfg);

// Mean and (1/N) sum p p^T of a batch of observations, one per row.
struct BatchMoments {
  VectorXd mean;
  MatrixXd second_moment;
  std::size_t count = 0;
};

// OpenMP kernel used in production, plus the serial reference kept for
// testing and benchmarking against it.
BatchMoments batch_moments(const MatrixXd& rows);
BatchMoments batch_moments_serial(const MatrixXd& rows);

// Batch moments of the stacked dataset vectors; beta/N start at the
// neutral defaults (beta_max, n_min).
RunningMoments initialize_from_dataset(const TransitionDataset& dataset,
                                       const AdaptConfig& cfg = {});

}  // namespace odmpc
