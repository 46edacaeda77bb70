#pragma once

#include <Eigen/Dense>

namespace odmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Joint Gaussian over stacked transition vectors [x; u; x'].
struct JointGaussian {
  VectorXd mean;
  MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

// Normal-inverse-Wishart prior parameters (Phi, mu0, m, n0).
struct NIWParams {
  MatrixXd Phi;
  VectorXd mu0;
  double m = 1.0;
  double n0 = 1.0;
};

// Local linear-Gaussian dynamics: x' ~ N(f_x x + f_u u + f_c, F).
struct LinearGaussianDynamics {
  MatrixXd f_x;
  MatrixXd f_u;
  VectorXd f_c;
  MatrixXd F;

  int state_dim() const { return static_cast<int>(f_x.rows()); }
  int control_dim() const { return static_cast<int>(f_u.cols()); }

  VectorXd predict(const VectorXd& x, const VectorXd& u) const {
    return f_x * x + f_u * u + f_c;
  }
};

// Posterior mean rule. `Paper` weighs the empirical mean by n0 as printed;
// `Standard` uses the textbook NIW weight N.
enum class MeanRule { Paper, Standard };

MatrixXd symmetrized(const MatrixXd& a);

// Clamps eigenvalues of a symmetric matrix at min_eig.
MatrixXd eigen_floor(const MatrixXd& a, double min_eig);

bool is_symmetric(const MatrixXd& a, double rel_tol = 1e-10);

// Smallest eigenvalue must be >= -tol_scale * ||a||.
bool is_psd(const MatrixXd& a, double tol_scale = 1e-8);

// MAP fusion of an NIW prior with empirical moments from n_samples
// observations. Output covariance is symmetrized.
JointGaussian niw_map_update(const NIWParams& prior, const VectorXd& emp_mean,
                             const MatrixXd& emp_cov, double n_samples,
                             MeanRule rule = MeanRule::Paper);

// Conditions a joint Gaussian over [x; u; x'] on [x; u], producing the
// affine map E[x'|x,u] = f_x x + f_u u + f_c and the conditional
// covariance F (symmetrized, eigenvalue-floored at zero). The [x,u] block
// receives a small trace-scaled ridge before inversion; if it is still
// numerically singular a ConditioningError is thrown.
LinearGaussianDynamics condition_dynamics(const JointGaussian& joint, int d_x,
                                          int d_u);

}  // namespace odmpc
