#include "odmpc/gaussian.hpp"

#include <stdexcept>

#include "odmpc/errors.hpp"

namespace odmpc {

namespace {
constexpr double kConditionRidge = 1e-6;   // scaled by trace/dim
constexpr double kMaxCondition = 1e14;
}  // namespace

MatrixXd symmetrized(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

MatrixXd eigen_floor(const MatrixXd& a, double min_eig) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(a));
  VectorXd ev = es.eigenvalues().cwiseMax(min_eig);
  return symmetrized(es.eigenvectors() * ev.asDiagonal() *
                     es.eigenvectors().transpose());
}

bool is_symmetric(const MatrixXd& a, double rel_tol) {
  const double scale = std::max(1.0, a.norm());
  return (a - a.transpose()).norm() <= rel_tol * scale;
}

bool is_psd(const MatrixXd& a, double tol_scale) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(a));
  return es.eigenvalues().minCoeff() >= -tol_scale * std::max(1.0, a.norm());
}

JointGaussian niw_map_update(const NIWParams& prior, const VectorXd& emp_mean,
                             const MatrixXd& emp_cov, double n_samples,
                             MeanRule rule) {
  if (!(n_samples > 0.0)) {
    throw std::domain_error("niw_map_update: N must be positive");
  }
  if (!emp_mean.allFinite() || !emp_cov.allFinite() ||
      !prior.Phi.allFinite() || !prior.mu0.allFinite() ||
      !std::isfinite(prior.m) || !std::isfinite(prior.n0)) {
    throw std::invalid_argument("niw_map_update: non-finite input");
  }
  if (emp_mean.size() != prior.mu0.size() ||
      emp_cov.rows() != prior.Phi.rows() ||
      emp_cov.cols() != prior.Phi.cols()) {
    throw std::invalid_argument("niw_map_update: dimension mismatch");
  }

  const double N = n_samples;
  const VectorXd dmu = emp_mean - prior.mu0;
  JointGaussian out;
  out.cov = (prior.Phi + N * emp_cov +
             (N * prior.m / (N + prior.m)) * (dmu * dmu.transpose())) /
            (N + prior.n0);
  out.cov = symmetrized(out.cov);
  if (rule == MeanRule::Paper) {
    out.mean = (prior.m * prior.mu0 + prior.n0 * emp_mean) / (prior.m + prior.n0);
  } else {
    out.mean = (prior.m * prior.mu0 + N * emp_mean) / (prior.m + N);
  }
  return out;
}

LinearGaussianDynamics condition_dynamics(const JointGaussian& joint, int d_x,
                                          int d_u) {
  const int d_z = d_x + d_u;
  const int dim = 2 * d_x + d_u;
  if (joint.dim() != dim || joint.cov.rows() != dim || joint.cov.cols() != dim) {
    throw std::invalid_argument("condition_dynamics: dimension mismatch");
  }
  if (!joint.mean.allFinite() || !joint.cov.allFinite()) {
    throw std::invalid_argument("condition_dynamics: non-finite input");
  }

  const MatrixXd sig_zz = symmetrized(joint.cov.topLeftCorner(d_z, d_z));
  const MatrixXd sig_zy = joint.cov.topRightCorner(d_z, d_x);
  const MatrixXd sig_yy = joint.cov.bottomRightCorner(d_x, d_x);
  const VectorXd mu_z = joint.mean.head(d_z);
  const VectorXd mu_y = joint.mean.tail(d_x);

  // Ridge lifts only eigenvalues that sit below it; well-conditioned
  // blocks are inverted exactly. The absolute floor keeps degenerate
  // (near-zero) covariances conditionable: they collapse to f = 0 and
  // f_c = mu, the deterministic point-mass limit.
  const double ridge =
      std::max(kConditionRidge * sig_zz.trace() / d_z, 1e-12);
  MatrixXd zz = sig_zz;
  {
    Eigen::SelfAdjointEigenSolver<MatrixXd> probe(zz);
    if (probe.eigenvalues().minCoeff() < ridge) {
      zz.diagonal().array() += ridge;
    }
  }

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(zz);
  const double ev_min = es.eigenvalues().minCoeff();
  const double ev_max = es.eigenvalues().maxCoeff();
  const double cond = (ev_min > 0.0)
                          ? ev_max / ev_min
                          : std::numeric_limits<double>::infinity();
  if (!(ev_min > 0.0) || cond > kMaxCondition) {
    throw ConditioningError(
        "condition_dynamics: [x,u] covariance block is singular", cond);
  }

  // f over [x;u] so that E[x'|x,u] = f [x;u] + f_c.
  const MatrixXd solved = es.eigenvectors() *
                          es.eigenvalues().cwiseInverse().asDiagonal() *
                          es.eigenvectors().transpose() * sig_zy;
  const MatrixXd f = solved.transpose();

  LinearGaussianDynamics dyn;
  dyn.f_x = f.leftCols(d_x);
  dyn.f_u = f.rightCols(d_u);
  dyn.f_c = mu_y - f * mu_z;
  dyn.F = eigen_floor(sig_yy - f * sig_zz * f.transpose(), 0.0);
  return dyn;
}

}  // namespace odmpc
