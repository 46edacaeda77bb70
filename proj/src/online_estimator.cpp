#include "odmpc/online_estimator.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "odmpc/parallel.hpp"

namespace odmpc {

RunningMoments::RunningMoments(VectorXd mean0, MatrixXd second_moment0,
                               double beta, double n_eff)
    : mu_hat_(std::move(mean0)),
      delta_(std::move(second_moment0)),
      beta_(beta),
      n_eff_(n_eff) {
  if (delta_.rows() != mu_hat_.size() || delta_.cols() != mu_hat_.size()) {
    throw std::invalid_argument("RunningMoments: dimension mismatch");
  }
}

void RunningMoments::observe(const VectorXd& p_t) {
  if (p_t.size() != mu_hat_.size()) {
    throw std::invalid_argument("RunningMoments::observe: dimension mismatch");
  }
  if (!p_t.allFinite()) {
    throw std::invalid_argument("RunningMoments::observe: non-finite input");
  }
  mu_hat_ = beta_ * mu_hat_ + (1.0 - beta_) * p_t;
  delta_ = beta_ * delta_ + (1.0 - beta_) * (p_t * p_t.transpose());
  delta_ = symmetrized(delta_);
  last_obs_ = p_t;
}

MatrixXd RunningMoments::empirical_cov() const {
  return symmetrized(delta_ - mu_hat_ * mu_hat_.transpose());
}

AdaptResult adapt(const RunningMoments& moments,
                  const JointGaussian& prior_gaussian, const VectorXd& x_prev,
                  const VectorXd& u_prev, const VectorXd& x_t,
                  const AdaptConfig& cfg) {
  const int d_x = static_cast<int>(x_t.size());
  const int d_u = static_cast<int>(u_prev.size());
  if (moments.dim() != 2 * d_x + d_u || prior_gaussian.dim() != moments.dim()) {
    throw std::invalid_argument("adapt: dimension mismatch");
  }

  // Both predictions go through the same conditioning path as planning.
  const JointGaussian empirical{moments.mean(), moments.empirical_cov()};
  const LinearGaussianDynamics emp_dyn = condition_dynamics(empirical, d_x, d_u);
  const LinearGaussianDynamics prior_dyn =
      condition_dynamics(prior_gaussian, d_x, d_u);

  const double emp_err = (emp_dyn.predict(x_prev, u_prev) - x_t).squaredNorm();
  const double prior_err =
      (prior_dyn.predict(x_prev, u_prev) - x_t).squaredNorm();

  AdaptResult out;
  out.rho = (prior_err > 0.0) ? emp_err / prior_err : cfg.rho_floor;
  out.beta =
      std::clamp(1.0 - cfg.eta0 * out.rho, cfg.beta_min, cfg.beta_max);
  const double n_raw = (out.rho > 0.0)
                           ? cfg.nu0 / out.rho
                           : std::numeric_limits<double>::infinity();
  out.n_eff = std::clamp(n_raw, cfg.n_min, cfg.n_max);
  return out;
}

BatchMoments batch_moments_serial(const MatrixXd& rows) {
  const auto n = static_cast<std::size_t>(rows.rows());
  const int d = static_cast<int>(rows.cols());
  BatchMoments out;
  out.mean = VectorXd::Zero(d);
  out.second_moment = MatrixXd::Zero(d, d);
  out.count = n;
  for (std::size_t i = 0; i < n; ++i) {
    out.mean += rows.row(i).transpose();
    out.second_moment.selfadjointView<Eigen::Lower>().rankUpdate(
        rows.row(i).transpose());
  }
  if (n > 0) {
    out.mean /= static_cast<double>(n);
    out.second_moment =
        MatrixXd(out.second_moment.selfadjointView<Eigen::Lower>()) /
        static_cast<double>(n);
  }
  return out;
}

BatchMoments batch_moments(const MatrixXd& rows) {
  const auto n = static_cast<std::size_t>(rows.rows());
  const int d = static_cast<int>(rows.cols());
  struct Acc {
    VectorXd s;
    MatrixXd ss;
  };
  // Fixed chunking keeps the summation order independent of thread count.
  Acc total = par::chunked_reduce<Acc>(
      n, 256,
      [d] {
        return Acc{VectorXd::Zero(d), MatrixXd::Zero(d, d)};
      },
      [&rows](std::size_t lo, std::size_t hi, Acc& acc) {
        for (std::size_t i = lo; i < hi; ++i) {
          acc.s += rows.row(i).transpose();
          acc.ss.selfadjointView<Eigen::Lower>().rankUpdate(
              rows.row(i).transpose());
        }
      },
      [](Acc& t, const Acc& p) {
        t.s += p.s;
        t.ss += p.ss;
      });
  BatchMoments out;
  out.count = n;
  if (n == 0) {
    out.mean = VectorXd::Zero(d);
    out.second_moment = MatrixXd::Zero(d, d);
    return out;
  }
  out.mean = total.s / static_cast<double>(n);
  out.second_moment =
      MatrixXd(total.ss.selfadjointView<Eigen::Lower>()) /
      static_cast<double>(n);
  return out;
}

RunningMoments initialize_from_dataset(const TransitionDataset& dataset,
                                       const AdaptConfig& cfg) {
  if (dataset.empty()) {
    throw std::invalid_argument("initialize_from_dataset: empty dataset");
  }
  const int d = dataset.stacked_dim();
  MatrixXd rows(dataset.size(), d);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    rows.row(i) = stacked(dataset.records[i]).transpose();
  }
  BatchMoments mom = batch_moments(rows);
  return RunningMoments(mom.mean, symmetrized(mom.second_moment), cfg.beta_max,
                        cfg.n_min);
}

}  // namespace odmpc
