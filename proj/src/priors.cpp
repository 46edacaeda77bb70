#include "odmpc/priors.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "odmpc/errors.hpp"
#include "odmpc/online_estimator.hpp"
#include "odmpc/parallel.hpp"

namespace odmpc {

JointGaussian PriorModel::prior_gaussian(const VectorXd& x_prev,
                                         const VectorXd& u_prev,
                                         const VectorXd& x,
                                         const VectorXd& u) const {
  const NIWParams p = evaluate(x_prev, u_prev, x, u);
  return JointGaussian{p.mu0, p.Phi / p.n0};
}

NIWParams GaussianPrior::evaluate(const VectorXd&, const VectorXd&,
                                  const VectorXd&, const VectorXd&) const {
  return NIWParams{n0_ * base_.cov, base_.mean, m_, n0_};
}

GaussianPrior fit_gaussian_prior(const TransitionDataset& dataset, double n0,
                                 double m) {
  const int d = dataset.stacked_dim();
  if (static_cast<int>(dataset.size()) < d + 1) {
    throw std::invalid_argument("fit_gaussian_prior: needs at least D+1 rows");
  }
  MatrixXd rows(dataset.size(), d);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    rows.row(i) = stacked(dataset.records[i]).transpose();
  }
  const BatchMoments mom = batch_moments(rows);
  MatrixXd cov = symmetrized(mom.second_moment -
                             mom.mean * mom.mean.transpose());

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  const double ev_min = es.eigenvalues().minCoeff();
  const double ev_max = es.eigenvalues().maxCoeff();
  bool regularized = false;
  if (ev_min <= 1e-10 * std::max(ev_max, 1e-300)) {
    cov.diagonal().array() += 1e-8;
    regularized = true;
  }
  return GaussianPrior(JointGaussian{mom.mean, cov}, n0, m, regularized);
}

namespace {

struct ComponentDensity {
  Eigen::LLT<MatrixXd> llt;
  VectorXd mean;
  double log_norm = 0.0;  // -0.5 (d log 2pi + logdet)
  double log_weight = 0.0;
};

std::vector<ComponentDensity> prepare_densities(
    const std::vector<GmmComponent>& comps) {
  std::vector<ComponentDensity> out(comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const int d = static_cast<int>(comps[k].mean.size());
    MatrixXd cov = symmetrized(comps[k].cov);
    double jitter = 0.0;
    Eigen::LLT<MatrixXd> llt(cov);
    while (llt.info() != Eigen::Success && jitter < 1e-2) {
      jitter = (jitter == 0.0) ? 1e-12 * std::max(cov.trace(), 1.0)
                               : jitter * 10.0;
      MatrixXd c = cov;
      c.diagonal().array() += jitter;
      llt.compute(c);
    }
    if (llt.info() != Eigen::Success) {
      throw FitError("gmm: component covariance not positive definite");
    }
    double logdet = 0.0;
    for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    out[k].llt = llt;
    out[k].mean = comps[k].mean;
    out[k].log_norm = -0.5 * (d * std::log(2.0 * M_PI) + logdet);
    out[k].log_weight = std::log(std::max(comps[k].weight, 1e-300));
  }
  return out;
}

// Log joint density + responsibilities for one row. Returns the row
// log-likelihood; on total underflow falls back to the heaviest component.
double row_responsibilities(const std::vector<ComponentDensity>& dens,
                            const VectorXd& p,
                            Eigen::Ref<Eigen::RowVectorXd, 0,
                                       Eigen::InnerStride<>> resp) {
  const std::size_t k = dens.size();
  Eigen::RowVectorXd lw(k);
  for (std::size_t j = 0; j < k; ++j) {
    const VectorXd diff = p - dens[j].mean;
    const double quad = dens[j].llt.matrixL().solve(diff).squaredNorm();
    lw[j] = dens[j].log_weight + dens[j].log_norm - 0.5 * quad;
  }
  const double mx = lw.maxCoeff();
  if (!std::isfinite(mx)) {
    int best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (dens[j].log_weight > dens[best].log_weight) best = static_cast<int>(j);
    }
    resp.setZero();
    resp[best] = 1.0;
    return -std::numeric_limits<double>::infinity();
  }
  const double lse = mx + std::log((lw.array() - mx).exp().sum());
  resp = (lw.array() - lse).exp();
  return lse;
}

}  // namespace

GmmEstep gmm_estep_serial(const std::vector<GmmComponent>& comps,
                          const MatrixXd& rows) {
  const auto dens = prepare_densities(comps);
  GmmEstep out;
  out.resp.resize(rows.rows(), static_cast<int>(comps.size()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.loglik +=
        row_responsibilities(dens, rows.row(i).transpose(), out.resp.row(i));
  }
  return out;
}

GmmEstep gmm_estep(const std::vector<GmmComponent>& comps,
                   const MatrixXd& rows) {
  const auto dens = prepare_densities(comps);
  GmmEstep out;
  out.resp.resize(rows.rows(), static_cast<int>(comps.size()));
  const auto n = static_cast<std::size_t>(rows.rows());
  // Rows are independent; only the log-likelihood reduces, in chunk order.
  out.loglik = par::chunked_reduce<double>(
      n, 512, [] { return 0.0; },
      [&](std::size_t lo, std::size_t hi, double& acc) {
        for (std::size_t i = lo; i < hi; ++i) {
          acc += row_responsibilities(dens, rows.row(i).transpose(),
                                      out.resp.row(i));
        }
      },
      [](double& t, const double& p) { t += p; });
  return out;
}

VectorXd GmmPrior::responsibilities(const VectorXd& p) const {
  const auto dens = prepare_densities(comps_);
  Eigen::RowVectorXd resp(static_cast<int>(comps_.size()));
  row_responsibilities(dens, p, resp);
  return resp.transpose();
}

NIWParams GmmPrior::evaluate(const VectorXd& x_prev, const VectorXd& u_prev,
                             const VectorXd& x, const VectorXd&) const {
  VectorXd p(x_prev.size() + u_prev.size() + x.size());
  p << x_prev, u_prev, x;
  const VectorXd resp = responsibilities(p);

  if (!soft_) {
    int best = 0;
    resp.maxCoeff(&best);
    return NIWParams{n0_ * comps_[best].cov, comps_[best].mean, m_, n0_};
  }

  const int d = static_cast<int>(comps_.front().mean.size());
  VectorXd mean = VectorXd::Zero(d);
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    mean += resp[static_cast<int>(k)] * comps_[k].mean;
  }
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k < comps_.size(); ++k) {
    const VectorXd dm = comps_[k].mean - mean;
    cov += resp[static_cast<int>(k)] *
           (comps_[k].cov + dm * dm.transpose());
  }
  return NIWParams{n0_ * symmetrized(cov), mean, m_, n0_};
}

namespace {

std::vector<int> kmeanspp_centers(const MatrixXd& rows, int k,
                                  std::mt19937_64& rng) {
  const auto n = rows.rows();
  std::vector<int> centers;
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.push_back(static_cast<int>(first(rng)));
  VectorXd d2 = (rows.rowwise() - rows.row(centers[0])).rowwise().squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(centers.size()) < k) {
    const double total = d2.sum();
    int pick = 0;
    if (total > 0.0) {
      double r = unit(rng) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0.0) {
          pick = static_cast<int>(i);
          break;
        }
      }
    } else {
      pick = static_cast<int>(first(rng));
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin(
        (rows.rowwise() - rows.row(pick)).rowwise().squaredNorm());
  }
  return centers;
}

}  // namespace

GmmPrior fit_gmm(const TransitionDataset& dataset, int k, std::uint64_t seed,
                 double n0, double m, bool soft, const GmmFitConfig& cfg,
                 GmmFitReport* report) {
  if (k < 1) throw std::invalid_argument("fit_gmm: k must be >= 1");
  const auto n = static_cast<Eigen::Index>(dataset.size());
  if (n < 10 * k) {
    throw std::invalid_argument("fit_gmm: needs at least 10*k rows");
  }
  const int d = dataset.stacked_dim();
  MatrixXd rows(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    rows.row(i) = stacked(dataset.records[i]).transpose();
  }

  const BatchMoments mom = batch_moments(rows);
  MatrixXd global_cov =
      symmetrized(mom.second_moment - mom.mean * mom.mean.transpose());
  global_cov.diagonal().array() += 1e-8 * std::max(global_cov.trace() / d, 1.0);

  std::mt19937_64 rng(seed);
  const std::vector<int> centers = kmeanspp_centers(rows, k, rng);
  std::vector<GmmComponent> comps(k);
  for (int j = 0; j < k; ++j) {
    comps[j].weight = 1.0 / k;
    comps[j].mean = rows.row(centers[j]).transpose();
    comps[j].cov = global_cov;
  }

  std::uniform_int_distribution<Eigen::Index> any_row(0, n - 1);
  int reseeds = 0;
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const GmmEstep e = gmm_estep(comps, rows);
    if (report) report->loglik.push_back(e.loglik / static_cast<double>(n));

    // M-step, components independent.
    const VectorXd nk = e.resp.colwise().sum().transpose();
    bool collapsed = false;
    par::parallel_for(static_cast<std::size_t>(k), [&](std::size_t j) {
      const auto jj = static_cast<int>(j);
      if (nk[jj] < 1e-12) return;  // handled as collapse below
      const VectorXd mu = (e.resp.col(jj).transpose() * rows).transpose() / nk[jj];
      MatrixXd scatter = rows.transpose() *
                         (e.resp.col(jj).asDiagonal() * rows) / nk[jj];
      MatrixXd cov = symmetrized(scatter - mu * mu.transpose());
      cov.diagonal().array() += 1e-9 * std::max(cov.trace() / d, 1e-12);
      comps[j].weight = nk[jj] / static_cast<double>(n);
      comps[j].mean = mu;
      comps[j].cov = cov;
    });

    for (int j = 0; j < k; ++j) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(comps[j].cov);
      if (nk[j] < 1e-12 || es.eigenvalues().minCoeff() < cfg.collapse_eig) {
        if (++reseeds > cfg.max_reseeds) {
          throw FitError("fit_gmm: component collapsed too many times");
        }
        comps[j].mean = rows.row(any_row(rng)).transpose();
        comps[j].cov = global_cov;
        comps[j].weight = 1.0 / k;
        collapsed = true;
      }
    }
    if (collapsed) {
      double wsum = 0.0;
      for (const auto& c : comps) wsum += c.weight;
      for (auto& c : comps) c.weight /= wsum;
      prev_ll = -std::numeric_limits<double>::infinity();
      continue;
    }

    if (std::isfinite(prev_ll) &&
        (e.loglik - prev_ll) / static_cast<double>(n) < cfg.tol_per_sample) {
      break;
    }
    prev_ll = e.loglik;
  }
  if (report) report->reseeds = reseeds;
  return GmmPrior(std::move(comps), n0, m, soft);
}

NIWParams NeuralNetPrior::evaluate(const VectorXd& x_prev,
                                   const VectorXd& u_prev, const VectorXd& x,
                                   const VectorXd& u) const {
  const int d_z = net_.d_x + net_.d_u;
  VectorXd input(net_.input_dim());
  if (net_.context) {
    input << x_prev, u_prev, x, u;
  } else {
    input << x, u;
  }
  const auto fwd = net_.forward(input);
  if (!fwd.next_state.allFinite()) {
    throw EvaluationError("nn prior: non-finite network output");
  }
  // Jacobian w.r.t. the current [x; u] block only.
  const MatrixXd J =
      net_.jacobian(input).middleCols(net_.x_offset(), d_z);

  VectorXd query(d_z);
  query << x, u;
  const int dim = d_z + net_.d_x;
  VectorXd mean(dim);
  mean << query, fwd.next_state;

  MatrixXd cov(dim, dim);
  cov.topLeftCorner(d_z, d_z) = alpha_ * MatrixXd::Identity(d_z, d_z);
  cov.topRightCorner(d_z, net_.d_x) = alpha_ * J.transpose();
  cov.bottomLeftCorner(net_.d_x, d_z) = alpha_ * J;
  cov.bottomRightCorner(net_.d_x, net_.d_x) =
      alpha_ * J * J.transpose() + residual_cov_;
  return NIWParams{n0_ * symmetrized(cov), mean, m_, n0_};
}

MatrixXd estimate_residual_cov(const MLPModel& net,
                               const TransitionDataset& dataset) {
  if (dataset.empty()) {
    throw std::invalid_argument("estimate_residual_cov: empty dataset");
  }
  MatrixXd residuals(dataset.size(), net.d_x);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& rec = dataset.records[i];
    const VectorXd input =
        net.context ? context_input(rec) : current_input(rec);
    residuals.row(i) =
        (rec.x_next - net.forward(input).next_state).transpose();
  }
  const BatchMoments mom = batch_moments(residuals);
  return eigen_floor(mom.second_moment - mom.mean * mom.mean.transpose(), 0.0);
}

}  // namespace odmpc
