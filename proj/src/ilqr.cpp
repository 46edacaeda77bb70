#include "odmpc/ilqr.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "odmpc/errors.hpp"

namespace odmpc {

BackwardPassResult lqr_backward(
    const std::vector<LinearGaussianDynamics>& dynamics,
    const std::vector<QuadraticCostExpansion>& cost, double gamma,
    double reg_mu) {
  const int T = static_cast<int>(dynamics.size());
  if (T < 1 || cost.size() != dynamics.size()) {
    throw std::invalid_argument("lqr_backward: empty or mismatched sequences");
  }
  const int d_x = dynamics.front().state_dim();
  const int d_u = dynamics.front().control_dim();
  const int d_z = d_x + d_u;

  BackwardPassResult out;
  out.V_xx.assign(T + 1, MatrixXd::Zero(d_x, d_x));
  out.V_x.assign(T + 1, VectorXd::Zero(d_x));
  out.policy.x_hat.assign(T, VectorXd::Zero(d_x));
  out.policy.u_hat.assign(T, VectorXd::Zero(d_u));
  out.policy.K.assign(T, MatrixXd::Zero(d_u, d_x));
  out.policy.k.assign(T, VectorXd::Zero(d_u));
  out.policy.Quu.assign(T, MatrixXd::Zero(d_u, d_u));

  for (int t = T - 1; t >= 0; --t) {
    MatrixXd f_xu(d_x, d_z);
    f_xu << dynamics[t].f_x, dynamics[t].f_u;

    const MatrixXd Qh = symmetrized(
        cost[t].hess + gamma * f_xu.transpose() * out.V_xx[t + 1] * f_xu);
    const VectorXd Qg = cost[t].grad + gamma * f_xu.transpose() * out.V_x[t + 1];

    const MatrixXd Qxx = Qh.topLeftCorner(d_x, d_x);
    const MatrixXd Qux = Qh.bottomLeftCorner(d_u, d_x);
    MatrixXd Quu = Qh.bottomRightCorner(d_u, d_u);
    const VectorXd Qx = Qg.head(d_x);
    const VectorXd Qu = Qg.tail(d_u);

    Quu.diagonal().array() += reg_mu;
    Eigen::LLT<MatrixXd> llt(Quu);
    if (llt.info() != Eigen::Success) {
      throw BackwardPassError("lqr_backward: Quu not positive definite", t);
    }

    const MatrixXd K = -llt.solve(Qux);
    const VectorXd k = -llt.solve(Qu);

    out.policy.K[t] = K;
    out.policy.k[t] = k;
    out.policy.Quu[t] = Quu;
    out.V_xx[t] = symmetrized(Qxx - Qux.transpose() * llt.solve(Qux));
    out.V_x[t] = Qx - Qux.transpose() * llt.solve(Qu);
    out.expected_decrease += -(k.dot(Qu) + 0.5 * k.dot(Quu * k));
  }
  return out;
}

namespace {

VectorXd fd_cost_gradient(const CostModel& cost, const VectorXd& x,
                          const VectorXd& u, int t, double eps) {
  const int d_x = static_cast<int>(x.size());
  const int d_z = d_x + static_cast<int>(u.size());
  VectorXd g(d_z);
  VectorXd z(d_z);
  z << x, u;
  for (int i = 0; i < d_z; ++i) {
    const double h = eps * std::max(1.0, std::abs(z[i]));
    VectorXd zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    const double fp = cost.value(zp.head(d_x), zp.tail(d_z - d_x), t);
    const double fm = cost.value(zm.head(d_x), zm.tail(d_z - d_x), t);
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

MatrixXd fd_cost_hessian(const CostModel& cost, const VectorXd& x,
                         const VectorXd& u, int t, double eps) {
  const int d_x = static_cast<int>(x.size());
  const int d_z = d_x + static_cast<int>(u.size());
  VectorXd z(d_z);
  z << x, u;
  auto eval = [&](const VectorXd& zz) {
    return cost.value(zz.head(d_x), zz.tail(d_z - d_x), t);
  };
  // Second differences need a larger step than gradients to keep the
  // cancellation error below the truncation error.
  const double eps2 = std::sqrt(eps);
  MatrixXd h(d_z, d_z);
  for (int i = 0; i < d_z; ++i) {
    const double hi = eps2 * std::max(1.0, std::abs(z[i]));
    for (int j = i; j < d_z; ++j) {
      const double hj = eps2 * std::max(1.0, std::abs(z[j]));
      VectorXd za = z, zb = z, zc = z, zd = z;
      za[i] += hi; za[j] += hj;
      zb[i] += hi; zb[j] -= hj;
      zc[i] -= hi; zc[j] += hj;
      zd[i] -= hi; zd[j] -= hj;
      h(i, j) = (eval(za) - eval(zb) - eval(zc) + eval(zd)) / (4.0 * hi * hj);
      h(j, i) = h(i, j);
    }
  }
  return h;
}

void floor_uu_block(MatrixXd& hess, int d_x, int d_u, double uu_floor) {
  MatrixXd uu = hess.bottomRightCorner(d_u, d_u);
  hess.bottomRightCorner(d_u, d_u) = eigen_floor(uu, uu_floor);
  (void)d_x;
}

void linearize_or_fd(const DynamicsModel& model, const VectorXd& x,
                     const VectorXd& u, int t, double eps, MatrixXd* fx,
                     MatrixXd* fu) {
  if (model.linearize(x, u, t, fx, fu)) return;
  const int d_x = model.state_dim();
  const int d_u = model.control_dim();
  fx->resize(d_x, d_x);
  fu->resize(d_x, d_u);
  for (int i = 0; i < d_x; ++i) {
    const double h = eps * std::max(1.0, std::abs(x[i]));
    VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    fx->col(i) = (model.step(xp, u, t) - model.step(xm, u, t)) / (2.0 * h);
  }
  for (int i = 0; i < d_u; ++i) {
    const double h = eps * std::max(1.0, std::abs(u[i]));
    VectorXd up = u, um = u;
    up[i] += h;
    um[i] -= h;
    fu->col(i) = (model.step(x, up, t) - model.step(x, um, t)) / (2.0 * h);
  }
}

}  // namespace

std::vector<QuadraticCostExpansion> expand_cost(const CostModel& cost,
                                                const std::vector<VectorXd>& xs,
                                                const std::vector<VectorXd>& us,
                                                double fd_eps,
                                                double uu_floor) {
  const int T = static_cast<int>(us.size());
  std::vector<QuadraticCostExpansion> out(T);
  for (int t = 0; t < T; ++t) {
    const int d_x = static_cast<int>(xs[t].size());
    const int d_u = static_cast<int>(us[t].size());
    QuadraticCostExpansion& e = out[t];
    e.constant = cost.value(xs[t], us[t], t);
    if (!cost.quadratic(xs[t], us[t], t, &e.grad, &e.hess)) {
      e.grad = fd_cost_gradient(cost, xs[t], us[t], t, fd_eps);
      e.hess = fd_cost_hessian(cost, xs[t], us[t], t, fd_eps);
    }
    e.hess = symmetrized(e.hess);
    if (!e.grad.allFinite() || !e.hess.allFinite() ||
        !std::isfinite(e.constant)) {
      throw ExpansionError("expand_cost: non-finite derivative", t);
    }
    floor_uu_block(e.hess, d_x, d_u, uu_floor);
  }
  return out;
}

namespace {

struct Rollout {
  std::vector<VectorXd> xs;  // T+1 states
  std::vector<VectorXd> us;  // T controls
  double cost = 0.0;
};

Rollout roll_open_loop(const DynamicsModel& model, const CostModel& cost,
                       const VectorXd& x0, const std::vector<VectorXd>& us) {
  Rollout r;
  r.us = us;
  r.xs.resize(us.size() + 1);
  r.xs[0] = x0;
  for (std::size_t t = 0; t < us.size(); ++t) {
    r.cost += cost.value(r.xs[t], us[t], static_cast<int>(t));
    r.xs[t + 1] = model.step(r.xs[t], us[t], static_cast<int>(t));
  }
  return r;
}

Rollout roll_policy(const DynamicsModel& model, const CostModel& cost,
                    const VectorXd& x0, const Rollout& nominal,
                    const TimeVaryingLinearPolicy& gains, double alpha) {
  Rollout r;
  const std::size_t T = nominal.us.size();
  r.us.resize(T);
  r.xs.resize(T + 1);
  r.xs[0] = x0;
  for (std::size_t t = 0; t < T; ++t) {
    r.us[t] = nominal.us[t] + alpha * gains.k[t] +
              gains.K[t] * (r.xs[t] - nominal.xs[t]);
    r.cost += cost.value(r.xs[t], r.us[t], static_cast<int>(t));
    r.xs[t + 1] = model.step(r.xs[t], r.us[t], static_cast<int>(t));
  }
  return r;
}

}  // namespace

IlqrResult ilqr_solve(const DynamicsModel& model, const CostModel& cost,
                      const VectorXd& x0,
                      const std::vector<VectorXd>& init_controls, double gamma,
                      const IlqrOptions& opts) {
  const int T = static_cast<int>(init_controls.size());
  if (T < 1) throw std::invalid_argument("ilqr_solve: empty control sequence");
  const int d_x = model.state_dim();

  std::ofstream trace;
  if (!opts.trace_path.empty()) trace.open(opts.trace_path, std::ios::app);
  auto log_iter = [&](int iter, double c, double mu, double alpha,
                      bool accepted) {
    if (trace.is_open()) {
      trace << "{\"iter\":" << iter << ",\"cost\":" << c << ",\"mu\":" << mu
            << ",\"alpha\":" << alpha << ",\"accepted\":" << (accepted ? "true" : "false")
            << "}\n";
    }
  };

  Rollout nominal = roll_open_loop(model, cost, x0, init_controls);
  if (!std::isfinite(nominal.cost)) {
    throw std::invalid_argument("ilqr_solve: initial rollout cost not finite");
  }

  IlqrResult result;
  result.iteration_costs.push_back(nominal.cost);

  auto relinearize = [&](const Rollout& r) {
    std::vector<LinearGaussianDynamics> dyn(T);
    for (int t = 0; t < T; ++t) {
      MatrixXd fx, fu;
      linearize_or_fd(model, r.xs[t], r.us[t], t, opts.fd_eps, &fx, &fu);
      dyn[t].f_x = fx;
      dyn[t].f_u = fu;
      dyn[t].f_c = VectorXd::Zero(d_x);
      dyn[t].F = MatrixXd::Zero(d_x, d_x);
    }
    return dyn;
  };

  double mu = 0.0;
  bool have_policy = false;
  // The published policy always re-rolls to exactly the best-known
  // trajectory: either (old nominal, alpha-scaled k) right after an
  // accepted step, or (current nominal, k = 0) at a converged/stalled exit.
  auto publish = [&](const Rollout& ref, const BackwardPassResult& bp,
                     double k_scale) {
    result.policy.x_hat.assign(ref.xs.begin(), ref.xs.begin() + T);
    result.policy.u_hat = ref.us;
    result.policy.K = bp.policy.K;
    result.policy.Quu = bp.policy.Quu;
    result.policy.k = bp.policy.k;
    for (int t = 0; t < T; ++t) result.policy.k[t] *= k_scale;
    have_policy = true;
  };

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const auto dyn = relinearize(nominal);
    const auto expansions =
        expand_cost(cost, nominal.xs, nominal.us, opts.fd_eps, opts.uu_floor);

    // Backward pass with escalating regularization.
    BackwardPassResult bp;
    bool backward_ok = false;
    while (true) {
      try {
        bp = lqr_backward(dyn, expansions, gamma, mu);
        backward_ok = true;
        break;
      } catch (const BackwardPassError&) {
        mu = (mu == 0.0) ? opts.mu_min : mu * 10.0;
        if (mu > opts.mu_max) break;
      }
    }
    if (!backward_ok) {
      result.stalled = true;
      break;
    }

    if (bp.expected_decrease <=
        opts.tol_rel * std::max(std::abs(nominal.cost), 1e-12)) {
      publish(nominal, bp, 0.0);
      result.converged = true;
      break;
    }

    // Backtracking line search on the open-loop term.
    bool accepted = false;
    double alpha = 1.0;
    for (int ls = 0; ls < opts.line_search_steps; ++ls, alpha *= 0.5) {
      Rollout cand = roll_policy(model, cost, x0, nominal, bp.policy, alpha);
      if (std::isfinite(cand.cost) && cand.cost < nominal.cost) {
        const double improvement = nominal.cost - cand.cost;
        publish(nominal, bp, alpha);
        log_iter(iter, cand.cost, mu, alpha, true);
        nominal = cand;
        result.iteration_costs.push_back(nominal.cost);
        result.iterations++;
        accepted = true;
        mu = (mu <= opts.mu_min) ? 0.0 : mu / 10.0;
        if (improvement <
            opts.tol_rel * std::max(std::abs(nominal.cost), 1e-12)) {
          result.converged = true;
        }
        break;
      }
      log_iter(iter, cand.cost, mu, alpha, false);
    }
    if (result.converged) break;
    if (!accepted) {
      mu = (mu == 0.0) ? opts.mu_min : mu * 10.0;
      if (mu > opts.mu_max) {
        result.stalled = true;
        break;
      }
      --iter;  // retry the same nominal with more regularization
      continue;
    }
  }

  if (!have_policy || result.stalled) {
    // Best-so-far trajectory with fresh gains; zero open-loop term so the
    // published policy re-rolls to exactly the reported cost.
    const auto dyn = relinearize(nominal);
    const auto expansions =
        expand_cost(cost, nominal.xs, nominal.us, opts.fd_eps, opts.uu_floor);
    double m2 = std::max(mu, opts.mu_min);
    while (true) {
      try {
        BackwardPassResult bp = lqr_backward(dyn, expansions, gamma, m2);
        publish(nominal, bp, 0.0);
        break;
      } catch (const BackwardPassError&) {
        m2 *= 10.0;
        if (m2 > 100.0 * opts.mu_max) {
          throw BackwardPassError(
              "ilqr_solve: backward pass failed at maximum regularization", 0);
        }
      }
    }
  }

  result.total_cost = nominal.cost;
  return result;
}

}  // namespace odmpc
