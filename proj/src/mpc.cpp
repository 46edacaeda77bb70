#include "odmpc/mpc.hpp"

#include <chrono>
#include <cmath>

#include "odmpc/errors.hpp"
#include "odmpc/rng_util.hpp"

namespace odmpc {

Controller::Controller(std::shared_ptr<const PriorModel> prior,
                       RunningMoments moments, MpcConfig cfg)
    : prior_(std::move(prior)),
      moments_(std::move(moments)),
      cfg_(cfg),
      rng_(mix_seed(cfg.seed, 0xC0117)) {}

VectorXd Controller::fallback_action(const VectorXd& x_t, int d_u,
                                     StepDiagnostics* diag) {
  if (diag) diag->degraded = true;
  if (!warm_) return VectorXd::Zero(d_u);
  // Previous policy, shifted one step.
  const int H = warm_->horizon();
  const int t1 = std::min(1, H - 1);
  const VectorXd u = warm_->action(t1, x_t);
  TimeVaryingLinearPolicy shifted = *warm_;
  for (int t = 0; t + 1 < H; ++t) {
    shifted.x_hat[t] = warm_->x_hat[t + 1];
    shifted.u_hat[t] = warm_->u_hat[t + 1];
    shifted.K[t] = warm_->K[t + 1];
    shifted.k[t] = warm_->k[t + 1];
    shifted.Quu[t] = warm_->Quu[t + 1];
  }
  warm_ = shifted;
  return u;
}

VectorXd Controller::step(const VectorXd& x_t, const CostModel& cost,
                          StepDiagnostics* diag) {
  const auto t_start = std::chrono::steady_clock::now();
  StepDiagnostics local;
  const int d_x = static_cast<int>(x_t.size());
  const int d_u = moments_.dim() - 2 * d_x;

  // Moment update with the previous beta (printed order), then the
  // beta/N refresh; the refreshed N feeds this tick's fusion.
  if (cfg_.adapt && prev_) {
    VectorXd p(moments_.dim());
    p << prev_->first, prev_->second, x_t;
    moments_.observe(p);
  }

  // Prior context: previous transition where available, stationary
  // bootstrap on the first tick; query action is the warm-started plan.
  const VectorXd x_prev = prev_ ? prev_->first : x_t;
  const VectorXd u_prev = prev_ ? prev_->second : VectorXd::Zero(d_u);
  VectorXd u_query = VectorXd::Zero(d_u);
  if (warm_) {
    const int t1 = std::min(1, warm_->horizon() - 1);
    u_query = warm_->u_hat[t1] + warm_->k[t1];
  } else if (prev_) {
    u_query = prev_->second;
  }

  VectorXd u_t;
  try {
    const NIWParams niw = prior_->evaluate(x_prev, u_prev, x_t, u_query);

    if (cfg_.adapt && prev_) {
      const JointGaussian prior_g{niw.mu0, niw.Phi / niw.n0};
      const AdaptResult ar =
          adapt(moments_, prior_g, x_prev, u_prev, x_t, cfg_.adapt_cfg);
      moments_.set_beta(ar.beta);
      moments_.set_n_eff(ar.n_eff);
      local.rho = ar.rho;
    }
    local.beta = moments_.beta();
    local.n_eff = moments_.n_eff();

    const JointGaussian joint =
        niw_map_update(niw, moments_.mean(), moments_.empirical_cov(),
                       moments_.n_eff(), cfg_.mean_rule);
    const LinearGaussianDynamics dyn = condition_dynamics(joint, d_x, d_u);
    last_dyn_ = dyn;

    // One local model replicated across the horizon.
    LinearDynamicsModel model(dyn);
    const int H = cfg_.horizon;
    IlqrOptions opts = cfg_.ilqr;
    opts.max_iters = cfg_.ilqr_iters;

    // Shift-or-reset warm start: plan from the shifted previous policy
    // rolled under the new model and from scratch, keep the cheaper.
    IlqrResult sol = ilqr_solve(
        model, cost, x_t, std::vector<VectorXd>(H, VectorXd::Zero(d_u)),
        cfg_.gamma, opts);
    if (warm_) {
      std::vector<VectorXd> shifted(H);
      VectorXd x = x_t;
      const int Hw = warm_->horizon();
      for (int t = 0; t < H; ++t) {
        const int s = std::min(t + 1, Hw - 1);
        shifted[t] = warm_->action(s, x);
        x = dyn.predict(x, shifted[t]);
      }
      IlqrResult warm_sol =
          ilqr_solve(model, cost, x_t, shifted, cfg_.gamma, opts);
      if (warm_sol.total_cost <= sol.total_cost) sol = std::move(warm_sol);
    }
    local.planned_cost = sol.total_cost;

    VectorXd u_mean = sol.policy.action(0, x_t);
    if (cfg_.noise_scale > 0.0) {
      // u ~ N(u_mean, noise_scale * Quu^-1) via Quu = L L^T.
      Eigen::LLT<MatrixXd> llt(sol.policy.Quu[0]);
      std::normal_distribution<double> gauss(0.0, 1.0);
      VectorXd z(d_u);
      for (int i = 0; i < d_u; ++i) z[i] = gauss(rng_);
      u_t = u_mean + std::sqrt(cfg_.noise_scale) *
                         llt.matrixL().transpose().solve(z);
    } else {
      u_t = u_mean;
    }
    warm_ = sol.policy;
  } catch (const ConditioningError&) {
    u_t = fallback_action(x_t, d_u, &local);
  } catch (const BackwardPassError&) {
    u_t = fallback_action(x_t, d_u, &local);
  }

  prev_ = std::make_pair(x_t, u_t);
  local.wall_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t_start)
          .count();
  if (diag) *diag = local;
  return u_t;
}

EpisodeResult run_episode(Environment& env, Controller& ctrl,
                          const CostModel& cost, const VectorXd& x0, int t_max,
                          const SuccessPredicate& pred) {
  EpisodeResult out;
  VectorXd x = x0;
  for (int t = 0; t < t_max; ++t) {
    TickLog tick;
    tick.t = t;
    tick.x = x;
    tick.u = ctrl.step(x, cost, &tick.diag);
    x = env.transition(x, tick.u);
    out.ticks.push_back(std::move(tick));
    if (!x.allFinite() || x.norm() > ctrl.config().divergence_norm) {
      out.aborted = true;
      out.final_state = x;
      out.final_distance = std::numeric_limits<double>::infinity();
      return out;
    }
    if (std::isnan(out.time_to_success) &&
        env.distance(x) <= env.success_threshold()) {
      out.time_to_success = (t + 1) / ctrl.config().rate_hz;
    }
  }
  out.final_state = x;
  out.final_distance = env.distance(x);
  out.success = pred ? pred(env, x)
                     : (out.final_distance <= env.success_threshold());
  return out;
}

}  // namespace odmpc
