#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "odmpc/gaussian.hpp"

namespace odmpc {

// Local quadratic model of the cost at one step, over the stacked [x; u].
struct QuadraticCostExpansion {
  MatrixXd hess;  // (d_x+d_u) x (d_x+d_u), symmetric
  VectorXd grad;
  double constant = 0.0;
};

// Time-varying affine feedback law u = u_hat + k + K (x - x_hat).
struct TimeVaryingLinearPolicy {
  std::vector<VectorXd> x_hat;
  std::vector<VectorXd> u_hat;
  std::vector<MatrixXd> K;
  std::vector<VectorXd> k;
  std::vector<MatrixXd> Quu;  // positive definite action-value curvature

  int horizon() const { return static_cast<int>(u_hat.size()); }
  VectorXd action(int t, const VectorXd& x) const {
    return u_hat[t] + k[t] + K[t] * (x - x_hat[t]);
  }
};

// Deterministic dynamics oracle for trajectory optimization.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;
  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;
  virtual VectorXd step(const VectorXd& x, const VectorXd& u, int t) const = 0;
  // Analytic Jacobians; return false to use central finite differences.
  virtual bool linearize(const VectorXd&, const VectorXd&, int, MatrixXd*,
                         MatrixXd*) const {
    return false;
  }
};

class CostModel {
 public:
  virtual ~CostModel() = default;
  virtual double value(const VectorXd& x, const VectorXd& u, int t) const = 0;
  // Analytic gradient/Hessian over [x; u]; return false for differences.
  virtual bool quadratic(const VectorXd&, const VectorXd&, int, VectorXd*,
                         MatrixXd*) const {
    return false;
  }
};

// Planning model that replays one local linear-Gaussian model at every
// step of the horizon (noise is ignored, certainty equivalence).
class LinearDynamicsModel : public DynamicsModel {
 public:
  explicit LinearDynamicsModel(LinearGaussianDynamics dyn)
      : dyn_(std::move(dyn)) {}
  int state_dim() const override { return dyn_.state_dim(); }
  int control_dim() const override { return dyn_.control_dim(); }
  VectorXd step(const VectorXd& x, const VectorXd& u, int) const override {
    return dyn_.predict(x, u);
  }
  bool linearize(const VectorXd&, const VectorXd&, int, MatrixXd* fx,
                 MatrixXd* fu) const override {
    *fx = dyn_.f_x;
    *fu = dyn_.f_u;
    return true;
  }
  const LinearGaussianDynamics& dynamics() const { return dyn_; }

 private:
  LinearGaussianDynamics dyn_;
};

struct BackwardPassResult {
  TimeVaryingLinearPolicy policy;  // gains; nominal trajectory left empty
  std::vector<MatrixXd> V_xx;
  std::vector<VectorXd> V_x;
  double expected_decrease = 0.0;  // predicted cost drop for a full step
};

// Discounted Riccati-style recursion. Throws BackwardPassError with the
// offending step when Quu + reg_mu I is not positive definite.
BackwardPassResult lqr_backward(
    const std::vector<LinearGaussianDynamics>& dynamics,
    const std::vector<QuadraticCostExpansion>& cost, double gamma,
    double reg_mu = 0.0);

// Per-step quadratic expansion along a trajectory; analytic where the
// cost model provides it, otherwise central finite differences. The uu
// block is eigenvalue-floored at uu_floor.
std::vector<QuadraticCostExpansion> expand_cost(
    const CostModel& cost, const std::vector<VectorXd>& xs,
    const std::vector<VectorXd>& us, double fd_eps = 1e-5,
    double uu_floor = 1e-6);

struct IlqrOptions {
  int max_iters = 50;
  double tol_rel = 1e-6;
  double mu_min = 1e-6;
  double mu_max = 1e6;
  int line_search_steps = 7;  // alpha = 1, 1/2, ..., 1/64
  double uu_floor = 1e-6;
  double fd_eps = 1e-5;
  std::string trace_path;  // per-iteration JSON lines when set
};

struct IlqrResult {
  TimeVaryingLinearPolicy policy;
  double total_cost = 0.0;
  bool converged = false;
  bool stalled = false;
  int iterations = 0;  // accepted Gauss-Newton steps
  std::vector<double> iteration_costs;
};

// Iterative LQR: rollout, linearize, backward pass, line-searched forward
// pass. The returned policy re-rolls deterministically to total_cost.
IlqrResult ilqr_solve(const DynamicsModel& model, const CostModel& cost,
                      const VectorXd& x0,
                      const std::vector<VectorXd>& init_controls, double gamma,
                      const IlqrOptions& opts = {});

}  // namespace odmpc
