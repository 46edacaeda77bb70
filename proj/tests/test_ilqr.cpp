#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "odmpc/errors.hpp"
#include "odmpc/ilqr.hpp"
#include "test_util.hpp"

using namespace odmpc;

namespace {

LinearGaussianDynamics make_dyn(const MatrixXd& A, const MatrixXd& B) {
  LinearGaussianDynamics d;
  d.f_x = A;
  d.f_u = B;
  d.f_c = VectorXd::Zero(A.rows());
  d.F = MatrixXd::Zero(A.rows(), A.rows());
  return d;
}

QuadraticCostExpansion quad_cost(const MatrixXd& Q, const MatrixXd& R) {
  const int dx = static_cast<int>(Q.rows());
  const int du = static_cast<int>(R.rows());
  QuadraticCostExpansion e;
  e.hess = MatrixXd::Zero(dx + du, dx + du);
  e.hess.topLeftCorner(dx, dx) = 2.0 * Q;
  e.hess.bottomRightCorner(du, du) = 2.0 * R;
  e.grad = VectorXd::Zero(dx + du);
  return e;
}

// Quadratic-cost LQ problem as dynamics/cost oracles for ilqr_solve.
class QuadCostModel : public CostModel {
 public:
  QuadCostModel(MatrixXd Q, MatrixXd R) : Q_(std::move(Q)), R_(std::move(R)) {}
  double value(const VectorXd& x, const VectorXd& u, int) const override {
    return x.dot(Q_ * x) + u.dot(R_ * u);
  }
  bool quadratic(const VectorXd& x, const VectorXd& u, int, VectorXd* grad,
                 MatrixXd* hess) const override {
    const int dx = static_cast<int>(x.size());
    const int du = static_cast<int>(u.size());
    grad->resize(dx + du);
    grad->head(dx) = 2.0 * Q_ * x;
    grad->tail(du) = 2.0 * R_ * u;
    hess->setZero(dx + du, dx + du);
    hess->topLeftCorner(dx, dx) = 2.0 * Q_;
    hess->bottomRightCorner(du, du) = 2.0 * R_;
    return true;
  }

 private:
  MatrixXd Q_, R_;
};

class PendulumModel : public DynamicsModel {
 public:
  int state_dim() const override { return 2; }
  int control_dim() const override { return 1; }
  VectorXd step(const VectorXd& x, const VectorXd& u, int) const override {
    const double accel = (u[0] - 0.1 * x[1] - 9.81 * std::sin(x[0]));
    VectorXd n(2);
    n[1] = x[1] + 0.05 * accel;
    n[0] = x[0] + 0.05 * n[1];
    return n;
  }
};

// Value-only cost: exercises the finite-difference expansion path.
class PendulumCost : public CostModel {
 public:
  double value(const VectorXd& x, const VectorXd& u, int) const override {
    const double dth = x[0] - M_PI;
    return dth * dth + 0.1 * x[1] * x[1] + 0.01 * u[0] * u[0];
  }
};

}  // namespace

TEST_CASE("lqr_backward with T=1 solves the one-step quadratic") {
  std::mt19937_64 rng(1);
  const int dx = 3, du = 2;
  QuadraticCostExpansion e;
  e.hess = test::random_psd(dx + du, rng, 1.0);
  e.grad = test::random_vec(dx + du, rng);
  const auto dyn = make_dyn(test::random_psd(dx, rng), MatrixXd::Random(dx, du));

  const auto bp = lqr_backward({dyn}, {e}, 1.0);
  const MatrixXd luu = e.hess.bottomRightCorner(du, du);
  const MatrixXd lux = e.hess.bottomLeftCorner(du, dx);
  const VectorXd lu = e.grad.tail(du);
  CHECK((bp.policy.K[0] + luu.inverse() * lux).norm() <= 1e-10);
  CHECK((bp.policy.k[0] + luu.inverse() * lu).norm() <= 1e-10);
}

TEST_CASE("lqr_backward matches independent Riccati iteration") {
  const double dt = 0.1;
  MatrixXd A(2, 2), B(2, 1);
  A << 1, dt, 0, 1;
  B << 0, dt;
  MatrixXd Q(2, 2), R(1, 1);
  Q << 1, 0, 0, 0.1;
  R << 0.01;

  const int T = 50;
  const std::vector<LinearGaussianDynamics> dyn(T, make_dyn(A, B));
  const std::vector<QuadraticCostExpansion> cost(T, quad_cost(Q, R));
  const auto bp = lqr_backward(dyn, cost, 1.0);

  // Independent oracle: textbook discrete Riccati recursion.
  MatrixXd P = MatrixXd::Zero(2, 2);
  std::vector<MatrixXd> K_oracle(T);
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd S = R + B.transpose() * P * B;
    K_oracle[t] = -S.inverse() * (B.transpose() * P * A);
    P = Q + A.transpose() * P * A +
        A.transpose() * P * B * K_oracle[t];
    P = 0.5 * (P + P.transpose());
  }
  for (int t = 0; t < T; ++t) {
    CHECK((bp.policy.K[t] - K_oracle[t]).norm() <=
          1e-8 * std::max(1.0, K_oracle[t].norm()));
  }
  // Gains of a time-invariant problem converge away from the horizon.
  for (int t = 0; t + 1 < T - 40; ++t) {
    CHECK((bp.policy.K[t] - bp.policy.K[t + 1]).norm() < 1e-6);
  }
}

TEST_CASE("lqr_backward hand check with discount") {
  // Scalar f_x = f_u = 1, identity cost Hessian over [x; u], two steps.
  const auto dyn = make_dyn(MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1));
  QuadraticCostExpansion e;
  e.hess = MatrixXd::Identity(2, 2);
  e.grad = VectorXd::Zero(2);
  const double gamma = 0.5;
  const auto bp = lqr_backward({dyn, dyn}, {e, e}, gamma);
  // Last step: K = 0. V_xx = 1. First step: Quu = 1 + gamma, Qux = gamma.
  CHECK(bp.policy.K[1](0, 0) == doctest::Approx(0.0));
  CHECK(bp.policy.K[0](0, 0) ==
        doctest::Approx(-gamma / (1.0 + gamma)).epsilon(1e-12));
}

TEST_CASE("lqr_backward value matrices stay PSD for convex costs") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const int T = 12, dx = 3, du = 2;
    std::vector<LinearGaussianDynamics> dyn;
    std::vector<QuadraticCostExpansion> cost;
    for (int t = 0; t < T; ++t) {
      MatrixXd A = MatrixXd::Random(dx, dx) * 0.9;
      MatrixXd B = MatrixXd::Random(dx, du);
      dyn.push_back(make_dyn(A, B));
      QuadraticCostExpansion e;
      e.hess = test::random_psd(dx + du, rng, 0.2);
      e.grad = test::random_vec(dx + du, rng);
      cost.push_back(e);
    }
    const auto bp = lqr_backward(dyn, cost, 0.95);
    for (const auto& v : bp.V_xx) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(v);
      CHECK(es.eigenvalues().minCoeff() >= -1e-9 * std::max(1.0, v.norm()));
    }
  }
}

TEST_CASE("lqr_backward reports the offending step on indefinite Quu") {
  // Concave control cost cannot be handled at mu = 0.
  const auto dyn = make_dyn(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  QuadraticCostExpansion bad;
  bad.hess = MatrixXd::Identity(2, 2);
  bad.hess(1, 1) = -1.0;
  bad.grad = VectorXd::Zero(2);
  try {
    lqr_backward({dyn, dyn, dyn}, {bad, bad, bad}, 1.0);
    FAIL("expected BackwardPassError");
  } catch (const BackwardPassError& e) {
    CHECK(e.step() == 2);  // backward pass hits the last step first
  }
  // Enough regularization fixes it.
  CHECK_NOTHROW(lqr_backward({dyn, dyn, dyn}, {bad, bad, bad}, 1.0, 2.0));
}

TEST_CASE("ilqr_solve converges in one iteration on a linear-quadratic task") {
  MatrixXd A(2, 2), B(2, 1);
  A << 1, 0.1, 0, 1;
  B << 0, 0.1;
  MatrixXd Q(2, 2), R(1, 1);
  Q << 1, 0, 0, 0.1;
  R << 0.01;
  LinearDynamicsModel model(make_dyn(A, B));
  QuadCostModel cost(Q, R);

  VectorXd x0(2);
  x0 << 1.0, 0.0;
  const int T = 30;
  const auto result = ilqr_solve(model, cost, x0,
                                 std::vector<VectorXd>(T, VectorXd::Zero(1)),
                                 1.0);
  CHECK(result.iterations == 1);
  CHECK(result.converged);
  CHECK_FALSE(result.stalled);
  CHECK(result.total_cost <= result.iteration_costs.front());

  // Gains match a direct backward pass (gains are nominal-independent
  // for linear dynamics and quadratic costs).
  const std::vector<LinearGaussianDynamics> dyn(T, make_dyn(A, B));
  const std::vector<QuadraticCostExpansion> ce(T, quad_cost(Q, R));
  const auto bp = lqr_backward(dyn, ce, 1.0);
  for (int t = 0; t < T; ++t) {
    CHECK((result.policy.K[t] - bp.policy.K[t]).norm() <=
          1e-8 * std::max(1.0, bp.policy.K[t].norm()));
  }
}

TEST_CASE("ilqr_solve at an optimum returns near-zero open-loop terms") {
  MatrixXd A(2, 2), B(2, 1);
  A << 1, 0.1, 0, 1;
  B << 0, 0.1;
  MatrixXd Q = MatrixXd::Identity(2, 2), R = MatrixXd::Identity(1, 1) * 0.1;
  LinearDynamicsModel model(make_dyn(A, B));
  QuadCostModel cost(Q, R);
  VectorXd x0(2);
  x0 << 0.5, -0.2;
  const int T = 20;

  const auto first = ilqr_solve(
      model, cost, x0, std::vector<VectorXd>(T, VectorXd::Zero(1)), 1.0);
  // Re-solve from the optimal controls.
  std::vector<VectorXd> opt;
  VectorXd x = x0;
  for (int t = 0; t < T; ++t) {
    opt.push_back(first.policy.action(t, x));
    x = model.step(x, opt.back(), t);
  }
  const auto second = ilqr_solve(model, cost, x0, opt, 1.0);
  CHECK(second.iterations == 0);
  double kinf = 0.0;
  for (const auto& k : second.policy.k) kinf = std::max(kinf, k.cwiseAbs().maxCoeff());
  CHECK(kinf < 1e-6);
}

TEST_CASE("ilqr_solve pendulum swing-up decreases cost monotonically") {
  PendulumModel model;
  PendulumCost cost;
  VectorXd x0 = VectorXd::Zero(2);
  IlqrOptions opts;
  opts.max_iters = 25;
  const auto result = ilqr_solve(model, cost, x0,
                                 std::vector<VectorXd>(40, VectorXd::Zero(1)),
                                 0.95, opts);
  REQUIRE(result.iteration_costs.size() >= 3);
  for (std::size_t i = 1; i < result.iteration_costs.size(); ++i) {
    CHECK(result.iteration_costs[i] < result.iteration_costs[i - 1]);
  }
  CHECK(result.total_cost < 0.4 * result.iteration_costs.front());
  // The optimized policy actually swings up.
  VectorXd x = x0;
  for (int t = 0; t < 40; ++t) x = model.step(x, result.policy.action(t, x), t);
  CHECK(std::abs(x[0] - M_PI) < 0.3);
}

TEST_CASE("returned policy re-rolls to the reported cost") {
  PendulumModel model;
  PendulumCost cost;
  VectorXd x0 = VectorXd::Zero(2);
  IlqrOptions opts;
  opts.max_iters = 12;
  const auto result = ilqr_solve(model, cost, x0,
                                 std::vector<VectorXd>(30, VectorXd::Zero(1)),
                                 0.95, opts);
  double rolled = 0.0;
  VectorXd x = x0;
  for (int t = 0; t < 30; ++t) {
    const VectorXd u = result.policy.action(t, x);
    rolled += cost.value(x, u, t);
    x = model.step(x, u, t);
  }
  CHECK(rolled == doctest::Approx(result.total_cost).epsilon(1e-8));
}

TEST_CASE("expand_cost is exact on quadratic costs via finite differences") {
  // Value-only quadratic model forces the difference path.
  class ValueOnly : public CostModel {
   public:
    double value(const VectorXd& x, const VectorXd& u, int) const override {
      return 3.0 * x[0] * x[0] + x[0] * x[1] + 2.0 * u[0] * u[0] +
             0.5 * x[1] * u[0] + 4.0 * x[0] - u[0] + 7.0;
    }
  } cost;
  const std::vector<VectorXd> xs = {(VectorXd(2) << 0.3, -0.7).finished()};
  const std::vector<VectorXd> us = {VectorXd::Constant(1, 0.4)};
  const auto exp = expand_cost(cost, xs, us);
  REQUIRE(exp.size() == 1);

  MatrixXd want_h(3, 3);
  want_h << 6.0, 1.0, 0.0,
            1.0, 0.0, 0.5,
            0.0, 0.5, 4.0;
  VectorXd z(3);
  z << xs[0], us[0];
  VectorXd want_g(3);
  want_g << 6.0 * z[0] + z[1] + 4.0,
            z[0] + 0.5 * z[2],
            4.0 * z[2] + 0.5 * z[1] - 1.0;
  CHECK((exp[0].grad - want_g).norm() <= 1e-6);
  // uu block gets floored from 0/negative curvature up to the minimum;
  // the xx and cross blocks must be exact.
  CHECK((exp[0].hess.topLeftCorner(2, 2) - want_h.topLeftCorner(2, 2)).norm() <=
        1e-5);
  CHECK(exp[0].hess(2, 2) == doctest::Approx(4.0).epsilon(1e-5));
  CHECK(exp[0].constant == doctest::Approx(cost.value(xs[0], us[0], 0)));
}

TEST_CASE("expand_cost floors the uu block") {
  class ConcaveU : public CostModel {
   public:
    double value(const VectorXd& x, const VectorXd& u, int) const override {
      return x.squaredNorm() - u.squaredNorm();
    }
  } cost;
  const std::vector<VectorXd> xs = {VectorXd::Zero(2)};
  const std::vector<VectorXd> us = {VectorXd::Zero(2)};
  const auto exp = expand_cost(cost, xs, us, 1e-5, 1e-6);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(exp[0].hess.bottomRightCorner(2, 2));
  CHECK(es.eigenvalues().minCoeff() >= 1e-6 - 1e-12);
}

TEST_CASE("expand_cost reports non-finite derivatives with the step index") {
  class Bad : public CostModel {
   public:
    double value(const VectorXd& x, const VectorXd&, int) const override {
      return std::sqrt(x[0]);  // NaN for negative perturbations
    }
  } cost;
  const std::vector<VectorXd> xs = {VectorXd::Zero(1), VectorXd::Zero(1)};
  const std::vector<VectorXd> us = {VectorXd::Zero(1), VectorXd::Zero(1)};
  try {
    expand_cost(cost, xs, us);
    FAIL("expected ExpansionError");
  } catch (const ExpansionError& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("discounting attenuates terminal perturbations of the gains") {
  const double dt = 0.1;
  MatrixXd A(2, 2), B(2, 1);
  A << 1, dt, 0, 1;
  B << 0, dt;
  const int T = 40;
  const std::vector<LinearGaussianDynamics> dyn(T, make_dyn(A, B));
  MatrixXd Q = MatrixXd::Identity(2, 2) * 0.5, R = MatrixXd::Identity(1, 1) * 0.05;
  std::vector<QuadraticCostExpansion> cost(T, quad_cost(Q, R));
  std::vector<QuadraticCostExpansion> perturbed = cost;
  perturbed[T - 1].grad[0] += 1.0;

  auto dk_first = [&](double gamma) {
    const auto base = lqr_backward(dyn, cost, gamma);
    const auto pert = lqr_backward(dyn, perturbed, gamma);
    return (pert.policy.k[0] - base.policy.k[0]).norm();
  };
  // Smoke: smaller discounts attenuate the terminal influence more, and
  // the attenuation at gamma = 0.9 is bounded by gamma^(T-1) times an
  // instance constant (taken generously from the one-step response).
  // k[T-3] is the nearest step the position perturbation can reach
  // through the double-integrator chain.
  const auto base9 = lqr_backward(dyn, cost, 0.9);
  const auto pert9 = lqr_backward(dyn, perturbed, 0.9);
  const double near_terminal =
      (pert9.policy.k[T - 3] - base9.policy.k[T - 3]).norm();
  CHECK(dk_first(0.9) < dk_first(1.0));
  CHECK(dk_first(0.7) < dk_first(0.9));
  CHECK(dk_first(0.9) <=
        std::pow(0.9, T - 1) * 1e2 * std::max(near_terminal, 1e-12));
}

TEST_CASE("ilqr trace file is written when configured") {
  MatrixXd A = MatrixXd::Identity(1, 1), B = MatrixXd::Identity(1, 1);
  LinearDynamicsModel model(make_dyn(A, B));
  QuadCostModel cost(MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1));
  IlqrOptions opts;
  opts.trace_path = "/tmp/odmpc_trace_test.jsonl";
  std::remove(opts.trace_path.c_str());
  VectorXd x0 = VectorXd::Ones(1);
  ilqr_solve(model, cost, x0, std::vector<VectorXd>(5, VectorXd::Zero(1)), 1.0,
             opts);
  std::ifstream in(opts.trace_path);
  CHECK(in.good());
  std::string line;
  CHECK(std::getline(in, line));
  CHECK(line.find("\"cost\":") != std::string::npos);
}
