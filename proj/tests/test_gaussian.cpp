#include <doctest.h>

#include <random>

#include "odmpc/errors.hpp"
#include "odmpc/gaussian.hpp"
#include "test_util.hpp"

using namespace odmpc;

TEST_CASE("niw_map_update scalar hand check") {
  NIWParams prior;
  prior.Phi = MatrixXd::Constant(1, 1, 2.0);
  prior.mu0 = VectorXd::Zero(1);
  prior.m = 1.0;
  prior.n0 = 1.0;

  const auto post = niw_map_update(prior, VectorXd::Ones(1),
                                   MatrixXd::Identity(1, 1), 3.0);
  // (2 + 3*1 + (3*1/4)*1) / (3+1) and (1*0 + 1*1) / 2
  CHECK(post.cov(0, 0) == doctest::Approx(1.4375).epsilon(1e-14));
  CHECK(post.mean[0] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("niw_map_update standard mean rule weighs by N") {
  NIWParams prior;
  prior.Phi = MatrixXd::Constant(1, 1, 2.0);
  prior.mu0 = VectorXd::Zero(1);
  prior.m = 1.0;
  prior.n0 = 1.0;
  const auto post =
      niw_map_update(prior, VectorXd::Ones(1), MatrixXd::Identity(1, 1), 3.0,
                     MeanRule::Standard);
  CHECK(post.mean[0] == doctest::Approx(3.0 / 4.0).epsilon(1e-14));
}

TEST_CASE("niw_map_update with matching means drops the rank-one term") {
  std::mt19937_64 rng(11);
  const int d = 4;
  NIWParams prior;
  prior.Phi = test::random_psd(d, rng);
  prior.mu0 = test::random_vec(d, rng);
  prior.m = 2.0;
  prior.n0 = 3.0;
  const MatrixXd emp_cov = test::random_psd(d, rng);
  const double n = 7.5;

  const auto post = niw_map_update(prior, prior.mu0, emp_cov, n);
  const MatrixXd expected = (prior.Phi + n * emp_cov) / (n + prior.n0);
  CHECK((post.cov - expected).norm() <= 1e-12 * expected.norm());
  CHECK((post.mean - prior.mu0).norm() <= 1e-12);
}

TEST_CASE("niw_map_update large-N limit approaches empirical covariance") {
  std::mt19937_64 rng(12);
  const int d = 3;
  NIWParams prior;
  prior.Phi = test::random_psd(d, rng);
  prior.mu0 = test::random_vec(d, rng);
  prior.m = 1.0;
  prior.n0 = 1.0;
  const MatrixXd emp_cov = test::random_psd(d, rng);
  const auto post = niw_map_update(prior, prior.mu0, emp_cov, 1e6);
  CHECK((post.cov - emp_cov).norm() <= 1e-4 * emp_cov.norm());
}

TEST_CASE("niw_map_update is continuous in its inputs") {
  std::mt19937_64 rng(13);
  const int d = 3;
  NIWParams prior;
  prior.Phi = test::random_psd(d, rng);
  prior.mu0 = test::random_vec(d, rng);
  prior.m = 1.5;
  prior.n0 = 2.0;
  const VectorXd mu = test::random_vec(d, rng);
  const MatrixXd cov = test::random_psd(d, rng);
  const double n = 5.0;

  const auto base = niw_map_update(prior, mu, cov, n);
  const double delta = 1e-6;
  VectorXd mu2 = mu;
  mu2[0] += delta;
  MatrixXd cov2 = cov;
  cov2(1, 1) += delta;
  const auto shifted = niw_map_update(prior, mu2, cov2, n + delta);

  const double change = (shifted.cov - base.cov).norm() +
                        (shifted.mean - base.mean).norm();
  const double input_scale = 1.0 + mu.norm() + cov.norm() + n;
  CHECK(change <= 100.0 * input_scale * delta);
}

TEST_CASE("niw_map_update input validation") {
  NIWParams prior;
  prior.Phi = MatrixXd::Identity(2, 2);
  prior.mu0 = VectorXd::Zero(2);
  CHECK_THROWS_AS(niw_map_update(prior, VectorXd::Zero(2),
                                 MatrixXd::Identity(2, 2), 0.0),
                  std::domain_error);
  CHECK_THROWS_AS(niw_map_update(prior, VectorXd::Zero(2),
                                 MatrixXd::Identity(2, 2), -1.0),
                  std::domain_error);
  VectorXd bad = VectorXd::Zero(2);
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(
      niw_map_update(prior, bad, MatrixXd::Identity(2, 2), 1.0),
      std::invalid_argument);
}

TEST_CASE("condition_dynamics with zero cross-covariance is the marginal") {
  std::mt19937_64 rng(21);
  const int d_x = 3, d_u = 2;
  const int d_z = d_x + d_u;
  JointGaussian joint;
  joint.mean = test::random_vec(2 * d_x + d_u, rng);
  joint.cov = MatrixXd::Zero(2 * d_x + d_u, 2 * d_x + d_u);
  joint.cov.topLeftCorner(d_z, d_z) = test::random_psd(d_z, rng);
  const MatrixXd syy = test::random_psd(d_x, rng);
  joint.cov.bottomRightCorner(d_x, d_x) = syy;

  const auto dyn = condition_dynamics(joint, d_x, d_u);
  CHECK(dyn.f_x.norm() <= 1e-9);
  CHECK(dyn.f_u.norm() <= 1e-9);
  CHECK((dyn.f_c - joint.mean.tail(d_x)).norm() <= 1e-9);
  CHECK((dyn.F - syy).norm() <= 1e-8 * syy.norm());
}

TEST_CASE("condition_dynamics matches the conditional-Gaussian oracle") {
  std::mt19937_64 rng(22);
  for (int d_x : {1, 2, 4}) {
    for (int d_u : {1, 2}) {
      for (int rep = 0; rep < 20; ++rep) {
        const JointGaussian joint = test::random_joint(2 * d_x + d_u, rng);
        const auto dyn = condition_dynamics(joint, d_x, d_u);
        const auto oracle = test::condition_oracle(joint, d_x + d_u);

        const double scale = std::max(1.0, oracle.map.norm());
        CHECK((dyn.f_x - oracle.map.leftCols(d_x)).norm() <= 1e-8 * scale);
        CHECK((dyn.f_u - oracle.map.rightCols(d_u)).norm() <= 1e-8 * scale);
        CHECK((dyn.f_c - oracle.offset).norm() <=
              1e-8 * std::max(1.0, oracle.offset.norm()));
        CHECK((dyn.F - oracle.cov).norm() <=
              1e-8 * std::max(1.0, oracle.cov.norm()));

        // Conditional mean at a random query agrees with the oracle.
        const VectorXd x = test::random_vec(d_x, rng);
        const VectorXd u = test::random_vec(d_u, rng);
        VectorXd z(d_x + d_u);
        z << x, u;
        const VectorXd want = oracle.map * z + oracle.offset;
        CHECK((dyn.predict(x, u) - want).norm() <=
              1e-8 * std::max(1.0, want.norm()));
      }
    }
  }
}

TEST_CASE("condition_dynamics recovers a linear system from samples") {
  // x' = 2x + u + eps, eps ~ N(0, 0.01^2); moment-matched joint.
  std::mt19937_64 rng(23);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = 10000;
  MatrixXd rows(n, 3);
  for (int i = 0; i < n; ++i) {
    const double x = gauss(rng);
    const double u = gauss(rng);
    const double xp = 2.0 * x + u + 0.01 * gauss(rng);
    rows.row(i) << x, u, xp;
  }
  const VectorXd mean = rows.colwise().mean().transpose();
  const MatrixXd centered = rows.rowwise() - mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / n;

  const auto dyn = condition_dynamics(JointGaussian{mean, cov}, 1, 1);

  // Oracle: ordinary least squares on the same samples.
  MatrixXd design(n, 3);
  design.col(0) = rows.col(0);
  design.col(1) = rows.col(1);
  design.col(2).setOnes();
  const VectorXd beta =
      (design.transpose() * design).ldlt().solve(design.transpose() *
                                                 rows.col(2));
  CHECK(dyn.f_x(0, 0) == doctest::Approx(beta[0]).epsilon(1e-3));
  CHECK(dyn.f_u(0, 0) == doctest::Approx(beta[1]).epsilon(1e-3));
  CHECK(std::abs(dyn.f_x(0, 0) - 2.0) <= 0.10);
  CHECK(std::abs(dyn.f_u(0, 0) - 1.0) <= 0.05);
  CHECK(dyn.F(0, 0) == doctest::Approx(1e-4).epsilon(0.05));
}

TEST_CASE("condition_dynamics F stays PSD on well-conditioned inputs") {
  std::mt19937_64 rng(24);
  for (int rep = 0; rep < 50; ++rep) {
    const JointGaussian joint = test::random_joint(7, rng);
    const auto dyn = condition_dynamics(joint, 2, 3);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(dyn.F);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
    CHECK(is_symmetric(dyn.F));
  }
}

TEST_CASE("condition_dynamics handles degenerate covariances by the ridge") {
  // A transition stream with zero spread conditions to the deterministic
  // point-mass limit: no dependence on [x; u], mean passed through.
  JointGaussian joint;
  joint.mean = VectorXd::LinSpaced(3, 1.0, 3.0);
  joint.cov = MatrixXd::Zero(3, 3);
  const auto dyn = condition_dynamics(joint, 1, 1);
  CHECK(dyn.f_x.norm() == 0.0);
  CHECK(dyn.f_u.norm() == 0.0);
  CHECK(dyn.f_c[0] == doctest::Approx(3.0));
  CHECK(dyn.F.norm() == 0.0);
}

TEST_CASE("condition_dynamics rejects indefinite joints") {
  // A covariance with a negative direction violates the type invariant
  // and cannot be repaired by the ridge.
  JointGaussian joint;
  joint.mean = VectorXd::Zero(3);
  joint.cov = MatrixXd::Identity(3, 3);
  joint.cov(1, 1) = -1.0;
  CHECK_THROWS_AS(condition_dynamics(joint, 1, 1), ConditioningError);
  try {
    condition_dynamics(joint, 1, 1);
  } catch (const ConditioningError& e) {
    CHECK(e.condition_number() > 1e14);
  }
}
