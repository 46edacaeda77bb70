#include <doctest.h>

#include <random>

#include "odmpc/errors.hpp"
#include "odmpc/mlp.hpp"
#include "test_util.hpp"

using namespace odmpc;

namespace {

StateLayout qv_layout() {
  StateLayout l;
  l.pos_idx = {0, 1};
  l.vel_idx = {2, 3};
  return l;
}

MLPModel small_net(bool context, std::uint64_t seed,
                   std::vector<int> hidden = {60, 40}) {
  return make_mlp(4, 2, context, 0.05, qv_layout(), seed, hidden);
}

// Synthetic integrator-consistent dataset: accel = M [x; u] + noise.
TransitionDataset linear_accel_dataset(int n, double noise_std,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.5);
  std::normal_distribution<double> eps(0.0, noise_std);
  Eigen::Matrix<double, 2, 6> M;
  M << -0.2, 0.1, -0.3, 0.0, 0.5, -0.1,
        0.0, -0.2, 0.1, -0.3, 0.2, 0.4;
  const double dt = 0.05;

  TransitionDataset ds;
  for (int i = 0; i < n; ++i) {
    VectorXd x(4), u(2);
    for (int j = 0; j < 4; ++j) x[j] = gauss(rng);
    for (int j = 0; j < 2; ++j) u[j] = gauss(rng);
    VectorXd z(6);
    z << x, u;
    Eigen::Vector2d a = M * z;
    a[0] += eps(rng);
    a[1] += eps(rng);
    VectorXd xn(4);
    xn.tail<2>() = x.tail<2>() + dt * a;
    xn.head<2>() = x.head<2>() + dt * xn.tail<2>();
    TransitionRecord rec;
    rec.x_prev = x;  // context unused by architecture #1
    rec.u_prev = u;
    rec.x = x;
    rec.u = u;
    rec.x_next = xn;
    ds.records.push_back(std::move(rec));
  }
  DatasetMeta meta;
  meta.dt = dt;
  ds.sources.push_back(meta);
  return ds;
}

}  // namespace

TEST_CASE("forward with zero weights coasts") {
  MLPModel net = small_net(false, 1);
  for (auto& w : net.W) w.setZero();
  for (auto& b : net.b) b.setZero();

  VectorXd input(6);
  input << 0.3, -0.2, 1.0, 0.5, 0.1, -0.1;  // q=(0.3,-0.2), v=(1.0,0.5)
  const auto fwd = net.forward(input);
  CHECK(fwd.accel.norm() == 0.0);
  CHECK(fwd.next_state[2] == doctest::Approx(1.0));
  CHECK(fwd.next_state[3] == doctest::Approx(0.5));
  CHECK(fwd.next_state[0] == doctest::Approx(0.3 + 0.05 * 1.0));
  CHECK(fwd.next_state[1] == doctest::Approx(-0.2 + 0.05 * 0.5));
}

TEST_CASE("forward integrates a constant acceleration") {
  MLPModel net = small_net(false, 2);
  for (auto& w : net.W) w.setZero();
  for (auto& b : net.b) b.setZero();
  net.b.back() << 2.0, -1.0;  // output bias = constant accel

  VectorXd input = VectorXd::Zero(6);
  const auto fwd = net.forward(input);
  // v1 = a dt, q1 = a dt^2 from rest.
  CHECK(fwd.next_state[2] == doctest::Approx(0.05 * 2.0).epsilon(1e-14));
  CHECK(fwd.next_state[3] == doctest::Approx(0.05 * -1.0).epsilon(1e-14));
  CHECK(fwd.next_state[0] == doctest::Approx(0.0025 * 2.0).epsilon(1e-14));
  CHECK(fwd.next_state[1] == doctest::Approx(0.0025 * -1.0).epsilon(1e-14));
}

TEST_CASE("default architecture uses 60 and 40 hidden units") {
  const MLPModel net = small_net(false, 3);
  REQUIRE(net.W.size() == 3);
  CHECK(net.W[0].rows() == 60);
  CHECK(net.W[1].rows() == 40);
  CHECK(net.W[2].rows() == 2);
  const MLPModel ctx = small_net(true, 3);
  CHECK(ctx.W[0].cols() == 12);  // temporal context doubles the input
}

TEST_CASE("jacobian of the zero net is the integrator passthrough") {
  MLPModel net = small_net(false, 4);
  for (auto& w : net.W) w.setZero();
  const MatrixXd J = net.jacobian(VectorXd::Zero(6));
  MatrixXd want = MatrixXd::Zero(4, 6);
  want(0, 0) = 1.0;
  want(1, 1) = 1.0;
  want(2, 2) = 1.0;
  want(3, 3) = 1.0;
  want(0, 2) = 0.05;
  want(1, 3) = 0.05;
  CHECK((J - want).norm() <= 1e-14);
}

TEST_CASE("jacobian matches central finite differences") {
  std::mt19937_64 rng(5);
  int checked = 0;
  for (int rep = 0; rep < 50; ++rep) {
    MLPModel net = small_net(rep % 2 == 1, 100 + rep);
    // Exercise trained-style normalization too.
    net.in_mean = test::random_vec(net.input_dim(), rng, 0.1);
    net.in_std = VectorXd::Ones(net.input_dim()) +
                 0.3 * test::random_vec(net.input_dim(), rng).cwiseAbs();
    net.accel_mean = test::random_vec(2, rng, 0.1);
    net.accel_std = VectorXd::Ones(2) + 0.3 * test::random_vec(2, rng).cwiseAbs();

    const VectorXd input = test::random_vec(net.input_dim(), rng);

    // Skip inputs that graze a rectifier kink.
    bool near_kink = false;
    {
      const VectorXd z = (input - net.in_mean).cwiseQuotient(net.in_std);
      VectorXd h = net.W[0] * z + net.b[0];
      if (h.cwiseAbs().minCoeff() < 1e-6) near_kink = true;
      const VectorXd h2 = net.W[1] * h.cwiseMax(0.0) + net.b[1];
      if (h2.cwiseAbs().minCoeff() < 1e-6) near_kink = true;
    }
    if (near_kink) continue;
    ++checked;

    const MatrixXd J = net.jacobian(input);
    const double h = 1e-5;
    MatrixXd fd(4, net.input_dim());
    for (int i = 0; i < net.input_dim(); ++i) {
      VectorXd ip = input, im = input;
      ip[i] += h;
      im[i] -= h;
      fd.col(i) = (net.forward(ip).next_state - net.forward(im).next_state) /
                  (2.0 * h);
    }
    const double rel = (J - fd).cwiseAbs().maxCoeff() /
                       std::max(1.0, fd.cwiseAbs().maxCoeff());
    CHECK(rel < 1e-4);
  }
  CHECK(checked >= 40);
}

TEST_CASE("jacobian is locally constant away from kinks") {
  MLPModel net = small_net(false, 6);
  std::mt19937_64 rng(7);
  const VectorXd input = test::random_vec(6, rng);
  const MatrixXd j1 = net.jacobian(input);
  const MatrixXd j2 = net.jacobian(input + VectorXd::Constant(6, 1e-9));
  CHECK((j1 - j2).norm() == 0.0);
}

TEST_CASE("forward is affine within one activation region") {
  std::mt19937_64 rng(8);
  MLPModel net = small_net(false, 9);
  const VectorXd a = test::random_vec(6, rng);
  const VectorXd b = a + 1e-4 * test::random_vec(6, rng);
  if ((net.jacobian(a) - net.jacobian(b)).norm() != 0.0) return;  // crossed a kink
  for (double lam : {0.25, 0.5, 0.75}) {
    const VectorXd mix = lam * a + (1.0 - lam) * b;
    const VectorXd want = lam * net.forward(a).next_state +
                          (1.0 - lam) * net.forward(b).next_state;
    CHECK((net.forward(mix).next_state - want).norm() <= 1e-10);
  }
}

TEST_CASE("batch gradient matches finite differences of the loss") {
  MLPModel net = small_net(false, 10);
  const TransitionDataset ds = linear_accel_dataset(16, 0.0, 11);
  MatrixXd inputs(16, 6), targets(16, 4);
  for (int i = 0; i < 16; ++i) {
    inputs.row(i) = current_input(ds.records[i]).transpose();
    targets.row(i) = ds.records[i].x_next.transpose();
  }
  std::vector<int> idx(16);
  for (int i = 0; i < 16; ++i) idx[i] = i;

  const MlpGradient g = mlp_batch_gradient(net, inputs, targets, idx);
  auto total_loss = [&] {
    double s = 0.0;
    for (int i : idx) {
      s += (net.forward(inputs.row(i).transpose()).next_state -
            targets.row(i).transpose())
               .squaredNorm();
    }
    return s;
  };
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> layer(0, 2);
  for (int rep = 0; rep < 8; ++rep) {
    const int l = layer(rng);
    const int r = std::uniform_int_distribution<int>(0, static_cast<int>(net.W[l].rows()) - 1)(rng);
    const int c = std::uniform_int_distribution<int>(0, static_cast<int>(net.W[l].cols()) - 1)(rng);
    const double h = 1e-6;
    const double orig = net.W[l](r, c);
    net.W[l](r, c) = orig + h;
    const double fp = total_loss();
    net.W[l](r, c) = orig - h;
    const double fm = total_loss();
    net.W[l](r, c) = orig;
    const double fd = (fp - fm) / (2.0 * h);
    CHECK(g.gW[l](r, c) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("training fits a linear system to the noise floor") {
  const double noise_std = 0.05;
  const TransitionDataset ds = linear_accel_dataset(4000, noise_std, 13);
  MLPModel net = small_net(false, 14);
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.seed = 15;
  const TrainReport rep = train(net, ds, cfg);

  const double dt = 0.05;
  // Each accel noise component shows up as dt * eps in v' and dt^2 in q'.
  const double floor =
      (dt * dt + dt * dt * dt * dt) * noise_std * noise_std * 2.0;
  CHECK(rep.val_loss <= 2.0 * floor);
  CHECK(rep.val_loss > 0.0);
}

TEST_CASE("training on constant targets drives the loss to zero") {
  TransitionDataset ds;
  VectorXd x(4), u(2);
  x << 0.1, -0.2, 0.4, 0.3;
  u << 0.2, -0.1;
  VectorXd xn(4);
  const double dt = 0.05;
  const Eigen::Vector2d a(0.7, -0.3);
  xn.tail<2>() = x.tail<2>() + dt * a;
  xn.head<2>() = x.head<2>() + dt * xn.tail<2>();
  for (int i = 0; i < 256; ++i) {
    TransitionRecord rec;
    rec.x_prev = x;
    rec.u_prev = u;
    rec.x = x;
    rec.u = u;
    rec.x_next = xn;
    ds.records.push_back(rec);
  }
  MLPModel net = small_net(false, 16);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 17;
  const TrainReport rep = train(net, ds, cfg);
  CHECK(rep.train_loss <= 1e-8);
}

TEST_CASE("training loss is mostly non-increasing across epochs") {
  const TransitionDataset ds = linear_accel_dataset(2000, 0.05, 18);
  MLPModel net = small_net(false, 19);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 20;
  const TrainReport rep = train(net, ds, cfg);
  int non_increasing = 0;
  for (std::size_t e = 1; e < rep.epoch_loss.size(); ++e) {
    CHECK(std::isfinite(rep.epoch_loss[e]));
    if (rep.epoch_loss[e] <= rep.epoch_loss[e - 1] * (1.0 + 1e-9)) {
      ++non_increasing;
    }
  }
  CHECK(non_increasing >=
        static_cast<int>(0.9 * (rep.epoch_loss.size() - 1)));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const TransitionDataset ds = linear_accel_dataset(1000, 0.05, 21);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 22;
  MLPModel a = small_net(true, 23);
  MLPModel b = small_net(true, 23);
  train(a, ds, cfg);
  train(b, ds, cfg);
  for (std::size_t l = 0; l < a.W.size(); ++l) {
    CHECK((a.W[l] - b.W[l]).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((a.b[l] - b.b[l]).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("training aborts on divergence") {
  const TransitionDataset ds = linear_accel_dataset(1000, 0.05, 24);
  MLPModel net = small_net(false, 25);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 1e4;  // guaranteed blow-up
  cfg.seed = 26;
  CHECK_THROWS_AS(train(net, ds, cfg), TrainingError);
}

TEST_CASE("training rejects undersized datasets") {
  const TransitionDataset ds = linear_accel_dataset(100, 0.05, 27);
  MLPModel net = small_net(false, 28);
  TrainConfig cfg;  // batch 64 needs at least 128 rows
  CHECK_THROWS_AS(train(net, ds, cfg), std::invalid_argument);
}
