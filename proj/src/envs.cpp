#include "odmpc/envs.hpp"

#include <cmath>
#include <stdexcept>

#include "odmpc/rng_util.hpp"

namespace odmpc {

double TaskCostModel::value(const VectorXd& x, const VectorXd& u, int) const {
  const Vector2d r = env_.point_of_interest(x) - cost_.target;
  const double s = r.squaredNorm();
  return cost_.w * s + cost_.v * std::log(s + cost_.alpha) +
         cost_.torque_weight * u.squaredNorm();
}

bool TaskCostModel::quadratic(const VectorXd& x, const VectorXd& u, int,
                              VectorXd* grad, MatrixXd* hess) const {
  const int d_x = static_cast<int>(x.size());
  const int d_u = static_cast<int>(u.size());
  const int d_z = d_x + d_u;

  MatrixXd J;
  std::array<MatrixXd, 2> H;
  env_.poi_derivatives(x, &J, &H);
  const Vector2d r = env_.point_of_interest(x) - cost_.target;
  const double s = r.squaredNorm();

  const VectorXd ds = 2.0 * J.transpose() * r;
  const MatrixXd d2s =
      2.0 * J.transpose() * J + 2.0 * (r[0] * H[0] + r[1] * H[1]);

  const double g1 = cost_.w + cost_.v / (s + cost_.alpha);
  const double g2 = -cost_.v / ((s + cost_.alpha) * (s + cost_.alpha));

  grad->resize(d_z);
  grad->head(d_x) = g1 * ds;
  grad->tail(d_u) = 2.0 * cost_.torque_weight * u;

  hess->setZero(d_z, d_z);
  hess->topLeftCorner(d_x, d_x) = g1 * d2s + g2 * (ds * ds.transpose());
  hess->bottomRightCorner(d_u, d_u) =
      2.0 * cost_.torque_weight * MatrixXd::Identity(d_u, d_u);
  return true;
}

CostEval eval_cost(const Environment& env, const TaskCost& cost,
                   const VectorXd& x, const VectorXd& u) {
  TaskCostModel model(env, cost);
  CostEval out;
  out.value = model.value(x, u, 0);
  model.quadratic(x, u, 0, &out.gradient, &out.hessian);
  return out;
}

Eigen::Vector2d two_link_ik(const Vector2d& p, double l1, double l2,
                            double elbow) {
  const double r2 = p.squaredNorm();
  double c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  c2 = std::clamp(c2, -1.0, 1.0);
  const double th2 = std::copysign(std::acos(c2), elbow);
  const double th1 = std::atan2(p[1], p[0]) -
                     std::atan2(l2 * std::sin(th2), l1 + l2 * std::cos(th2));
  return {th1, th2};
}

double mechanical_energy(const ArmConfig& cfg, const VectorXd& x) {
  const double lc1 = cfg.l1 / 2.0, lc2 = cfg.l2 / 2.0;
  const double i1 = cfg.m1 * cfg.l1 * cfg.l1 / 12.0;
  const double i2 = cfg.m2 * cfg.l2 * cfg.l2 / 12.0;
  const double c2 = std::cos(x[1]);
  Eigen::Matrix2d M;
  M(0, 0) = i1 + i2 + cfg.m1 * lc1 * lc1 +
            cfg.m2 * (cfg.l1 * cfg.l1 + lc2 * lc2 + 2.0 * cfg.l1 * lc2 * c2);
  M(0, 1) = i2 + cfg.m2 * (lc2 * lc2 + cfg.l1 * lc2 * c2);
  M(1, 0) = M(0, 1);
  M(1, 1) = i2 + cfg.m2 * lc2 * lc2;
  const Vector2d qd = x.tail<2>();
  const double s1 = std::sin(x[0]);
  const double s12 = std::sin(x[0] + x[1]);
  const double pe =
      cfg.gravity * (cfg.m1 * lc1 * s1 + cfg.m2 * (cfg.l1 * s1 + lc2 * s12));
  return 0.5 * qd.dot(M * qd) + pe;
}

namespace {

class PointMassEnv : public Environment {
 public:
  explicit PointMassEnv(const PointMassConfig& cfg) : cfg_(cfg) {
    target_ = cfg.target;
    success_threshold_ = cfg.success_threshold;
  }

  int d_x() const override { return 4; }
  int d_u() const override { return 2; }
  double dt() const override { return cfg_.dt; }
  std::string id() const override { return "point_mass"; }
  double control_limit() const override { return cfg_.force_limit; }

  VectorXd reset(std::uint64_t seed) override {
    noise_rng_.seed(mix_seed(seed, 0x7071));
    std::mt19937_64 init_rng(mix_seed(seed, 0x1517));
    std::uniform_real_distribution<double> jit(-cfg_.start_jitter,
                                               cfg_.start_jitter);
    VectorXd x = VectorXd::Zero(4);
    x[0] = cfg_.start[0] + jit(init_rng);
    x[1] = cfg_.start[1] + jit(init_rng);
    return x;
  }

  VectorXd transition(const VectorXd& x, const VectorXd& u) override {
    std::normal_distribution<double> noise(
        0.0, cfg_.noise_scale * cfg_.force_limit);
    Vector2d f = u.head<2>().cwiseMax(-cfg_.force_limit).cwiseMin(cfg_.force_limit);
    f[0] += noise(noise_rng_);
    f[1] += noise(noise_rng_);

    VectorXd s = x;
    const double h = cfg_.dt / cfg_.substeps;
    for (int i = 0; i < cfg_.substeps; ++i) {
      const Vector2d v = s.tail<2>();
      const Vector2d a = (f - cfg_.drag * v) / cfg_.mass;
      s.tail<2>() += h * a;
      s.head<2>() += h * s.tail<2>();
    }
    return s;
  }

  Vector2d point_of_interest(const VectorXd& x) const override {
    return x.head<2>();
  }

  void poi_derivatives(const VectorXd& x, MatrixXd* jac,
                       std::array<MatrixXd, 2>* hess) const override {
    const int n = static_cast<int>(x.size());
    *jac = MatrixXd::Zero(2, n);
    (*jac)(0, 0) = 1.0;
    (*jac)(1, 1) = 1.0;
    (*hess)[0] = MatrixXd::Zero(n, n);
    (*hess)[1] = MatrixXd::Zero(n, n);
  }

 private:
  PointMassConfig cfg_;
  std::mt19937_64 noise_rng_;
};

class TwoLinkArmEnv : public Environment {
 public:
  explicit TwoLinkArmEnv(const ArmConfig& cfg) : cfg_(cfg) {
    target_ = cfg.target;
    success_threshold_ = cfg.success_threshold;
    start_angles_ = cfg.start_angles;
  }

  int d_x() const override { return 4; }
  int d_u() const override { return 2; }
  double dt() const override { return cfg_.dt; }
  std::string id() const override { return "two_link_reach"; }
  double control_limit() const override { return cfg_.torque_limit; }

  VectorXd reset(std::uint64_t seed) override {
    noise_rng_.seed(mix_seed(seed, 0x7071));
    std::mt19937_64 init_rng(mix_seed(seed, 0x1517));
    std::uniform_real_distribution<double> jit(-cfg_.start_jitter,
                                               cfg_.start_jitter);
    VectorXd x = VectorXd::Zero(4);
    x[0] = start_angles_[0] + jit(init_rng);
    x[1] = start_angles_[1] + jit(init_rng);
    return x;
  }

  VectorXd transition(const VectorXd& x, const VectorXd& u) override {
    std::normal_distribution<double> noise(
        0.0, cfg_.noise_scale * cfg_.torque_limit);
    Vector2d tau =
        u.head<2>().cwiseMax(-cfg_.torque_limit).cwiseMin(cfg_.torque_limit);
    tau[0] += noise(noise_rng_);
    tau[1] += noise(noise_rng_);

    VectorXd s = x;
    const double h = cfg_.dt / cfg_.substeps;
    for (int i = 0; i < cfg_.substeps; ++i) {
      const Vector2d qdd = accel(s, tau);
      s.tail<2>() += h * qdd;
      s.head<2>() += h * s.tail<2>();
    }
    return s;
  }

  Vector2d point_of_interest(const VectorXd& x) const override {
    const double c1 = std::cos(x[0]), s1 = std::sin(x[0]);
    const double c12 = std::cos(x[0] + x[1]), s12 = std::sin(x[0] + x[1]);
    return {cfg_.l1 * c1 + cfg_.l2 * c12, cfg_.l1 * s1 + cfg_.l2 * s12};
  }

  void poi_derivatives(const VectorXd& x, MatrixXd* jac,
                       std::array<MatrixXd, 2>* hess) const override {
    const int n = static_cast<int>(x.size());
    const double c1 = std::cos(x[0]), s1 = std::sin(x[0]);
    const double c12 = std::cos(x[0] + x[1]), s12 = std::sin(x[0] + x[1]);
    *jac = MatrixXd::Zero(2, n);
    (*jac)(0, 0) = -cfg_.l1 * s1 - cfg_.l2 * s12;
    (*jac)(0, 1) = -cfg_.l2 * s12;
    (*jac)(1, 0) = cfg_.l1 * c1 + cfg_.l2 * c12;
    (*jac)(1, 1) = cfg_.l2 * c12;

    (*hess)[0] = MatrixXd::Zero(n, n);
    (*hess)[1] = MatrixXd::Zero(n, n);
    (*hess)[0](0, 0) = -cfg_.l1 * c1 - cfg_.l2 * c12;
    (*hess)[0](0, 1) = -cfg_.l2 * c12;
    (*hess)[0](1, 0) = -cfg_.l2 * c12;
    (*hess)[0](1, 1) = -cfg_.l2 * c12;
    (*hess)[1](0, 0) = -cfg_.l1 * s1 - cfg_.l2 * s12;
    (*hess)[1](0, 1) = -cfg_.l2 * s12;
    (*hess)[1](1, 0) = -cfg_.l2 * s12;
    (*hess)[1](1, 1) = -cfg_.l2 * s12;
  }

 protected:
  Vector2d accel(const VectorXd& s, const Vector2d& tau_cmd) const {
    const double lc1 = cfg_.l1 / 2.0, lc2 = cfg_.l2 / 2.0;
    const double i1 = cfg_.m1 * cfg_.l1 * cfg_.l1 / 12.0;
    const double i2 = cfg_.m2 * cfg_.l2 * cfg_.l2 / 12.0;
    const double c2 = std::cos(s[1]), s2 = std::sin(s[1]);
    const Vector2d qd = s.tail<2>();

    Eigen::Matrix2d M;
    M(0, 0) = i1 + i2 + cfg_.m1 * lc1 * lc1 +
              cfg_.m2 *
                  (cfg_.l1 * cfg_.l1 + lc2 * lc2 + 2.0 * cfg_.l1 * lc2 * c2);
    M(0, 1) = i2 + cfg_.m2 * (lc2 * lc2 + cfg_.l1 * lc2 * c2);
    M(1, 0) = M(0, 1);
    M(1, 1) = i2 + cfg_.m2 * lc2 * lc2;

    const double hcor = cfg_.m2 * cfg_.l1 * lc2 * s2;
    Vector2d C;
    C[0] = -hcor * qd[1] * (2.0 * qd[0] + qd[1]);
    C[1] = hcor * qd[0] * qd[0];

    const double c1 = std::cos(s[0]);
    const double c12 = std::cos(s[0] + s[1]);
    Vector2d G;
    G[0] = cfg_.gravity * ((cfg_.m1 * lc1 + cfg_.m2 * cfg_.l1) * c1 +
                           cfg_.m2 * lc2 * c12);
    G[1] = cfg_.gravity * cfg_.m2 * lc2 * c12;

    // Contact enters through the end-effector jacobian.
    const double s1 = std::sin(s[0]);
    const double s12 = std::sin(s[0] + s[1]);
    Eigen::Matrix2d Jq;
    Jq(0, 0) = -cfg_.l1 * s1 - cfg_.l2 * s12;
    Jq(0, 1) = -cfg_.l2 * s12;
    Jq(1, 0) = cfg_.l1 * c1 + cfg_.l2 * c12;
    Jq(1, 1) = cfg_.l2 * c12;
    const Vector2d p = point_of_interest(s);
    const Vector2d fc = external_force(p, Jq * qd);

    const Vector2d tau =
        tau_cmd - cfg_.damping * qd - C - G + Jq.transpose() * fc;
    return M.ldlt().solve(tau);
  }

  ArmConfig cfg_;
  Vector2d start_angles_;
  std::mt19937_64 noise_rng_;
};

class InsertionEnv : public TwoLinkArmEnv {
 public:
  InsertionEnv(const InsertionConfig& cfg, std::string id)
      : TwoLinkArmEnv(cfg.arm), icfg_(cfg), id_(std::move(id)) {
    target_ = Vector2d(icfg_.channel_x, icfg_.surface_y - icfg_.target_depth);
    start_angles_ = two_link_ik(icfg_.start_ee, cfg.arm.l1, cfg.arm.l2);
  }

  std::string id() const override { return id_; }

  Vector2d external_force(const Vector2d& p,
                          const Vector2d& pdot) const override {
    Vector2d f = Vector2d::Zero();
    const double below = icfg_.surface_y - p[1];
    if (below <= 0.0) return f;  // above the surface, no contact

    const double lateral = std::abs(p[0] - icfg_.channel_x);

    // Surface: unilateral spring-damper fading across the channel lip.
    const double wgt = std::clamp(
        (lateral - icfg_.channel_half_width) / icfg_.lip_radius, 0.0, 1.0);
    if (wgt > 0.0) {
      const double fn = std::max(
          0.0, icfg_.k_p * below + icfg_.k_d * std::max(-pdot[1], 0.0));
      f[1] += wgt * fn;
      f[0] += -icfg_.friction * wgt * fn * std::tanh(pdot[0] / 0.01);
    }

    // Channel walls, engaging with depth below the surface.
    const double dwgt = std::clamp(below / icfg_.lip_radius, 0.0, 1.0);
    const double left = icfg_.channel_x - icfg_.channel_half_width;
    const double right = icfg_.channel_x + icfg_.channel_half_width;
    if (p[0] < left) {
      const double pen = left - p[0];
      f[0] += dwgt * std::max(0.0, icfg_.k_p * pen +
                                       icfg_.k_d * std::max(-pdot[0], 0.0));
    } else if (p[0] > right) {
      const double pen = p[0] - right;
      f[0] -= dwgt * std::max(0.0, icfg_.k_p * pen +
                                       icfg_.k_d * std::max(pdot[0], 0.0));
    }

    // Channel floor.
    const double floor_pen = (icfg_.surface_y - icfg_.channel_depth) - p[1];
    if (floor_pen > 0.0) {
      f[1] += std::max(0.0, icfg_.k_p * floor_pen +
                                icfg_.k_d * std::max(-pdot[1], 0.0));
    }
    return f;
  }

 private:
  InsertionConfig icfg_;
  std::string id_;
};

}  // namespace

std::unique_ptr<Environment> point_mass_env(const PointMassConfig& cfg) {
  return std::make_unique<PointMassEnv>(cfg);
}

std::unique_ptr<Environment> two_link_arm_env(const ArmConfig& cfg) {
  return std::make_unique<TwoLinkArmEnv>(cfg);
}

std::unique_ptr<Environment> insertion_env(const InsertionConfig& cfg) {
  return std::make_unique<InsertionEnv>(cfg, "insertion");
}

std::unique_ptr<Environment> make_env(const std::string& id) {
  if (id == "point_mass") return point_mass_env();
  if (id == "two_link_reach") return two_link_arm_env();
  if (id == "insertion") return insertion_env();
  if (id == "insertion_hf") {
    InsertionConfig cfg;
    cfg.friction = 2.0;
    return std::make_unique<InsertionEnv>(cfg, "insertion_hf");
  }
  throw std::invalid_argument("make_env: unknown environment id " + id);
}

TransitionDataset collect_dataset(Environment& env, const PolicySpec& spec,
                                  int episodes, int steps, std::uint64_t seed,
                                  const std::string& tag) {
  TransitionDataset out;
  DatasetMeta meta;
  meta.env_id = env.id();
  meta.dt = env.dt();
  meta.seed = seed;
  switch (spec.kind) {
    case PolicySpec::Kind::RandomTorque: meta.policy = "random"; break;
    case PolicySpec::Kind::ScriptedReach: meta.policy = "scripted"; break;
    case PolicySpec::Kind::SavedPolicy: meta.policy = "saved_policy"; break;
  }

  const int d_u = env.d_u();
  const double lim = env.control_limit();

  for (int ep = 0; ep < episodes; ++ep) {
    std::mt19937_64 rng(mix_seed(seed, 0xDA7A + ep));
    std::uniform_real_distribution<double> torque(-spec.scale * lim,
                                                  spec.scale * lim);
    std::uniform_real_distribution<double> angle(-2.2, 2.2);
    std::uniform_real_distribution<double> pos(-0.6, 0.6);

    std::vector<VectorXd> xs, us;
    xs.push_back(env.reset(mix_seed(seed, ep)));
    VectorXd held = VectorXd::Zero(d_u);
    VectorXd setpoint = VectorXd::Zero(d_u);

    for (int t = 0; t < steps; ++t) {
      VectorXd u(d_u);
      switch (spec.kind) {
        case PolicySpec::Kind::RandomTorque:
          if (t % std::max(1, spec.hold_steps) == 0) {
            for (int i = 0; i < d_u; ++i) held[i] = torque(rng);
          }
          u = held;
          break;
        case PolicySpec::Kind::ScriptedReach: {
          if (t % 60 == 0) {
            const bool arm_like = env.id() != "point_mass";
            for (int i = 0; i < d_u; ++i) {
              setpoint[i] = arm_like ? angle(rng) : pos(rng);
            }
          }
          const VectorXd& x = xs.back();
          u = spec.kp * (setpoint - x.head(d_u)) - spec.kd * x.tail(d_u);
          u = u.cwiseMax(-lim).cwiseMin(lim);
          break;
        }
        case PolicySpec::Kind::SavedPolicy: {
          const auto& pol = spec.policy.value();
          const int tt = std::min(t, pol.horizon() - 1);
          u = pol.action(tt, xs.back());
          u = u.cwiseMax(-lim).cwiseMin(lim);
          break;
        }
      }
      us.push_back(u);
      xs.push_back(env.transition(xs.back(), u));
    }

    for (int t = 1; t < steps; ++t) {
      TransitionRecord rec;
      rec.x_prev = xs[t - 1];
      rec.u_prev = us[t - 1];
      rec.x = xs[t];
      rec.u = us[t];
      rec.x_next = xs[t + 1];
      rec.tag = tag;
      out.records.push_back(std::move(rec));
    }
  }
  meta.records = out.records.size();
  out.sources.push_back(meta);
  return out;
}

}  // namespace odmpc
