#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "odmpc/dataset.hpp"
#include "odmpc/ilqr.hpp"

namespace odmpc {

using Eigen::Vector2d;

// Distance-shaped task cost r(d) = w d^2 + v log(d^2 + alpha) plus a
// quadratic torque penalty.
struct TaskCost {
  double w = 1.0;
  double v = 0.01;
  double alpha = 1e-5;
  double torque_weight = 1e-3;
  Vector2d target = Vector2d::Zero();
};

// Planar desk-scale environment. Transitions are a deterministic core
// plus Gaussian actuation noise drawn from an internal seeded stream.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int d_x() const = 0;
  virtual int d_u() const = 0;
  virtual double dt() const = 0;
  virtual std::string id() const = 0;

  virtual VectorXd reset(std::uint64_t seed) = 0;
  virtual VectorXd transition(const VectorXd& x, const VectorXd& u) = 0;

  // Point the task distance is measured from (mass position or
  // end-effector), with first and second derivatives w.r.t. the state.
  virtual Vector2d point_of_interest(const VectorXd& x) const = 0;
  virtual void poi_derivatives(const VectorXd& x, MatrixXd* jac,
                               std::array<MatrixXd, 2>* hess) const = 0;

  virtual double control_limit() const = 0;

  // Contact force at the point of interest; zero for contact-free
  // environments.
  virtual Vector2d external_force(const Vector2d&, const Vector2d&) const {
    return Vector2d::Zero();
  }

  const Vector2d& target() const { return target_; }
  void set_target(const Vector2d& t) { target_ = t; }
  double success_threshold() const { return success_threshold_; }

  double distance(const VectorXd& x) const {
    return (point_of_interest(x) - target_).norm();
  }

  // Default task cost centered on the true target.
  TaskCost task_cost() const {
    TaskCost c = cost_shape_;
    c.target = target_;
    return c;
  }
  void set_cost_shape(const TaskCost& c) { cost_shape_ = c; }

 protected:
  Vector2d target_ = Vector2d::Zero();
  double success_threshold_ = 0.02;
  TaskCost cost_shape_;
};

// Analytic cost oracle for iLQR: the distance shape chained through the
// environment's point-of-interest derivatives.
class TaskCostModel : public CostModel {
 public:
  TaskCostModel(const Environment& env, TaskCost cost)
      : env_(env), cost_(std::move(cost)) {}

  double value(const VectorXd& x, const VectorXd& u, int t) const override;
  bool quadratic(const VectorXd& x, const VectorXd& u, int t, VectorXd* grad,
                 MatrixXd* hess) const override;

  const TaskCost& cost() const { return cost_; }

 private:
  const Environment& env_;
  TaskCost cost_;
};

// Convenience wrapper matching the (value, gradient, Hessian) contract.
struct CostEval {
  double value = 0.0;
  VectorXd gradient;  // over [x; u]
  MatrixXd hessian;
};
CostEval eval_cost(const Environment& env, const TaskCost& cost,
                   const VectorXd& x, const VectorXd& u);

struct PointMassConfig {
  double dt = 0.05;
  double mass = 1.0;
  double drag = 0.5;
  double force_limit = 5.0;
  double noise_scale = 0.01;  // stddev = noise_scale * force_limit
  Vector2d start{-0.35, -0.35};
  Vector2d target{0.35, 0.35};
  double start_jitter = 0.02;
  double success_threshold = 0.01;
  int substeps = 1;
};

struct ArmConfig {
  double dt = 0.05;
  double l1 = 0.4, l2 = 0.4;
  double m1 = 1.0, m2 = 1.0;
  double damping = 0.5;
  double gravity = 9.81;
  double torque_limit = 15.0;
  double noise_scale = 0.01;
  Eigen::Vector2d start_angles{-1.2, 0.8};
  double start_jitter = 0.05;
  Vector2d target{0.5, 0.1};
  double success_threshold = 0.02;
  int substeps = 40;
};

struct InsertionConfig {
  ArmConfig arm;
  double surface_y = -0.35;
  double channel_x = 0.45;
  double channel_half_width = 0.012;
  double channel_depth = 0.05;
  double k_p = 1e4;
  double k_d = 100.0;
  double friction = 0.5;
  double lip_radius = 0.01;
  double target_depth = 0.03;  // target this far below the surface
  Vector2d start_ee{0.38, -0.22};

  InsertionConfig() {
    arm.substeps = 40;
    arm.target = Vector2d(channel_x, surface_y - target_depth);
  }
};

std::unique_ptr<Environment> point_mass_env(const PointMassConfig& cfg = {});
std::unique_ptr<Environment> two_link_arm_env(const ArmConfig& cfg = {});
std::unique_ptr<Environment> insertion_env(const InsertionConfig& cfg = {});

// Builds the environment registered under `id` ("point_mass",
// "two_link_reach", "insertion", "insertion_hf").
std::unique_ptr<Environment> make_env(const std::string& id);

// Closed-form two-link inverse kinematics (elbow sign +-1).
Eigen::Vector2d two_link_ik(const Vector2d& p, double l1, double l2,
                            double elbow = 1.0);

// Kinetic plus gravitational energy of the arm, for conservation checks.
double mechanical_energy(const ArmConfig& cfg, const VectorXd& x);

// Data-collection behaviors.
struct PolicySpec {
  enum class Kind { RandomTorque, ScriptedReach, SavedPolicy };
  Kind kind = Kind::RandomTorque;
  double scale = 0.6;      // fraction of the control limit (random torques)
  int hold_steps = 5;      // random torque refresh period
  double kp = 20.0;        // scripted PD gains
  double kd = 4.0;
  std::optional<TimeVaryingLinearPolicy> policy;  // saved MPC policy
};

TransitionDataset collect_dataset(Environment& env, const PolicySpec& spec,
                                  int episodes, int steps, std::uint64_t seed,
                                  const std::string& tag);

}  // namespace odmpc
