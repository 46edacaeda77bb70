#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "odmpc/dataset.hpp"

namespace odmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Where the position and velocity blocks live inside the state vector.
// The network predicts one acceleration per velocity index.
struct StateLayout {
  std::vector<int> pos_idx;
  std::vector<int> vel_idx;
};

// Feed-forward rectifier network predicting accelerations, integrated
// semi-implicitly to the next state: v' = v + a dt, q' = q + v' dt.
// With `context` set the input is [x_prev; u_prev; x; u] instead of [x; u].
struct MLPModel {
  std::vector<MatrixXd> W;  // W[l]: (out x in)
  std::vector<VectorXd> b;
  bool context = false;
  double dt = 0.05;
  int d_x = 0;
  int d_u = 0;
  StateLayout layout;

  // Input standardization and acceleration de-standardization, fitted
  // from training data. Identity until trained.
  VectorXd in_mean, in_std;
  VectorXd accel_mean, accel_std;

  int input_dim() const { return context ? 2 * (d_x + d_u) : d_x + d_u; }
  int accel_dim() const { return static_cast<int>(layout.vel_idx.size()); }
  // Offset of the current state inside the input vector.
  int x_offset() const { return context ? d_x + d_u : 0; }

  VectorXd accel(const VectorXd& input) const;

  struct Forward {
    VectorXd accel;
    VectorXd next_state;
  };
  Forward forward(const VectorXd& input) const;

  // Analytic d(next_state)/d(input): rectifier chain rule plus the
  // integrator blocks dv'/da = dt I, dq'/da = dt^2 I and the identity
  // passthrough of the current q, v.
  MatrixXd jacobian(const VectorXd& input) const;

  // d(accel)/d(input), including both normalizations.
  MatrixXd accel_jacobian(const VectorXd& input) const;
};

MLPModel make_mlp(int d_x, int d_u, bool context, double dt,
                  const StateLayout& layout, std::uint64_t seed,
                  const std::vector<int>& hidden = {60, 40});

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  int batch_size = 64;
  int epochs = 200;
  double weight_decay = 1e-5;
  std::uint64_t seed = 0;
  double val_split = 0.1;
};

struct TrainReport {
  double train_loss = 0.0;  // mean ||x'_pred - x'_obs||^2 on the train split
  double val_loss = 0.0;
  std::vector<double> epoch_loss;
};

// Minimizes the next-state prediction error through the integrator with
// SGD + momentum. Deterministic for a fixed seed. Throws TrainingError if
// the loss exceeds 1e3x its initial value.
TrainReport train(MLPModel& net, const TransitionDataset& dataset,
                  const TrainConfig& cfg);

// Accumulated batch gradient of the through-integrator loss.
struct MlpGradient {
  std::vector<MatrixXd> gW;
  std::vector<VectorXd> gb;
  double loss_sum = 0.0;
  std::size_t count = 0;
};

// OpenMP kernel plus the serial reference kept for testing. `inputs` and
// `targets` hold one sample per row; `idx` selects the batch.
MlpGradient mlp_batch_gradient(const MLPModel& net, const MatrixXd& inputs,
                               const MatrixXd& targets,
                               const std::vector<int>& idx);
MlpGradient mlp_batch_gradient_serial(const MLPModel& net,
                                      const MatrixXd& inputs,
                                      const MatrixXd& targets,
                                      const std::vector<int>& idx);

}  // namespace odmpc
