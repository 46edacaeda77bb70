#include "odmpc/mlp.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "odmpc/errors.hpp"
#include "odmpc/parallel.hpp"

namespace odmpc {

namespace {

// Forward pass keeping pre-activations for backprop / jacobians.
struct Trace {
  std::vector<VectorXd> act;  // act[0] = normalized input, act[L] = output
  std::vector<VectorXd> pre;  // pre-activations per layer
};

Trace run_layers(const MLPModel& net, const VectorXd& normalized_in) {
  Trace tr;
  const std::size_t L = net.W.size();
  tr.act.resize(L + 1);
  tr.pre.resize(L);
  tr.act[0] = normalized_in;
  for (std::size_t l = 0; l < L; ++l) {
    tr.pre[l] = net.W[l] * tr.act[l] + net.b[l];
    tr.act[l + 1] =
        (l + 1 < L) ? tr.pre[l].cwiseMax(0.0).eval() : tr.pre[l];
  }
  return tr;
}

VectorXd integrate_step(const MLPModel& net, const VectorXd& x,
                        const VectorXd& a) {
  VectorXd next = x;
  for (int j = 0; j < net.accel_dim(); ++j) {
    const int vi = net.layout.vel_idx[j];
    const int qi = net.layout.pos_idx[j];
    next[vi] = x[vi] + net.dt * a[j];
    next[qi] = x[qi] + net.dt * next[vi];
  }
  return next;
}

void check_input(const MLPModel& net, const VectorXd& input) {
  if (input.size() != net.input_dim()) {
    throw std::invalid_argument("MLPModel: input dimension mismatch");
  }
}

}  // namespace

VectorXd MLPModel::accel(const VectorXd& input) const {
  check_input(*this, input);
  const VectorXd normalized =
      (input - in_mean).cwiseQuotient(in_std);
  Trace tr = run_layers(*this, normalized);
  return accel_mean + accel_std.cwiseProduct(tr.act.back());
}

MLPModel::Forward MLPModel::forward(const VectorXd& input) const {
  Forward out;
  out.accel = accel(input);
  out.next_state = integrate_step(*this, input.segment(x_offset(), d_x),
                                  out.accel);
  return out;
}

MatrixXd MLPModel::accel_jacobian(const VectorXd& input) const {
  check_input(*this, input);
  const VectorXd normalized = (input - in_mean).cwiseQuotient(in_std);
  Trace tr = run_layers(*this, normalized);
  const std::size_t L = W.size();
  MatrixXd J = W[0];
  for (std::size_t l = 1; l < L; ++l) {
    // Rectifier mask of the previous layer; subgradient 0 at the kink.
    const VectorXd mask =
        (tr.pre[l - 1].array() > 0.0).cast<double>().matrix();
    J = W[l] * mask.asDiagonal() * J;
  }
  return accel_std.asDiagonal() * J * in_std.cwiseInverse().asDiagonal();
}

MatrixXd MLPModel::jacobian(const VectorXd& input) const {
  const MatrixXd A = accel_jacobian(input);
  MatrixXd J = MatrixXd::Zero(d_x, input_dim());
  const int off = x_offset();
  for (int j = 0; j < accel_dim(); ++j) {
    const int vi = layout.vel_idx[j];
    const int qi = layout.pos_idx[j];
    J(vi, off + vi) = 1.0;
    J(qi, off + qi) = 1.0;
    J(qi, off + vi) = dt;
    J.row(vi) += dt * A.row(j);
    J.row(qi) += dt * dt * A.row(j);
  }
  return J;
}

MLPModel make_mlp(int d_x, int d_u, bool context, double dt,
                  const StateLayout& layout, std::uint64_t seed,
                  const std::vector<int>& hidden) {
  MLPModel net;
  net.context = context;
  net.dt = dt;
  net.d_x = d_x;
  net.d_u = d_u;
  net.layout = layout;

  std::vector<int> sizes;
  sizes.push_back(net.input_dim());
  for (int h : hidden) sizes.push_back(h);
  sizes.push_back(net.accel_dim());

  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-lim, lim);
    MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = u(rng);
    }
    net.W.push_back(std::move(w));
    net.b.push_back(VectorXd::Zero(fan_out));
  }
  net.in_mean = VectorXd::Zero(net.input_dim());
  net.in_std = VectorXd::Ones(net.input_dim());
  net.accel_mean = VectorXd::Zero(net.accel_dim());
  net.accel_std = VectorXd::Ones(net.accel_dim());
  return net;
}

namespace {

// Per-sample forward + backprop of the through-integrator loss
// ||next_state - target||^2. Gradient accumulated into `g`.
double sample_gradient(const MLPModel& net, const VectorXd& input,
                       const VectorXd& target, MlpGradient& g) {
  const std::size_t L = net.W.size();
  const VectorXd normalized =
      (input - net.in_mean).cwiseQuotient(net.in_std);
  Trace tr = run_layers(net, normalized);
  const VectorXd a = net.accel_mean + net.accel_std.cwiseProduct(tr.act[L]);
  const VectorXd x = input.segment(net.x_offset(), net.d_x);
  const VectorXd next = integrate_step(net, x, a);
  const VectorXd r = next - target;

  // dL/da through both integrator rows.
  VectorXd dLda(net.accel_dim());
  for (int j = 0; j < net.accel_dim(); ++j) {
    const int vi = net.layout.vel_idx[j];
    const int qi = net.layout.pos_idx[j];
    dLda[j] = 2.0 * net.dt * r[vi] + 2.0 * net.dt * net.dt * r[qi];
  }

  VectorXd delta = net.accel_std.cwiseProduct(dLda);
  for (std::size_t l = L; l-- > 0;) {
    g.gW[l] += delta * tr.act[l].transpose();
    g.gb[l] += delta;
    if (l > 0) {
      const VectorXd mask =
          (tr.pre[l - 1].array() > 0.0).cast<double>().matrix();
      delta = (net.W[l].transpose() * delta).cwiseProduct(mask);
    }
  }
  return r.squaredNorm();
}

MlpGradient zero_gradient(const MLPModel& net) {
  MlpGradient g;
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    g.gW.push_back(MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
    g.gb.push_back(VectorXd::Zero(net.b[l].size()));
  }
  return g;
}

}  // namespace

MlpGradient mlp_batch_gradient_serial(const MLPModel& net,
                                      const MatrixXd& inputs,
                                      const MatrixXd& targets,
                                      const std::vector<int>& idx) {
  MlpGradient g = zero_gradient(net);
  for (int i : idx) {
    g.loss_sum += sample_gradient(net, inputs.row(i).transpose(),
                                  targets.row(i).transpose(), g);
  }
  g.count = idx.size();
  return g;
}

MlpGradient mlp_batch_gradient(const MLPModel& net, const MatrixXd& inputs,
                               const MatrixXd& targets,
                               const std::vector<int>& idx) {
  // Fixed chunking: the reduction order does not depend on thread count.
  MlpGradient g = par::chunked_reduce<MlpGradient>(
      idx.size(), 8, [&net] { return zero_gradient(net); },
      [&](std::size_t lo, std::size_t hi, MlpGradient& acc) {
        for (std::size_t i = lo; i < hi; ++i) {
          acc.loss_sum += sample_gradient(net, inputs.row(idx[i]).transpose(),
                                          targets.row(idx[i]).transpose(), acc);
        }
      },
      [](MlpGradient& t, const MlpGradient& p) {
        for (std::size_t l = 0; l < t.gW.size(); ++l) {
          t.gW[l] += p.gW[l];
          t.gb[l] += p.gb[l];
        }
        t.loss_sum += p.loss_sum;
      });
  g.count = idx.size();
  return g;
}

TrainReport train(MLPModel& net, const TransitionDataset& dataset,
                  const TrainConfig& cfg) {
  const int n = static_cast<int>(dataset.size());
  if (n < 2 * cfg.batch_size) {
    throw std::invalid_argument("train: dataset smaller than two batches");
  }

  MatrixXd inputs(n, net.input_dim());
  MatrixXd targets(n, net.d_x);
  for (int i = 0; i < n; ++i) {
    const auto& rec = dataset.records[i];
    inputs.row(i) =
        (net.context ? context_input(rec) : current_input(rec)).transpose();
    targets.row(i) = rec.x_next.transpose();
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_val = std::max(1, static_cast<int>(std::lround(n * cfg.val_split)));
  const int n_train = n - n_val;
  std::vector<int> train_idx(order.begin(), order.begin() + n_train);
  std::vector<int> val_idx(order.begin() + n_train, order.end());

  // Standardization from the training split only.
  VectorXd in_sum = VectorXd::Zero(net.input_dim());
  VectorXd in_sq = VectorXd::Zero(net.input_dim());
  VectorXd a_sum = VectorXd::Zero(net.accel_dim());
  VectorXd a_sq = VectorXd::Zero(net.accel_dim());
  for (int i : train_idx) {
    const VectorXd in = inputs.row(i).transpose();
    in_sum += in;
    in_sq += in.cwiseAbs2();
    const VectorXd x = in.segment(net.x_offset(), net.d_x);
    for (int j = 0; j < net.accel_dim(); ++j) {
      const int vi = net.layout.vel_idx[j];
      const double aj = (targets(i, vi) - x[vi]) / net.dt;
      a_sum[j] += aj;
      a_sq[j] += aj * aj;
    }
  }
  const double inv_n = 1.0 / n_train;
  net.in_mean = in_sum * inv_n;
  net.in_std = (in_sq * inv_n - net.in_mean.cwiseAbs2())
                   .cwiseMax(0.0)
                   .cwiseSqrt()
                   .cwiseMax(1e-8);
  net.accel_mean = a_sum * inv_n;
  net.accel_std = (a_sq * inv_n - net.accel_mean.cwiseAbs2())
                      .cwiseMax(0.0)
                      .cwiseSqrt()
                      .cwiseMax(1e-8);

  auto eval_loss = [&](const std::vector<int>& idx) {
    double s = 0.0;
    for (int i : idx) {
      const auto fwd = net.forward(inputs.row(i).transpose());
      s += (fwd.next_state - targets.row(i).transpose()).squaredNorm();
    }
    return idx.empty() ? 0.0 : s / static_cast<double>(idx.size());
  };

  std::vector<MatrixXd> mW;
  std::vector<VectorXd> mb;
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    mW.push_back(MatrixXd::Zero(net.W[l].rows(), net.W[l].cols()));
    mb.push_back(VectorXd::Zero(net.b[l].size()));
  }

  TrainReport report;
  double initial_loss = -1.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double epoch_sum = 0.0;
    std::size_t epoch_count = 0;
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      const int stop = std::min(n_train, start + cfg.batch_size);
      std::vector<int> batch(train_idx.begin() + start,
                             train_idx.begin() + stop);
      MlpGradient g = mlp_batch_gradient(net, inputs, targets, batch);
      const double scale = 1.0 / static_cast<double>(batch.size());
      for (std::size_t l = 0; l < net.W.size(); ++l) {
        mW[l] = cfg.momentum * mW[l] -
                cfg.learning_rate *
                    (g.gW[l] * scale + cfg.weight_decay * net.W[l]);
        mb[l] = cfg.momentum * mb[l] - cfg.learning_rate * (g.gb[l] * scale);
        net.W[l] += mW[l];
        net.b[l] += mb[l];
      }
      epoch_sum += g.loss_sum;
      epoch_count += batch.size();
    }
    const double epoch_loss = epoch_sum / static_cast<double>(epoch_count);
    report.epoch_loss.push_back(epoch_loss);
    if (initial_loss < 0.0) initial_loss = epoch_loss;
    if (!std::isfinite(epoch_loss) || epoch_loss > 1e3 * initial_loss) {
      std::ostringstream msg;
      msg << "train: diverged at epoch " << epoch << " (loss " << epoch_loss
          << ", initial " << initial_loss << ")";
      throw TrainingError(msg.str());
    }
  }

  report.train_loss = eval_loss(train_idx);
  report.val_loss = eval_loss(val_idx);
  return report;
}

}  // namespace odmpc
