#pragma once

#include <Eigen/Dense>
#include <random>

#include "odmpc/gaussian.hpp"

namespace odmpc::test {

inline MatrixXd random_psd(int n, std::mt19937_64& rng, double jitter = 0.5) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
  }
  return a * a.transpose() / n + jitter * MatrixXd::Identity(n, n);
}

inline VectorXd random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = gauss(rng);
  return v;
}

inline JointGaussian random_joint(int dim, std::mt19937_64& rng) {
  return JointGaussian{random_vec(dim, rng), random_psd(dim, rng)};
}

// Independent conditional-Gaussian oracle: E[y|z] = mu_y + S_yz S_zz^-1
// (z - mu_z), full-inverse route, no shared code with the implementation.
struct ConditionalOracle {
  MatrixXd map;     // S_yz S_zz^-1
  VectorXd offset;  // mu_y - map mu_z
  MatrixXd cov;     // S_yy - S_yz S_zz^-1 S_zy
};

inline ConditionalOracle condition_oracle(const JointGaussian& joint,
                                          int d_z) {
  const int d_y = joint.dim() - d_z;
  const MatrixXd s_zz = joint.cov.topLeftCorner(d_z, d_z);
  const MatrixXd s_yz = joint.cov.bottomLeftCorner(d_y, d_z);
  const MatrixXd s_yy = joint.cov.bottomRightCorner(d_y, d_y);
  ConditionalOracle out;
  out.map = s_yz * s_zz.inverse();
  out.offset = joint.mean.tail(d_y) - out.map * joint.mean.head(d_z);
  out.cov = s_yy - out.map * s_yz.transpose();
  return out;
}

}  // namespace odmpc::test
