#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace odmpc {

using Eigen::VectorXd;

// One observed transition with one step of history:
// (x_{t-1}, u_{t-1}, x_t, u_t, x_{t+1}).
struct TransitionRecord {
  VectorXd x_prev;
  VectorXd u_prev;
  VectorXd x;
  VectorXd u;
  VectorXd x_next;
  std::string tag;  // task the record came from
};

struct DatasetMeta {
  std::string env_id;
  double dt = 0.0;
  std::string policy;
  std::uint64_t seed = 0;
  std::size_t records = 0;
};

struct TransitionDataset {
  std::vector<TransitionRecord> records;
  std::vector<DatasetMeta> sources;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  int d_x() const { return records.empty() ? 0 : static_cast<int>(records.front().x.size()); }
  int d_u() const { return records.empty() ? 0 : static_cast<int>(records.front().u.size()); }
  // Dimension of the stacked transition vector [x; u; x'].
  int stacked_dim() const { return 2 * d_x() + d_u(); }

  void append(const TransitionDataset& other);
  // Keeps only records whose tag differs from `held_out_tag`.
  TransitionDataset excluding(const std::string& held_out_tag) const;
};

// Stacked transition vector [x; u; x'] a joint Gaussian is fitted to.
VectorXd stacked(const TransitionRecord& r);

// Network inputs for the two architectures.
VectorXd current_input(const TransitionRecord& r);   // [x; u]
VectorXd context_input(const TransitionRecord& r);   // [x_prev; u_prev; x; u]

}  // namespace odmpc
