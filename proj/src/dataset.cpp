#include "odmpc/dataset.hpp"

#include <stdexcept>

namespace odmpc {

void TransitionDataset::append(const TransitionDataset& other) {
  if (!records.empty() && !other.records.empty() &&
      (d_x() != other.d_x() || d_u() != other.d_u())) {
    throw std::invalid_argument("TransitionDataset::append: dimension mismatch");
  }
  records.insert(records.end(), other.records.begin(), other.records.end());
  sources.insert(sources.end(), other.sources.begin(), other.sources.end());
}

TransitionDataset TransitionDataset::excluding(const std::string& held_out_tag) const {
  TransitionDataset out;
  out.sources = sources;
  out.records.reserve(records.size());
  for (const auto& r : records) {
    if (r.tag != held_out_tag) out.records.push_back(r);
  }
  return out;
}

VectorXd stacked(const TransitionRecord& r) {
  VectorXd p(r.x.size() + r.u.size() + r.x_next.size());
  p << r.x, r.u, r.x_next;
  return p;
}

VectorXd current_input(const TransitionRecord& r) {
  VectorXd p(r.x.size() + r.u.size());
  p << r.x, r.u;
  return p;
}

VectorXd context_input(const TransitionRecord& r) {
  VectorXd p(2 * (r.x.size() + r.u.size()));
  p << r.x_prev, r.u_prev, r.x, r.u;
  return p;
}

}  // namespace odmpc
