#pragma once

#include <json.hpp>
#include <memory>
#include <string>

#include "odmpc/dataset.hpp"
#include "odmpc/ilqr.hpp"
#include "odmpc/mlp.hpp"
#include "odmpc/mpc.hpp"
#include "odmpc/online_estimator.hpp"
#include "odmpc/priors.hpp"

namespace odmpc {

using nlohmann::json;

json vec_to_json(const VectorXd& v);
VectorXd vec_from_json(const json& j);
json mat_to_json(const MatrixXd& m);  // {rows, cols, data(row-major)}
MatrixXd mat_from_json(const json& j);

// Flat checkpoint: {mean, delta(row-major), beta, n_eff}.
json moments_to_json(const RunningMoments& m);
RunningMoments moments_from_json(const json& j);

json mlp_to_json(const MLPModel& net);
MLPModel mlp_from_json(const json& j);

// Versioned prior artifact with a type tag (gaussian | gmm | nn1 | nn2).
json prior_to_json(const PriorModel& prior);
std::unique_ptr<PriorModel> prior_from_json(const json& j);
void save_prior(const std::string& path, const PriorModel& prior);
std::unique_ptr<PriorModel> load_prior(const std::string& path);

json policy_to_json(const TimeVaryingLinearPolicy& p);
TimeVaryingLinearPolicy policy_from_json(const json& j);

// Datasets persist as JSON lines plus a sidecar "<path>.meta.json".
void save_dataset(const std::string& path, const TransitionDataset& ds);
TransitionDataset load_dataset(const std::string& path);

// Trajectory log records, one JSON line per tick.
json tick_to_json(const TickLog& t);
TickLog tick_from_json(const json& j);

json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const json& j);

}  // namespace odmpc
