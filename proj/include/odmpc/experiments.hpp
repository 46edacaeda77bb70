#pragma once

#include <json.hpp>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "odmpc/envs.hpp"
#include "odmpc/mlp.hpp"
#include "odmpc/mpc.hpp"
#include "odmpc/priors.hpp"

namespace odmpc {

using nlohmann::json;

struct DataConfig {
  std::string dir = "out/data";
  int random_episodes = 25;
  int scripted_episodes = 15;
  int steps = 200;
  std::uint64_t seed = 9000;
};

struct PriorConfig {
  std::string family = "nn2";  // gaussian | gmm | nn1 | nn2
  double n0 = 1.0;
  double m = 1.0;
  double alpha = 1.0;  // nn state-action prior covariance scale
  int gmm_k = 8;
  std::uint64_t gmm_seed = 7;
  bool gmm_soft = false;
  std::vector<int> hidden = {60, 40};
  TrainConfig nn_train;
};

struct ExperimentsConfig {
  std::vector<std::string> tasks = {"point_mass", "two_link_reach",
                                    "insertion"};
  DataConfig data;
  PriorConfig prior;
  std::string priors_dir = "out/priors";
  MpcConfig mpc;
  int trials = 10;
  std::uint64_t base_seed = 0;
  std::vector<std::string> families = {"gaussian", "gmm", "nn1", "nn2"};
  std::vector<double> offsets_cm = {0.5, 1.0, 1.5};
  std::string robustness_env = "insertion";
  std::string robustness_family = "nn2";
  std::string out_dir = "out/results";
  int jobs = 0;  // 0 = library default
  int t_max = 200;
};

json config_to_json(const ExperimentsConfig& cfg);
ExperimentsConfig config_from_json(const json& j);

// Applies a `--set a.b.c=value` style override; the value is parsed as
// JSON when possible, else kept as a string.
void apply_override(json& doc, const std::string& dotted_key,
                    const std::string& value);

// FNV-1a over the canonical dump.
std::string config_hash(const json& j);

struct Wilson {
  double lo = 0.0;
  double hi = 1.0;
};
Wilson wilson_interval(int successes, int trials, double z = 1.96);

struct CellKey {
  std::string env;
  std::string family;
  bool adapt = true;
  double offset_cm = 0.0;

  std::string name() const;
};

struct CellResult {
  CellKey key;
  int trials = 0;
  int successes = 0;
  Wilson wilson;
  double mean_time_to_success = std::numeric_limits<double>::quiet_NaN();
  double mean_final_distance = std::numeric_limits<double>::quiet_NaN();
  std::vector<bool> outcomes;
  std::vector<double> final_distances;
  std::vector<std::uint64_t> seeds;
  std::string hash;
};

// Collects random + scripted datasets for each task into data.dir.
void cmd_collect_data(const ExperimentsConfig& cfg);

// Hold-one-out prior for one task, written to priors_dir. Returns the
// training report.
json cmd_train_prior(const ExperimentsConfig& cfg, const std::string& task,
                     const std::string& family);

// All cells of tasks x families x adapt on/off.
std::vector<CellResult> cmd_run_matrix(const ExperimentsConfig& cfg);

// Offset sweep {0} + offsets_cm on the robustness env, adapt on and off.
std::vector<CellResult> cmd_robustness(const ExperimentsConfig& cfg);

// Re-runs one logged trial and reports the worst numeric deviation
// against the stored log (wall time excluded).
double cmd_replay(const std::string& cell_dir, int trial_index);

// Lower-level building blocks, used by the commands and the acceptance
// suite.
TransitionDataset assemble_holdout(const ExperimentsConfig& cfg,
                                   const std::string& held_out_task);
std::unique_ptr<PriorModel> fit_prior(const ExperimentsConfig& cfg,
                                      const TransitionDataset& train_ds,
                                      const std::string& family,
                                      const std::string& task, json* report);
CellResult run_cell(const ExperimentsConfig& cfg, const CellKey& key,
                    std::shared_ptr<const PriorModel> prior,
                    const RunningMoments& init_moments,
                    const std::string& cell_dir);

void write_results_csv(const std::string& path,
                       const std::vector<CellResult>& cells);
void write_results_json(const std::string& path, const json& resolved_config,
                        const std::vector<CellResult>& cells);

}  // namespace odmpc
