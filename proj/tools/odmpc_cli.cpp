#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "odmpc/experiments.hpp"
#include "odmpc/parallel.hpp"
#include "odmpc/serialize.hpp"

using namespace odmpc;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed = -1;
  std::string out_dir;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "configuration JSON file");
  cmd->add_option("--set", args->overrides,
                  "override a config value by dot path, e.g. mpc.horizon=15");
  cmd->add_option("--seed", args->seed, "base seed override");
  cmd->add_option("--out", args->out_dir, "output directory override");
  cmd->add_option("--jobs", args->jobs, "worker threads for trials");
}

ExperimentsConfig resolve_config(const CommonArgs& args) {
  json doc = config_to_json(ExperimentsConfig{});
  if (!args.config_path.empty()) {
    doc.update(load_json_file(args.config_path), true);
  }
  for (const auto& ov : args.overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) {
      throw CLI::ValidationError("--set expects KEY=VALUE, got " + ov);
    }
    apply_override(doc, ov.substr(0, eq), ov.substr(eq + 1));
  }
  ExperimentsConfig cfg = config_from_json(doc);
  if (args.seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(args.seed);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.jobs > 0) {
    cfg.jobs = args.jobs;
    par::set_threads(args.jobs);
  }
  return cfg;
}

void print_cells(const std::vector<CellResult>& cells) {
  for (const auto& c : cells) {
    std::printf("%-40s %2d/%2d  [%.2f, %.2f]  mean dist %.4f\n",
                c.key.name().c_str(), c.successes, c.trials, c.wilson.lo,
                c.wilson.hi, c.mean_final_distance);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"online-adapted model-based control benchmarks"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* collect = app.add_subcommand("collect-data",
                                     "generate per-task transition datasets");
  add_common(collect, &args);

  auto* train = app.add_subcommand(
      "train-prior", "fit a hold-one-out dynamics prior per task");
  add_common(train, &args);
  std::string train_task = "all";
  std::string train_family;
  train->add_option("--task", train_task, "held-out task (default: all)");
  train->add_option("--family", train_family,
                    "prior family (default: config prior.family; 'all' fits "
                    "every family)");

  auto* matrix = app.add_subcommand(
      "run-matrix", "run the prior-family x adaptation comparison matrix");
  add_common(matrix, &args);

  auto* robust = app.add_subcommand(
      "robustness", "sweep target offsets on the robustness environment");
  add_common(robust, &args);

  auto* replay =
      app.add_subcommand("replay", "re-run one logged trial and compare");
  std::string cell_dir;
  int trial_index = 0;
  double tol = 1e-12;
  replay->add_option("--cell", cell_dir, "cell output directory")->required();
  replay->add_option("--trial", trial_index, "trial index")->required();
  replay->add_option("--tol", tol, "max allowed numeric deviation");

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed()) {
      cmd_collect_data(resolve_config(args));
      std::puts("datasets written");
    } else if (train->parsed()) {
      const ExperimentsConfig cfg = resolve_config(args);
      std::vector<std::string> tasks =
          train_task == "all" ? cfg.tasks : std::vector<std::string>{train_task};
      std::vector<std::string> families;
      if (train_family.empty()) {
        families = {cfg.prior.family};
      } else if (train_family == "all") {
        families = cfg.families;
      } else {
        families = {train_family};
      }
      for (const auto& task : tasks) {
        for (const auto& family : families) {
          const json report = cmd_train_prior(cfg, task, family);
          std::cout << report.dump(2) << "\n";
        }
      }
    } else if (matrix->parsed()) {
      print_cells(cmd_run_matrix(resolve_config(args)));
    } else if (robust->parsed()) {
      print_cells(cmd_robustness(resolve_config(args)));
    } else if (replay->parsed()) {
      const double diff = cmd_replay(cell_dir, trial_index);
      std::printf("max deviation %.3e (tolerance %.3e)\n", diff, tol);
      return diff <= tol ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
