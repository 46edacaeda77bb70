#include "odmpc/experiments.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "odmpc/online_estimator.hpp"
#include "odmpc/parallel.hpp"
#include "odmpc/rng_util.hpp"
#include "odmpc/serialize.hpp"

namespace odmpc {

namespace fs = std::filesystem;

namespace {

json adapt_to_json(const AdaptConfig& a) {
  return json{{"eta0", a.eta0},       {"nu0", a.nu0},
              {"beta_min", a.beta_min}, {"beta_max", a.beta_max},
              {"n_min", a.n_min},     {"n_max", a.n_max},
              {"rho_floor", a.rho_floor}};
}

AdaptConfig adapt_from_json(const json& j) {
  AdaptConfig a;
  a.eta0 = j.value("eta0", a.eta0);
  a.nu0 = j.value("nu0", a.nu0);
  a.beta_min = j.value("beta_min", a.beta_min);
  a.beta_max = j.value("beta_max", a.beta_max);
  a.n_min = j.value("n_min", a.n_min);
  a.n_max = j.value("n_max", a.n_max);
  a.rho_floor = j.value("rho_floor", a.rho_floor);
  return a;
}

json mpc_to_json(const MpcConfig& m) {
  return json{{"horizon", m.horizon},
              {"rate_hz", m.rate_hz},
              {"gamma", m.gamma},
              {"ilqr_iters", m.ilqr_iters},
              {"noise_scale", m.noise_scale},
              {"adapt", m.adapt},
              {"seed", m.seed},
              {"adapt_cfg", adapt_to_json(m.adapt_cfg)},
              {"mean_rule",
               m.mean_rule == MeanRule::Paper ? "paper" : "standard"}};
}

MpcConfig mpc_from_json(const json& j) {
  MpcConfig m;
  m.horizon = j.value("horizon", m.horizon);
  m.rate_hz = j.value("rate_hz", m.rate_hz);
  m.gamma = j.value("gamma", m.gamma);
  m.ilqr_iters = j.value("ilqr_iters", m.ilqr_iters);
  m.noise_scale = j.value("noise_scale", m.noise_scale);
  m.adapt = j.value("adapt", m.adapt);
  m.seed = j.value("seed", m.seed);
  if (j.contains("adapt_cfg")) m.adapt_cfg = adapt_from_json(j["adapt_cfg"]);
  m.mean_rule = j.value("mean_rule", std::string("paper")) == "standard"
                    ? MeanRule::Standard
                    : MeanRule::Paper;
  return m;
}

json train_to_json(const TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate},
              {"momentum", t.momentum},
              {"batch_size", t.batch_size},
              {"epochs", t.epochs},
              {"weight_decay", t.weight_decay},
              {"seed", t.seed},
              {"val_split", t.val_split}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.momentum = j.value("momentum", t.momentum);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.epochs = j.value("epochs", t.epochs);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.seed = j.value("seed", t.seed);
  t.val_split = j.value("val_split", t.val_split);
  return t;
}

std::uint64_t tag_seed(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

json config_to_json(const ExperimentsConfig& cfg) {
  return json{
      {"tasks", cfg.tasks},
      {"data",
       json{{"dir", cfg.data.dir},
            {"random_episodes", cfg.data.random_episodes},
            {"scripted_episodes", cfg.data.scripted_episodes},
            {"steps", cfg.data.steps},
            {"seed", cfg.data.seed}}},
      {"prior",
       json{{"family", cfg.prior.family},
            {"n0", cfg.prior.n0},
            {"m", cfg.prior.m},
            {"alpha", cfg.prior.alpha},
            {"gmm_k", cfg.prior.gmm_k},
            {"gmm_seed", cfg.prior.gmm_seed},
            {"gmm_soft", cfg.prior.gmm_soft},
            {"hidden", cfg.prior.hidden},
            {"nn_train", train_to_json(cfg.prior.nn_train)}}},
      {"priors_dir", cfg.priors_dir},
      {"mpc", mpc_to_json(cfg.mpc)},
      {"trials", cfg.trials},
      {"base_seed", cfg.base_seed},
      {"families", cfg.families},
      {"offsets_cm", cfg.offsets_cm},
      {"robustness_env", cfg.robustness_env},
      {"robustness_family", cfg.robustness_family},
      {"out_dir", cfg.out_dir},
      {"jobs", cfg.jobs},
      {"t_max", cfg.t_max}};
}

ExperimentsConfig config_from_json(const json& j) {
  ExperimentsConfig cfg;
  cfg.tasks = j.value("tasks", cfg.tasks);
  if (j.contains("data")) {
    const auto& d = j["data"];
    cfg.data.dir = d.value("dir", cfg.data.dir);
    cfg.data.random_episodes =
        d.value("random_episodes", cfg.data.random_episodes);
    cfg.data.scripted_episodes =
        d.value("scripted_episodes", cfg.data.scripted_episodes);
    cfg.data.steps = d.value("steps", cfg.data.steps);
    cfg.data.seed = d.value("seed", cfg.data.seed);
  }
  if (j.contains("prior")) {
    const auto& p = j["prior"];
    cfg.prior.family = p.value("family", cfg.prior.family);
    cfg.prior.n0 = p.value("n0", cfg.prior.n0);
    cfg.prior.m = p.value("m", cfg.prior.m);
    cfg.prior.alpha = p.value("alpha", cfg.prior.alpha);
    cfg.prior.gmm_k = p.value("gmm_k", cfg.prior.gmm_k);
    cfg.prior.gmm_seed = p.value("gmm_seed", cfg.prior.gmm_seed);
    cfg.prior.gmm_soft = p.value("gmm_soft", cfg.prior.gmm_soft);
    cfg.prior.hidden = p.value("hidden", cfg.prior.hidden);
    if (p.contains("nn_train")) cfg.prior.nn_train = train_from_json(p["nn_train"]);
  }
  cfg.priors_dir = j.value("priors_dir", cfg.priors_dir);
  if (j.contains("mpc")) cfg.mpc = mpc_from_json(j["mpc"]);
  cfg.trials = j.value("trials", cfg.trials);
  cfg.base_seed = j.value("base_seed", cfg.base_seed);
  cfg.families = j.value("families", cfg.families);
  cfg.offsets_cm = j.value("offsets_cm", cfg.offsets_cm);
  cfg.robustness_env = j.value("robustness_env", cfg.robustness_env);
  cfg.robustness_family = j.value("robustness_family", cfg.robustness_family);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.jobs = j.value("jobs", cfg.jobs);
  cfg.t_max = j.value("t_max", cfg.t_max);
  return cfg;
}

void apply_override(json& doc, const std::string& dotted_key,
                    const std::string& value) {
  json* node = &doc;
  std::stringstream ss(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw std::invalid_argument("apply_override: empty key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    node = &(*node)[parts[i]];
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  (*node)[parts.back()] = parsed;
}

std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

Wilson wilson_interval(int successes, int trials, double z) {
  Wilson w;
  if (trials <= 0) return w;
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half =
      z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  w.lo = std::max(0.0, center - half);
  w.hi = std::min(1.0, center + half);
  return w;
}

std::string CellKey::name() const {
  std::ostringstream s;
  s << env << "_" << family << (adapt ? "_adapt" : "_noadapt");
  if (offset_cm > 0.0) {
    s << "_off" << static_cast<int>(std::lround(offset_cm * 10.0)) << "mm";
  }
  return s.str();
}

void cmd_collect_data(const ExperimentsConfig& cfg) {
  fs::create_directories(cfg.data.dir);
  for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
    const std::string& task = cfg.tasks[i];
    auto env = make_env(task);
    PolicySpec random;
    random.kind = PolicySpec::Kind::RandomTorque;
    PolicySpec scripted;
    scripted.kind = PolicySpec::Kind::ScriptedReach;

    TransitionDataset ds =
        collect_dataset(*env, random, cfg.data.random_episodes, cfg.data.steps,
                        mix_seed(cfg.data.seed, tag_seed(task)), task);
    ds.append(collect_dataset(*env, scripted, cfg.data.scripted_episodes,
                              cfg.data.steps,
                              mix_seed(cfg.data.seed, tag_seed(task) + 1),
                              task));
    save_dataset(cfg.data.dir + "/" + task + ".jsonl", ds);
  }
}

TransitionDataset assemble_holdout(const ExperimentsConfig& cfg,
                                   const std::string& held_out_task) {
  TransitionDataset all;
  std::vector<std::string> missing;
  for (const auto& task : cfg.tasks) {
    const std::string path = cfg.data.dir + "/" + task + ".jsonl";
    if (!fs::exists(path)) {
      missing.push_back(path);
      continue;
    }
    all.append(load_dataset(path));
  }
  if (!missing.empty()) {
    std::string msg = "missing dataset files:";
    for (const auto& p : missing) msg += " " + p;
    throw std::runtime_error(msg);
  }
  return all.excluding(held_out_task);
}

std::unique_ptr<PriorModel> fit_prior(const ExperimentsConfig& cfg,
                                      const TransitionDataset& train_ds,
                                      const std::string& family,
                                      const std::string& task, json* report) {
  std::unique_ptr<PriorModel> prior;
  json rep;
  rep["task"] = task;
  rep["family"] = family;
  rep["records"] = train_ds.size();

  if (family == "gaussian") {
    auto g = fit_gaussian_prior(train_ds, cfg.prior.n0, cfg.prior.m);
    rep["regularized"] = g.regularized();
    prior = std::make_unique<GaussianPrior>(std::move(g));
  } else if (family == "gmm") {
    GmmFitReport fit_rep;
    auto g = fit_gmm(train_ds, cfg.prior.gmm_k,
                     mix_seed(cfg.prior.gmm_seed, tag_seed(task)),
                     cfg.prior.n0, cfg.prior.m, cfg.prior.gmm_soft, {},
                     &fit_rep);
    rep["em_iterations"] = fit_rep.loglik.size();
    rep["final_loglik_per_sample"] =
        fit_rep.loglik.empty() ? 0.0 : fit_rep.loglik.back();
    rep["reseeds"] = fit_rep.reseeds;
    prior = std::make_unique<GmmPrior>(std::move(g));
  } else if (family == "nn1" || family == "nn2") {
    const bool context = family == "nn2";
    const int d_x = train_ds.d_x();
    StateLayout layout;
    for (int i = 0; i < d_x / 2; ++i) layout.pos_idx.push_back(i);
    for (int i = d_x / 2; i < d_x; ++i) layout.vel_idx.push_back(i);
    const double dt =
        train_ds.sources.empty() ? 0.05 : train_ds.sources.front().dt;
    TrainConfig tc = cfg.prior.nn_train;
    tc.seed = mix_seed(tc.seed, tag_seed(task + family));
    MLPModel net = make_mlp(d_x, train_ds.d_u(), context, dt, layout, tc.seed,
                            cfg.prior.hidden);
    const TrainReport tr = train(net, train_ds, tc);
    rep["train_loss"] = tr.train_loss;
    rep["val_loss"] = tr.val_loss;
    rep["epochs"] = tr.epoch_loss.size();
    MatrixXd residual = estimate_residual_cov(net, train_ds);
    prior = std::make_unique<NeuralNetPrior>(std::move(net), cfg.prior.alpha,
                                             std::move(residual), cfg.prior.n0,
                                             cfg.prior.m);
  } else {
    throw std::invalid_argument("fit_prior: unknown family " + family);
  }
  if (report) *report = rep;
  return prior;
}

json cmd_train_prior(const ExperimentsConfig& cfg, const std::string& task,
                     const std::string& family) {
  if (cfg.tasks.size() < 2) {
    throw std::invalid_argument("train-prior: needs at least two tasks");
  }
  const TransitionDataset train_ds = assemble_holdout(cfg, task);
  json report;
  auto prior = fit_prior(cfg, train_ds, family, task, &report);
  fs::create_directories(cfg.priors_dir);
  const std::string path =
      cfg.priors_dir + "/" + task + "_" + family + ".json";
  save_prior(path, *prior);
  report["path"] = path;
  save_json_file(path + ".report.json", report);
  return report;
}

CellResult run_cell(const ExperimentsConfig& cfg, const CellKey& key,
                    std::shared_ptr<const PriorModel> prior,
                    const RunningMoments& init_moments,
                    const std::string& cell_dir) {
  CellResult cell;
  cell.key = key;
  cell.trials = cfg.trials;

  json cell_cfg;
  cell_cfg["config"] = config_to_json(cfg);
  cell_cfg["cell"] = json{{"env", key.env},
                          {"family", key.family},
                          {"adapt", key.adapt},
                          {"offset_cm", key.offset_cm}};
  cell.hash = config_hash(cell_cfg);
  cell_cfg["hash"] = cell.hash;

  if (!cell_dir.empty()) {
    fs::create_directories(cell_dir);
    save_json_file(cell_dir + "/cell.json", cell_cfg);
  }

  // vector<bool> is not safe for concurrent element writes.
  std::vector<int> outcomes(cfg.trials, 0);
  cell.final_distances.assign(cfg.trials, 0.0);
  cell.seeds.assign(cfg.trials, 0);
  std::vector<double> times(cfg.trials,
                            std::numeric_limits<double>::quiet_NaN());

  std::vector<std::string> errors(cfg.trials);
  par::parallel_for(static_cast<std::size_t>(cfg.trials), [&](std::size_t i) {
    const std::uint64_t seed = cfg.base_seed + i;
    cell.seeds[i] = seed;
    try {
    auto env = make_env(key.env);
    const VectorXd x0 = env->reset(seed);

    TaskCost cost_shape = env->task_cost();
    if (key.offset_cm > 0.0) {
      // Offset direction depends on the trial, not on the magnitude,
      // so sweeps across magnitudes are paired.
      std::mt19937_64 dir_rng(mix_seed(seed, 0xD12EC7));
      std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
      const double a = angle(dir_rng);
      cost_shape.target +=
          0.01 * key.offset_cm * Vector2d(std::cos(a), std::sin(a));
    }
    TaskCostModel cost(*env, cost_shape);

    MpcConfig mpc = cfg.mpc;
    mpc.adapt = key.adapt;
    mpc.seed = seed;
    Controller ctrl(prior, init_moments, mpc);

    const EpisodeResult ep = run_episode(*env, ctrl, cost, x0, cfg.t_max);
    outcomes[i] = ep.success ? 1 : 0;
    cell.final_distances[i] = ep.final_distance;
    times[i] = ep.time_to_success;

    if (!cell_dir.empty()) {
      std::ofstream log(cell_dir + "/trial_" + std::to_string(i) + ".jsonl");
      for (const auto& tick : ep.ticks) log << tick_to_json(tick).dump() << "\n";
    }
    } catch (const std::exception& e) {
      // A crashed trial counts as a failure; the matrix continues.
      outcomes[i] = 0;
      cell.final_distances[i] = std::numeric_limits<double>::infinity();
      errors[i] = e.what();
    }
  });
  if (!cell_dir.empty()) {
    json err = json::array();
    bool any = false;
    for (const auto& e : errors) {
      err.push_back(e);
      any = any || !e.empty();
    }
    if (any) save_json_file(cell_dir + "/errors.json", err);
  }

  cell.outcomes.assign(outcomes.begin(), outcomes.end());
  int succ = 0;
  double dist_sum = 0.0;
  double time_sum = 0.0;
  int time_n = 0;
  for (int i = 0; i < cfg.trials; ++i) {
    succ += cell.outcomes[i] ? 1 : 0;
    dist_sum += std::isfinite(cell.final_distances[i])
                    ? cell.final_distances[i]
                    : 10.0;
    if (cell.outcomes[i] && std::isfinite(times[i])) {
      time_sum += times[i];
      ++time_n;
    }
  }
  cell.successes = succ;
  cell.wilson = wilson_interval(succ, cfg.trials);
  cell.mean_final_distance =
      cfg.trials > 0 ? dist_sum / cfg.trials
                     : std::numeric_limits<double>::quiet_NaN();
  cell.mean_time_to_success =
      time_n > 0 ? time_sum / time_n : std::numeric_limits<double>::quiet_NaN();
  return cell;
}

namespace {

// Loads the prior artifact and the matching hold-one-out moments for one
// environment, caching dataset loads across cells.
struct CellInputs {
  std::shared_ptr<const PriorModel> prior;
  RunningMoments moments;
};

CellInputs load_cell_inputs(const ExperimentsConfig& cfg,
                            const std::string& env_id,
                            const std::string& family,
                            std::map<std::string, RunningMoments>* moments_cache) {
  CellInputs in{nullptr, RunningMoments(VectorXd::Zero(1), MatrixXd::Zero(1, 1),
                                        0.0, 1.0)};
  const std::string path =
      cfg.priors_dir + "/" + env_id + "_" + family + ".json";
  if (!fs::exists(path)) {
    throw std::runtime_error("missing prior artifact: " + path +
                             " (run train-prior first)");
  }
  in.prior = load_prior(path);
  auto it = moments_cache->find(env_id);
  if (it == moments_cache->end()) {
    const TransitionDataset ds = assemble_holdout(cfg, env_id);
    it = moments_cache
             ->emplace(env_id, initialize_from_dataset(ds, cfg.mpc.adapt_cfg))
             .first;
  }
  in.moments = it->second;
  return in;
}

}  // namespace

std::vector<CellResult> cmd_run_matrix(const ExperimentsConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::vector<CellResult> cells;
  std::map<std::string, RunningMoments> moments_cache;

  for (const auto& env_id : cfg.tasks) {
    for (const auto& family : cfg.families) {
      const CellInputs in =
          cfg.trials > 0
              ? load_cell_inputs(cfg, env_id, family, &moments_cache)
              : CellInputs{nullptr,
                           RunningMoments(VectorXd::Zero(1),
                                          MatrixXd::Zero(1, 1), 0.0, 1.0)};
      for (bool adapt : {true, false}) {
        CellKey key{env_id, family, adapt, 0.0};
        if (cfg.trials == 0) {
          // Dry run: validate configuration, emit an empty cell.
          CellResult empty;
          empty.key = key;
          json cc;
          cc["config"] = config_to_json(cfg);
          empty.hash = config_hash(cc);
          cells.push_back(empty);
          continue;
        }
        cells.push_back(run_cell(cfg, key, in.prior, in.moments,
                                 cfg.out_dir + "/" + key.name()));
      }
    }
  }

  write_results_csv(cfg.out_dir + "/results.csv", cells);
  write_results_json(cfg.out_dir + "/results.json", config_to_json(cfg),
                     cells);
  return cells;
}

std::vector<CellResult> cmd_robustness(const ExperimentsConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  std::vector<CellResult> cells;
  std::map<std::string, RunningMoments> moments_cache;

  const CellInputs in = load_cell_inputs(cfg, cfg.robustness_env,
                                         cfg.robustness_family, &moments_cache);
  std::vector<double> offsets = {0.0};
  offsets.insert(offsets.end(), cfg.offsets_cm.begin(), cfg.offsets_cm.end());

  for (bool adapt : {true, false}) {
    for (double off : offsets) {
      CellKey key{cfg.robustness_env, cfg.robustness_family, adapt, off};
      cells.push_back(run_cell(cfg, key, in.prior, in.moments,
                               cfg.out_dir + "/" + key.name()));
    }
  }

  write_results_csv(cfg.out_dir + "/results.csv", cells);
  write_results_json(cfg.out_dir + "/results.json", config_to_json(cfg),
                     cells);
  return cells;
}

double cmd_replay(const std::string& cell_dir, int trial_index) {
  const json cell_cfg = load_json_file(cell_dir + "/cell.json");
  const ExperimentsConfig cfg = config_from_json(cell_cfg.at("config"));
  const auto& ck = cell_cfg.at("cell");
  CellKey key{ck.at("env").get<std::string>(),
              ck.at("family").get<std::string>(), ck.at("adapt").get<bool>(),
              ck.at("offset_cm").get<double>()};

  // Reconstruct the cell inputs exactly as run_cell does.
  std::map<std::string, RunningMoments> cache;
  const CellInputs in = load_cell_inputs(cfg, key.env, key.family, &cache);

  const std::uint64_t seed = cfg.base_seed + trial_index;
  auto env = make_env(key.env);
  const VectorXd x0 = env->reset(seed);
  TaskCost cost_shape = env->task_cost();
  if (key.offset_cm > 0.0) {
    std::mt19937_64 dir_rng(mix_seed(seed, 0xD12EC7));
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    const double a = angle(dir_rng);
    cost_shape.target +=
        0.01 * key.offset_cm * Vector2d(std::cos(a), std::sin(a));
  }
  TaskCostModel cost(*env, cost_shape);
  MpcConfig mpc = cfg.mpc;
  mpc.adapt = key.adapt;
  mpc.seed = seed;
  Controller ctrl(in.prior, in.moments, mpc);
  const EpisodeResult ep = run_episode(*env, ctrl, cost, x0, cfg.t_max);

  // Compare against the stored log, wall time excluded.
  std::ifstream log(cell_dir + "/trial_" + std::to_string(trial_index) +
                    ".jsonl");
  if (!log) {
    throw std::runtime_error("cmd_replay: missing trial log in " + cell_dir);
  }
  double max_diff = 0.0;
  std::string line;
  std::size_t t = 0;
  auto diff_num = [](double a, double b) {
    if (std::isnan(a) && std::isnan(b)) return 0.0;
    return std::abs(a - b);
  };
  while (std::getline(log, line)) {
    if (line.empty()) continue;
    if (t >= ep.ticks.size()) {
      throw std::runtime_error("cmd_replay: replay shorter than log");
    }
    const TickLog stored = tick_from_json(json::parse(line));
    const TickLog& fresh = ep.ticks[t];
    max_diff = std::max(max_diff,
                        (stored.x - fresh.x).cwiseAbs().maxCoeff());
    max_diff = std::max(max_diff,
                        (stored.u - fresh.u).cwiseAbs().maxCoeff());
    max_diff = std::max(max_diff, diff_num(stored.diag.rho, fresh.diag.rho));
    max_diff = std::max(max_diff, diff_num(stored.diag.beta, fresh.diag.beta));
    max_diff =
        std::max(max_diff, diff_num(stored.diag.n_eff, fresh.diag.n_eff));
    max_diff = std::max(
        max_diff, diff_num(stored.diag.planned_cost, fresh.diag.planned_cost));
    ++t;
  }
  if (t != ep.ticks.size()) {
    throw std::runtime_error("cmd_replay: log shorter than replay");
  }
  return max_diff;
}

void write_results_csv(const std::string& path,
                       const std::vector<CellResult>& cells) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "env,prior,adapt,offset_cm,trials,successes,rate,wilson_lo,wilson_hi,"
         "mean_time_to_success,mean_final_distance,config_hash\n";
  for (const auto& c : cells) {
    const double rate = c.trials > 0 ? static_cast<double>(c.successes) / c.trials : 0.0;
    out << c.key.env << "," << c.key.family << ","
        << (c.key.adapt ? "true" : "false") << "," << c.key.offset_cm << ","
        << c.trials << "," << c.successes << "," << rate << "," << c.wilson.lo
        << "," << c.wilson.hi << "," << c.mean_time_to_success << ","
        << c.mean_final_distance << "," << c.hash << "\n";
  }
}

void write_results_json(const std::string& path, const json& resolved_config,
                        const std::vector<CellResult>& cells) {
  json j;
  j["config"] = resolved_config;
  j["cells"] = json::array();
  for (const auto& c : cells) {
    json outcomes = json::array();
    for (bool b : c.outcomes) outcomes.push_back(b);
    json dists = json::array();
    for (double d : c.final_distances) dists.push_back(d);
    json seeds = json::array();
    for (auto s : c.seeds) seeds.push_back(s);
    j["cells"].push_back(json{{"env", c.key.env},
                              {"prior", c.key.family},
                              {"adapt", c.key.adapt},
                              {"offset_cm", c.key.offset_cm},
                              {"trials", c.trials},
                              {"successes", c.successes},
                              {"wilson_lo", c.wilson.lo},
                              {"wilson_hi", c.wilson.hi},
                              {"mean_time_to_success", c.mean_time_to_success},
                              {"mean_final_distance", c.mean_final_distance},
                              {"outcomes", outcomes},
                              {"final_distances", dists},
                              {"seeds", seeds},
                              {"config_hash", c.hash}});
  }
  save_json_file(path, j);
}

}  // namespace odmpc
