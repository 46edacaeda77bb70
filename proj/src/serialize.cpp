#include "odmpc/serialize.hpp"

#include <fstream>
#include <stdexcept>

namespace odmpc {

namespace {

double num_or_nan(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j[key].get<double>();
}

}  // namespace

json vec_to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vec_from_json(const json& j) {
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

json mat_to_json(const MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

MatrixXd mat_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::invalid_argument("mat_from_json: size mismatch");
  }
  MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  }
  return m;
}

json moments_to_json(const RunningMoments& m) {
  json delta = json::array();
  const MatrixXd& d = m.second_moment();
  for (Eigen::Index r = 0; r < d.rows(); ++r) {
    for (Eigen::Index c = 0; c < d.cols(); ++c) delta.push_back(d(r, c));
  }
  return json{{"mean", vec_to_json(m.mean())},
              {"delta", delta},
              {"beta", m.beta()},
              {"n_eff", m.n_eff()}};
}

RunningMoments moments_from_json(const json& j) {
  const VectorXd mean = vec_from_json(j.at("mean"));
  const auto d = mean.size();
  const auto& flat = j.at("delta");
  if (static_cast<Eigen::Index>(flat.size()) != d * d) {
    throw std::invalid_argument("moments_from_json: delta size mismatch");
  }
  MatrixXd delta(d, d);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) delta(r, c) = flat[i++].get<double>();
  }
  return RunningMoments(mean, delta, j.at("beta").get<double>(),
                        j.at("n_eff").get<double>());
}

json mlp_to_json(const MLPModel& net) {
  json layers = json::array();
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    layers.push_back(json{{"w", mat_to_json(net.W[l])},
                          {"b", vec_to_json(net.b[l])}});
  }
  return json{{"context", net.context},
              {"dt", net.dt},
              {"d_x", net.d_x},
              {"d_u", net.d_u},
              {"pos_idx", net.layout.pos_idx},
              {"vel_idx", net.layout.vel_idx},
              {"layers", layers},
              {"in_mean", vec_to_json(net.in_mean)},
              {"in_std", vec_to_json(net.in_std)},
              {"accel_mean", vec_to_json(net.accel_mean)},
              {"accel_std", vec_to_json(net.accel_std)}};
}

MLPModel mlp_from_json(const json& j) {
  MLPModel net;
  net.context = j.at("context").get<bool>();
  net.dt = j.at("dt").get<double>();
  net.d_x = j.at("d_x").get<int>();
  net.d_u = j.at("d_u").get<int>();
  net.layout.pos_idx = j.at("pos_idx").get<std::vector<int>>();
  net.layout.vel_idx = j.at("vel_idx").get<std::vector<int>>();
  for (const auto& layer : j.at("layers")) {
    net.W.push_back(mat_from_json(layer.at("w")));
    net.b.push_back(vec_from_json(layer.at("b")));
  }
  net.in_mean = vec_from_json(j.at("in_mean"));
  net.in_std = vec_from_json(j.at("in_std"));
  net.accel_mean = vec_from_json(j.at("accel_mean"));
  net.accel_std = vec_from_json(j.at("accel_std"));
  return net;
}

json prior_to_json(const PriorModel& prior) {
  json j{{"format_version", 1}, {"type", prior.family()}};
  if (const auto* g = dynamic_cast<const GaussianPrior*>(&prior)) {
    j["mean"] = vec_to_json(g->base().mean);
    j["cov"] = mat_to_json(g->base().cov);
    j["n0"] = g->n0();
    j["m"] = g->m();
    j["regularized"] = g->regularized();
  } else if (const auto* mix = dynamic_cast<const GmmPrior*>(&prior)) {
    json comps = json::array();
    for (const auto& c : mix->components()) {
      comps.push_back(json{{"weight", c.weight},
                           {"mean", vec_to_json(c.mean)},
                           {"cov", mat_to_json(c.cov)}});
    }
    j["components"] = comps;
    j["n0"] = mix->n0();
    j["m"] = mix->m();
    j["soft"] = mix->soft();
  } else if (const auto* nn = dynamic_cast<const NeuralNetPrior*>(&prior)) {
    j["net"] = mlp_to_json(nn->net());
    j["alpha"] = nn->alpha();
    j["residual_cov"] = mat_to_json(nn->residual_cov());
    j["n0"] = nn->n0();
    j["m"] = nn->m();
  } else {
    throw std::invalid_argument("prior_to_json: unknown prior type");
  }
  return j;
}

std::unique_ptr<PriorModel> prior_from_json(const json& j) {
  const auto version = j.at("format_version").get<int>();
  if (version != 1) {
    throw std::invalid_argument("prior_from_json: unsupported version");
  }
  const auto type = j.at("type").get<std::string>();
  if (type == "gaussian") {
    return std::make_unique<GaussianPrior>(
        JointGaussian{vec_from_json(j.at("mean")), mat_from_json(j.at("cov"))},
        j.at("n0").get<double>(), j.at("m").get<double>(),
        j.value("regularized", false));
  }
  if (type == "gmm") {
    std::vector<GmmComponent> comps;
    for (const auto& c : j.at("components")) {
      comps.push_back(GmmComponent{c.at("weight").get<double>(),
                                   vec_from_json(c.at("mean")),
                                   mat_from_json(c.at("cov"))});
    }
    return std::make_unique<GmmPrior>(std::move(comps),
                                      j.at("n0").get<double>(),
                                      j.at("m").get<double>(),
                                      j.value("soft", false));
  }
  if (type == "nn1" || type == "nn2") {
    return std::make_unique<NeuralNetPrior>(
        mlp_from_json(j.at("net")), j.at("alpha").get<double>(),
        mat_from_json(j.at("residual_cov")), j.at("n0").get<double>(),
        j.at("m").get<double>());
  }
  throw std::invalid_argument("prior_from_json: unknown type " + type);
}

void save_prior(const std::string& path, const PriorModel& prior) {
  save_json_file(path, prior_to_json(prior));
}

std::unique_ptr<PriorModel> load_prior(const std::string& path) {
  return prior_from_json(load_json_file(path));
}

json policy_to_json(const TimeVaryingLinearPolicy& p) {
  json j;
  auto vecs = [](const std::vector<VectorXd>& vs) {
    json a = json::array();
    for (const auto& v : vs) a.push_back(vec_to_json(v));
    return a;
  };
  auto mats = [](const std::vector<MatrixXd>& ms) {
    json a = json::array();
    for (const auto& m : ms) a.push_back(mat_to_json(m));
    return a;
  };
  j["x_hat"] = vecs(p.x_hat);
  j["u_hat"] = vecs(p.u_hat);
  j["k"] = vecs(p.k);
  j["K"] = mats(p.K);
  j["Quu"] = mats(p.Quu);
  return j;
}

TimeVaryingLinearPolicy policy_from_json(const json& j) {
  TimeVaryingLinearPolicy p;
  for (const auto& v : j.at("x_hat")) p.x_hat.push_back(vec_from_json(v));
  for (const auto& v : j.at("u_hat")) p.u_hat.push_back(vec_from_json(v));
  for (const auto& v : j.at("k")) p.k.push_back(vec_from_json(v));
  for (const auto& m : j.at("K")) p.K.push_back(mat_from_json(m));
  for (const auto& m : j.at("Quu")) p.Quu.push_back(mat_from_json(m));
  return p;
}

void save_dataset(const std::string& path, const TransitionDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  for (const auto& r : ds.records) {
    json j{{"x_prev", vec_to_json(r.x_prev)}, {"u_prev", vec_to_json(r.u_prev)},
           {"x", vec_to_json(r.x)},           {"u", vec_to_json(r.u)},
           {"x_next", vec_to_json(r.x_next)}, {"tag", r.tag}};
    out << j.dump() << "\n";
  }
  json meta;
  meta["sources"] = json::array();
  for (const auto& s : ds.sources) {
    meta["sources"].push_back(json{{"env_id", s.env_id},
                                   {"dt", s.dt},
                                   {"policy", s.policy},
                                   {"seed", s.seed},
                                   {"records", s.records}});
  }
  save_json_file(path + ".meta.json", meta);
}

TransitionDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  TransitionDataset ds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    TransitionRecord r;
    r.x_prev = vec_from_json(j.at("x_prev"));
    r.u_prev = vec_from_json(j.at("u_prev"));
    r.x = vec_from_json(j.at("x"));
    r.u = vec_from_json(j.at("u"));
    r.x_next = vec_from_json(j.at("x_next"));
    r.tag = j.at("tag").get<std::string>();
    ds.records.push_back(std::move(r));
  }
  std::ifstream meta_in(path + ".meta.json");
  if (meta_in) {
    json meta;
    meta_in >> meta;
    for (const auto& s : meta.value("sources", json::array())) {
      DatasetMeta m;
      m.env_id = s.value("env_id", "");
      m.dt = s.value("dt", 0.0);
      m.policy = s.value("policy", "");
      m.seed = s.value("seed", std::uint64_t{0});
      m.records = s.value("records", std::size_t{0});
      ds.sources.push_back(std::move(m));
    }
  }
  return ds;
}

json tick_to_json(const TickLog& t) {
  return json{{"t", t.t},
              {"x", vec_to_json(t.x)},
              {"u", vec_to_json(t.u)},
              {"rho", t.diag.rho},
              {"beta", t.diag.beta},
              {"n_eff", t.diag.n_eff},
              {"planned_cost", t.diag.planned_cost},
              {"wall_ms", t.diag.wall_ms},
              {"degraded", t.diag.degraded}};
}

TickLog tick_from_json(const json& j) {
  TickLog t;
  t.t = j.at("t").get<int>();
  t.x = vec_from_json(j.at("x"));
  t.u = vec_from_json(j.at("u"));
  t.diag.rho = num_or_nan(j, "rho");
  t.diag.beta = num_or_nan(j, "beta");
  t.diag.n_eff = num_or_nan(j, "n_eff");
  t.diag.planned_cost = num_or_nan(j, "planned_cost");
  t.diag.wall_ms = num_or_nan(j, "wall_ms");
  t.diag.degraded = j.value("degraded", false);
  return t;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

void save_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace odmpc
