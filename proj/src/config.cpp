#include "scsr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scsr/datagen.hpp"

namespace scsr {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

DatasetSpec parse_dataset(const json& j) {
  check_keys(j, "dataset",
             {"kind", "dist", "n_signals", "n_train", "n_test", "dim", "images", "labels",
              "limit", "train_path", "test_path"});
  DatasetSpec d;
  d.kind = get_or<std::string>(j, "kind", d.kind);
  if (d.kind != "toy" && d.kind != "idx" && d.kind != "scsx")
    throw ConfigError("config: unknown dataset kind '" + d.kind + "'");
  d.dist = get_or<std::string>(j, "dist", d.dist);
  d.n_signals = get_or<int64_t>(j, "n_signals", d.n_signals);
  d.n_train = get_or<int64_t>(j, "n_train", d.n_train);
  d.n_test = get_or<int64_t>(j, "n_test", d.n_test);
  d.dim = get_or<int64_t>(j, "dim", d.dim);
  d.images = get_or<std::string>(j, "images", d.images);
  d.labels = get_or<std::string>(j, "labels", d.labels);
  d.limit = get_or<int64_t>(j, "limit", d.limit);
  d.train_path = get_or<std::string>(j, "train_path", d.train_path);
  d.test_path = get_or<std::string>(j, "test_path", d.test_path);
  return d;
}

MatrixSpec parse_matrix(const json& j) {
  check_keys(j, "matrix", {"kind", "M", "N", "seed"});
  MatrixSpec m;
  m.kind = get_or<std::string>(j, "kind", m.kind);
  if (m.kind != "gaussian" && m.kind != "bernoulli")
    throw ConfigError("config: unknown matrix kind '" + m.kind + "'");
  m.M = get_or<int64_t>(j, "M", m.M);
  m.N = get_or<int64_t>(j, "N", m.N);
  m.seed = get_or<uint64_t>(j, "seed", m.seed);
  return m;
}

SCNetConfig parse_net(const json& j) {
  check_keys(j, "net", {"K", "C", "rho_mode", "use_final_gd", "embed_h", "embed_w", "conv_dim"});
  SCNetConfig n;
  n.K = get_or<int64_t>(j, "K", n.K);
  n.C = get_or<int64_t>(j, "C", n.C);
  std::string rho = get_or<std::string>(j, "rho_mode", "sigmoid");
  if (rho == "fixed")
    n.rho_mode = RhoMode::fixed_one;
  else if (rho == "sigmoid")
    n.rho_mode = RhoMode::sigmoid_tau;
  else
    throw ConfigError("config: unknown rho_mode '" + rho + "'");
  n.use_final_gd = get_or<bool>(j, "use_final_gd", n.use_final_gd);
  n.embed_h = get_or<int64_t>(j, "embed_h", n.embed_h);
  n.embed_w = get_or<int64_t>(j, "embed_w", n.embed_w);
  n.conv_dim = get_or<int64_t>(j, "conv_dim", n.conv_dim);
  return n;
}

LossConfig parse_loss(const json& j) {
  check_keys(j, "loss", {"p", "alpha", "sigma", "symmetric"});
  LossConfig l;
  l.p = get_or<double>(j, "p", l.p);
  l.alpha = get_or<double>(j, "alpha", l.alpha);
  l.sigma = get_or<double>(j, "sigma", l.sigma);
  l.symmetric = get_or<bool>(j, "symmetric", l.symmetric);
  return l;
}

StagePlan parse_stage(const json& j, size_t index) {
  std::string where = "stages[" + std::to_string(index) + "]";
  check_keys(j, where,
             {"stage", "iters", "finetune_iters", "lr", "lr_finetune", "batch", "ensemble_D",
              "ensemble_r", "log_every", "ckpt_every"});
  if (!j.contains("stage")) throw ConfigError("config: " + where + " is missing 'stage'");
  int stage = get_or<int>(j, "stage", 0);
  if (stage < 1 || stage > 4) throw ConfigError("config: " + where + " has stage outside 1..4");
  StagePlan p = default_plan(stage);
  p.iters = get_or<int64_t>(j, "iters", p.iters);
  p.finetune_iters = get_or<int64_t>(j, "finetune_iters", p.finetune_iters);
  p.lr = get_or<double>(j, "lr", p.lr);
  p.lr_finetune = get_or<double>(j, "lr_finetune", p.lr_finetune);
  p.batch = get_or<int64_t>(j, "batch", p.batch);
  p.ensemble_D = get_or<int64_t>(j, "ensemble_D", p.ensemble_D);
  p.ensemble_r = get_or<double>(j, "ensemble_r", p.ensemble_r);
  p.log_every = get_or<int64_t>(j, "log_every", p.log_every);
  p.ckpt_every = get_or<int64_t>(j, "ckpt_every", p.ckpt_every);
  return p;
}

EvalSpec parse_eval(const json& j) {
  check_keys(j, "eval", {"ratios", "ratio_mode"});
  EvalSpec e;
  if (j.contains("ratios")) {
    if (!j.at("ratios").is_array()) throw ConfigError("config: 'ratios' must be an array");
    for (const auto& v : j.at("ratios")) {
      if (!v.is_number()) throw ConfigError("config: ratios must be numbers");
      e.ratios.push_back(v.get<double>());
    }
  }
  e.ratio_mode = get_or<std::string>(j, "ratio_mode", e.ratio_mode);
  if (e.ratio_mode != "prefix" && e.ratio_mode != "fresh")
    throw ConfigError("config: unknown ratio_mode '" + e.ratio_mode + "'");
  return e;
}

}  // namespace

void RunConfig::validate() const {
  try {
    net.validate();
    loss.validate();
    int prev = 0;
    for (const StagePlan& p : stages) {
      p.validate();
      if (p.stage <= prev) throw std::invalid_argument("stages must be strictly ascending");
      prev = p.stage;
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (matrix.M < 1 || matrix.N < 1 || matrix.M > matrix.N)
    throw ConfigError("config: matrix needs 1 <= M <= N");
  for (double r : eval.ratios)
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("config: ratios must lie in (0, 1]");
  if (dataset.kind == "toy") {
    try {
      parse_toy_dist(dataset.dist);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (dataset.n_train + dataset.n_test != dataset.n_signals)
      throw ConfigError("config: toy train/test split must partition n_signals");
  }
}

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_keys(j, "config",
             {"name", "dataset", "matrix", "net", "loss", "scheme", "stages", "eval", "out_dir",
              "seed"});
  RunConfig c;
  c.name = get_or<std::string>(j, "name", c.name);
  if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset"));
  if (j.contains("matrix")) c.matrix = parse_matrix(j.at("matrix"));
  if (j.contains("net")) c.net = parse_net(j.at("net"));
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss"));
  if (j.contains("scheme")) {
    std::string name = get_or<std::string>(j, "scheme", "");
    auto parsed = parse_scheme(name);
    if (!parsed) throw ConfigError("config: unknown scheme '" + name + "'");
    c.scheme = *parsed;
  }
  if (j.contains("stages")) {
    if (!j.at("stages").is_array()) throw ConfigError("config: 'stages' must be an array");
    size_t i = 0;
    for (const auto& s : j.at("stages")) c.stages.push_back(parse_stage(s, i++));
  }
  if (j.contains("eval")) c.eval = parse_eval(j.at("eval"));
  c.out_dir = get_or<std::string>(j, "out_dir", c.out_dir);
  c.seed = get_or<uint64_t>(j, "seed", c.seed);
  c.validate();
  return c;
}

std::string serialize_config(const RunConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["dataset"] = {{"kind", cfg.dataset.kind},       {"dist", cfg.dataset.dist},
                  {"n_signals", cfg.dataset.n_signals}, {"n_train", cfg.dataset.n_train},
                  {"n_test", cfg.dataset.n_test},   {"dim", cfg.dataset.dim},
                  {"images", cfg.dataset.images},   {"labels", cfg.dataset.labels},
                  {"limit", cfg.dataset.limit},     {"train_path", cfg.dataset.train_path},
                  {"test_path", cfg.dataset.test_path}};
  j["matrix"] = {{"kind", cfg.matrix.kind},
                 {"M", cfg.matrix.M},
                 {"N", cfg.matrix.N},
                 {"seed", cfg.matrix.seed}};
  j["net"] = {{"K", cfg.net.K},
              {"C", cfg.net.C},
              {"rho_mode", cfg.net.rho_mode == RhoMode::fixed_one ? "fixed" : "sigmoid"},
              {"use_final_gd", cfg.net.use_final_gd},
              {"embed_h", cfg.net.embed_h},
              {"embed_w", cfg.net.embed_w},
              {"conv_dim", cfg.net.conv_dim}};
  j["loss"] = {{"p", cfg.loss.p},
               {"alpha", cfg.loss.alpha},
               {"sigma", cfg.loss.sigma},
               {"symmetric", cfg.loss.symmetric}};
  j["scheme"] = scheme_name(cfg.scheme);
  j["stages"] = json::array();
  for (const StagePlan& p : cfg.stages)
    j["stages"].push_back({{"stage", p.stage},
                           {"iters", p.iters},
                           {"finetune_iters", p.finetune_iters},
                           {"lr", p.lr},
                           {"lr_finetune", p.lr_finetune},
                           {"batch", p.batch},
                           {"ensemble_D", p.ensemble_D},
                           {"ensemble_r", p.ensemble_r},
                           {"log_every", p.log_every},
                           {"ckpt_every", p.ckpt_every}});
  json ratios = json::array();
  for (double r : cfg.eval.ratios) ratios.push_back(r);
  j["eval"] = {{"ratios", ratios}, {"ratio_mode", cfg.eval.ratio_mode}};
  j["out_dir"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("config: cannot write " + path);
  out << serialize_config(cfg);
  if (!out) throw ConfigError("config: write failed for " + path);
}

}  // namespace scsr
