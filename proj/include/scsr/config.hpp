#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "scsr/losses.hpp"
#include "scsr/scnet.hpp"
#include "scsr/strategy.hpp"

namespace scsr {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetSpec {
  std::string kind = "toy";  // toy | idx | scsx
  std::string dist = "G";
  int64_t n_signals = 1000;
  int64_t n_train = 900;
  int64_t n_test = 100;
  int64_t dim = 32;
  std::string images;  // idx pixel file
  std::string labels;  // idx label file (optional)
  int64_t limit = 0;   // idx: cap on images consumed, 0 = all
  std::string train_path;  // scsx
  std::string test_path;   // scsx
};

struct MatrixSpec {
  std::string kind = "gaussian";  // gaussian | bernoulli
  int64_t M = 16;
  int64_t N = 32;
  uint64_t seed = 1;
};

struct EvalSpec {
  std::vector<double> ratios;
  std::string ratio_mode = "prefix";  // prefix | fresh
};

struct RunConfig {
  std::string name = "run";
  DatasetSpec dataset;
  MatrixSpec matrix;
  SCNetConfig net;
  LossConfig loss;
  Scheme scheme = Scheme::dmc_doc;
  std::vector<StagePlan> stages;
  EvalSpec eval;
  std::string out_dir = "out";
  uint64_t seed = 0;
  void validate() const;
};

// JSON text <-> RunConfig. Parsing is strict: unknown keys, unknown scheme or
// kind names, and malformed values are rejected with a ConfigError. The pair
// is a round-trip identity.
RunConfig parse_config(const std::string& json_text);
std::string serialize_config(const RunConfig& cfg);

RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

}  // namespace scsr
