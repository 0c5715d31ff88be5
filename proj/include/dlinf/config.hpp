#pragma once

// Experiment configuration as one JSON document. Unknown keys are rejected
// at every level; a top-level "seed" is mandatory. Precedence when used from
// the CLI: flags > config file > built-in defaults.

#include "dlinf/common.hpp"
#include "dlinf/dictionary.hpp"
#include "dlinf/encoder.hpp"
#include "dlinf/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>

namespace dlinf {

using json = nlohmann::json;

struct SyntheticDataConfig {
  Eigen::Index dim = 32;
  std::size_t classes = 2;
  double separation = 10.0;
  double sigma = 1.0;
  std::size_t train = 400;
  std::size_t query = 100;
  std::size_t database = 400;
};

struct DataConfig {
  std::optional<SyntheticDataConfig> synthetic;
  std::string train, train_labels, train_pairs;
  std::string query, query_labels;
  std::string database, database_labels;
  bool mean_removal = false;
};

struct SolverConfig {
  double lambda = 0.0;  // 0: use the encoder's lambda0
  double beta = 0.6;
  double tol = 1e-8;
  std::size_t max_iter = 10000;
};

struct DictionaryConfig {
  std::string method = "ksvd";  // ksvd | random
  Eigen::Index atoms = 16;
  Eigen::Index sparsity = 0;  // 0: max(1, atoms / 8)
  std::size_t iterations = 30;
};

struct EncoderConfig {
  std::string architecture = "deep_linf";  // deep_linf | snnh | nnh
  std::size_t stages = 2;
  double lambda0 = 0.0;  // 0: 0.8 x median ||x_LS||_inf over training data
};

struct TrainSection {
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  double momentum = 0.0;
  double margin = 5.0;
  std::size_t epochs = 50;
  std::string init = "admm";  // admm | random
};

struct EvalConfig {
  std::size_t radius = 2;
  std::size_t k = 100;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  DataConfig data;
  SolverConfig solver;
  DictionaryConfig dictionary;
  EncoderConfig encoder;
  TrainSection train;
  EvalConfig eval;

  TrainConfig train_config() const {
    TrainConfig t;
    t.learning_rate = train.learning_rate;
    t.batch_size = train.batch_size;
    t.momentum = train.momentum;
    t.margin = train.margin;
    t.epochs = train.epochs;
    t.seed = seed;
    t.threads = threads;
    return t;
  }

  KsvdConfig ksvd_config() const {
    KsvdConfig k;
    k.atoms = dictionary.atoms;
    k.sparsity = dictionary.sparsity;
    k.iterations = dictionary.iterations;
    k.seed = seed;
    k.threads = threads;
    return k;
  }
};

namespace config_detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline void read_count(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(where + "." + key + ": expected a non-negative integer");
  out = v.get<std::size_t>();
}

inline void read_index(const json& j, const char* key, Eigen::Index& out, const std::string& where) {
  std::size_t tmp = static_cast<std::size_t>(std::max<Eigen::Index>(out, 0));
  read_count(j, key, tmp, where);
  out = static_cast<Eigen::Index>(tmp);
}

}  // namespace config_detail

/// Parses and validates a config document.
inline ExperimentConfig parse_config(const json& j) {
  using namespace config_detail;
  check_keys(j, "config", {"seed", "threads", "data", "solver", "dictionary", "encoder", "train", "eval"});
  ExperimentConfig c;
  if (!j.contains("seed") || !j.at("seed").is_number_integer()) throw ConfigError("config: integer 'seed' is required");
  c.seed = j.at("seed").get<std::uint64_t>();
  std::size_t threads = 0;
  read_count(j, "threads", threads, "config");
  c.threads = static_cast<unsigned>(threads);

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, "data", {"synthetic", "train", "train_labels", "train_pairs", "query", "query_labels", "database",
                           "database_labels", "mean_removal"});
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      check_keys(s, "data.synthetic", {"dim", "classes", "separation", "sigma", "train", "query", "database"});
      SyntheticDataConfig sc;
      read_index(s, "dim", sc.dim, "data.synthetic");
      read_count(s, "classes", sc.classes, "data.synthetic");
      read(s, "separation", sc.separation, "data.synthetic");
      read(s, "sigma", sc.sigma, "data.synthetic");
      read_count(s, "train", sc.train, "data.synthetic");
      read_count(s, "query", sc.query, "data.synthetic");
      read_count(s, "database", sc.database, "data.synthetic");
      c.data.synthetic = sc;
    }
    read(d, "train", c.data.train, "data");
    read(d, "train_labels", c.data.train_labels, "data");
    read(d, "train_pairs", c.data.train_pairs, "data");
    read(d, "query", c.data.query, "data");
    read(d, "query_labels", c.data.query_labels, "data");
    read(d, "database", c.data.database, "data");
    read(d, "database_labels", c.data.database_labels, "data");
    read(d, "mean_removal", c.data.mean_removal, "data");
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    check_keys(s, "solver", {"lambda", "beta", "tol", "max_iter"});
    read(s, "lambda", c.solver.lambda, "solver");
    read(s, "beta", c.solver.beta, "solver");
    read(s, "tol", c.solver.tol, "solver");
    read_count(s, "max_iter", c.solver.max_iter, "solver");
  }
  if (j.contains("dictionary")) {
    const json& s = j.at("dictionary");
    check_keys(s, "dictionary", {"method", "atoms", "sparsity", "iterations"});
    read(s, "method", c.dictionary.method, "dictionary");
    read_index(s, "atoms", c.dictionary.atoms, "dictionary");
    read_index(s, "sparsity", c.dictionary.sparsity, "dictionary");
    read_count(s, "iterations", c.dictionary.iterations, "dictionary");
  }
  if (j.contains("encoder")) {
    const json& s = j.at("encoder");
    check_keys(s, "encoder", {"architecture", "stages", "lambda0"});
    read(s, "architecture", c.encoder.architecture, "encoder");
    read_count(s, "stages", c.encoder.stages, "encoder");
    read(s, "lambda0", c.encoder.lambda0, "encoder");
  }
  if (j.contains("train")) {
    const json& s = j.at("train");
    check_keys(s, "train", {"learning_rate", "batch_size", "momentum", "margin", "epochs", "init"});
    read(s, "learning_rate", c.train.learning_rate, "train");
    read_count(s, "batch_size", c.train.batch_size, "train");
    read(s, "momentum", c.train.momentum, "train");
    read(s, "margin", c.train.margin, "train");
    read_count(s, "epochs", c.train.epochs, "train");
    read(s, "init", c.train.init, "train");
  }
  if (j.contains("eval")) {
    const json& s = j.at("eval");
    check_keys(s, "eval", {"radius", "k"});
    read_count(s, "radius", c.eval.radius, "eval");
    read_count(s, "k", c.eval.k, "eval");
  }

  // Semantic checks.
  if (c.solver.lambda < 0.0) throw ConfigError("solver.lambda must be >= 0 (0 = automatic)");
  if (!(c.solver.beta > 0.0)) throw ConfigError("solver.beta must be positive");
  if (!(c.solver.tol > 0.0)) throw ConfigError("solver.tol must be positive");
  if (c.solver.max_iter < 1) throw ConfigError("solver.max_iter must be >= 1");
  if (c.dictionary.method != "ksvd" && c.dictionary.method != "random")
    throw ConfigError("dictionary.method must be 'ksvd' or 'random'");
  if (c.dictionary.atoms < 1) throw ConfigError("dictionary.atoms must be >= 1");
  if (c.dictionary.iterations < 1) throw ConfigError("dictionary.iterations must be >= 1");
  parse_architecture(c.encoder.architecture);
  if (c.encoder.stages < 1) throw ConfigError("encoder.stages must be >= 1");
  if (c.encoder.lambda0 < 0.0) throw ConfigError("encoder.lambda0 must be >= 0 (0 = automatic)");
  if (c.train.init != "admm" && c.train.init != "random") throw ConfigError("train.init must be 'admm' or 'random'");
  c.train_config().validate();
  if (c.eval.k < 1) throw ConfigError("eval.k must be >= 1");
  if (c.data.synthetic) {
    const auto& s = *c.data.synthetic;
    if (s.dim < 1 || s.classes < 1 || s.train == 0 || s.query == 0 || s.database == 0)
      throw ConfigError("data.synthetic: dim, classes and split sizes must be positive");
    if (c.dictionary.atoms > s.dim) throw ConfigError("dictionary.atoms must not exceed the feature dimension");
  } else if (j.contains("data")) {
    if (c.data.train.empty() || c.data.query.empty() || c.data.database.empty())
      throw ConfigError("data: need either 'synthetic' or train/query/database files");
  }
  return c;
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  json d;
  if (c.data.synthetic) {
    const auto& s = *c.data.synthetic;
    d["synthetic"] = {{"dim", s.dim},     {"classes", s.classes}, {"separation", s.separation}, {"sigma", s.sigma},
                      {"train", s.train}, {"query", s.query},     {"database", s.database}};
  }
  for (const auto& [key, val] : {std::pair<const char*, const std::string*>{"train", &c.data.train},
                                 {"train_labels", &c.data.train_labels},
                                 {"train_pairs", &c.data.train_pairs},
                                 {"query", &c.data.query},
                                 {"query_labels", &c.data.query_labels},
                                 {"database", &c.data.database},
                                 {"database_labels", &c.data.database_labels}})
    if (!val->empty()) d[key] = *val;
  d["mean_removal"] = c.data.mean_removal;
  j["data"] = d;
  j["solver"] = {{"lambda", c.solver.lambda}, {"beta", c.solver.beta}, {"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}};
  j["dictionary"] = {{"method", c.dictionary.method},
                     {"atoms", c.dictionary.atoms},
                     {"sparsity", c.dictionary.sparsity},
                     {"iterations", c.dictionary.iterations}};
  j["encoder"] = {{"architecture", c.encoder.architecture}, {"stages", c.encoder.stages}, {"lambda0", c.encoder.lambda0}};
  j["train"] = {{"learning_rate", c.train.learning_rate}, {"batch_size", c.train.batch_size},
                {"momentum", c.train.momentum},           {"margin", c.train.margin},
                {"epochs", c.train.epochs},               {"init", c.train.init}};
  j["eval"] = {{"radius", c.eval.radius}, {"k", c.eval.k}};
  return j;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

/// FNV-1a over the canonical (sorted-key) dump.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace dlinf
