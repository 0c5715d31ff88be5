#pragma once

// Command implementations behind the CLI. Each writes its artifacts under an
// output directory and returns a JSON summary.

#include "dlinf/config.hpp"
#include "dlinf/dictionary.hpp"
#include "dlinf/encoder.hpp"
#include "dlinf/hashing.hpp"
#include "dlinf/io.hpp"
#include "dlinf/solver.hpp"
#include "dlinf/synth.hpp"
#include "dlinf/training.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>

namespace dlinf::commands {

namespace fs = std::filesystem;

inline void write_json(const fs::path& path, const json& j) { io::atomic_write(path, j.dump(2) + "\n"); }

/// One process per artifacts directory.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / "LOCK") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (!f) throw IoError("artifacts directory is locked (or not writable): " + path_.string());
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

inline json report_json(const RetrievalReport& r) {
  return {{"code_length", r.code_length}, {"radius", r.radius}, {"precision", r.precision},
          {"recall", r.recall},           {"f1", r.f1},         {"map", r.map},
          {"map_at_10", r.map_at_10},     {"mp_at_k", r.mp_at_k}, {"k", r.k}};
}

inline std::string report_csv(const std::vector<std::pair<std::string, RetrievalReport>>& rows) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "row,code_length,radius,precision,recall,f1,map,map_at_10,k,mp_at_k\n";
  for (const auto& [name, r] : rows)
    out << name << ',' << r.code_length << ',' << r.radius << ',' << r.precision << ',' << r.recall << ',' << r.f1
        << ',' << r.map << ',' << r.map_at_10 << ',' << r.k << ',' << r.mp_at_k << '\n';
  return out.str();
}

inline std::string loss_csv(const std::vector<double>& losses) {
  std::ostringstream out;
  out << std::setprecision(17) << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out << (e + 1) << ',' << losses[e] << '\n';
  return out.str();
}

// ---------------------------------------------------------------- solve

struct SolveOptions {
  double lambda = 1.0;
  double beta = 0.6;
  double tol = 1e-8;
  std::size_t max_iter = 10000;
  double saturation = 0.95;  // |x_i| >= saturation * lambda counts as saturated
  unsigned threads = 0;
};

struct SolveOutput {
  Mat codes;  // N x count
  json summary;
};

inline SolveOutput solve_batch(const Mat& dictionary, const Mat& signals, const SolveOptions& opt) {
  if (signals.rows() != dictionary.rows()) throw ConfigError("solve: dataset dimension does not match dictionary rows");
  if (!(opt.lambda > 0.0)) throw ConfigError("solve: lambda must be positive");
  const AdmmSystem system(dictionary, opt.beta);
  const auto M = static_cast<std::size_t>(signals.cols());
  SolveOutput out;
  out.codes.resize(dictionary.cols(), signals.cols());
  std::vector<double> objectives(M), peaks(M), residuals(M);
  std::vector<std::size_t> saturated(M), iterations(M);
  std::vector<char> converged(M);
  parallel_for(M, opt.threads, [&](std::size_t j) {
    const auto c = static_cast<Eigen::Index>(j);
    Problem problem{dictionary, signals.col(c), opt.lambda, opt.beta};
    AdmmOptions ao;
    ao.max_iter = opt.max_iter;
    ao.tol = opt.tol;
    ao.record_trace = false;
    const SolverResult r = admm_solve(problem, system, ao).result;
    out.codes.col(c) = r.x_star;
    objectives[j] = r.objective;
    peaks[j] = r.x_star.lpNorm<Eigen::Infinity>();
    residuals[j] = r.primal_residual;
    iterations[j] = r.iterations;
    converged[j] = r.converged;
    saturated[j] = static_cast<std::size_t>((r.x_star.array().abs() >= opt.saturation * opt.lambda).count());
  });
  double obj = 0, peak = 0, res = 0;
  std::size_t sat = 0, conv = 0, iters = 0;
  for (std::size_t j = 0; j < M; ++j) {
    obj += objectives[j];
    peak += peaks[j];
    res = std::max(res, residuals[j]);
    sat += saturated[j];
    conv += converged[j] ? 1 : 0;
    iters += iterations[j];
  }
  const double inv = M ? 1.0 / static_cast<double>(M) : 0.0;
  out.summary = {{"count", M},
                 {"lambda", opt.lambda},
                 {"beta", opt.beta},
                 {"mean_objective", obj * inv},
                 {"mean_linf", peak * inv},
                 {"saturation_threshold", opt.saturation},
                 {"saturation_fraction", M ? static_cast<double>(sat) / static_cast<double>(M * static_cast<std::size_t>(dictionary.cols())) : 0.0},
                 {"max_primal_residual", res},
                 {"mean_iterations", static_cast<double>(iters) * inv},
                 {"converged", conv}};
  return out;
}

inline json cmd_solve(const fs::path& input, const fs::path& dictionary_path, const SolveOptions& opt,
                      const fs::path& out_dir) {
  const Mat signals = io::read_dataset(input);
  const Mat dictionary = io::read_matrix(dictionary_path);
  SolveOutput out = solve_batch(dictionary, signals, opt);
  io::write_dataset(out_dir / "codes.bin", out.codes);
  write_json(out_dir / "solve_summary.json", out.summary);
  return out.summary;
}

// ---------------------------------------------------------------- synth

inline json cmd_synth_clusters(const synth::ClusterParams& p, const fs::path& out_dir) {
  const synth::Labeled data = synth::clusters(p);
  io::write_dataset(out_dir / "data.bin", data.features);
  io::write_labels(out_dir / "labels.csv", data.labels);
  json j = {{"kind", "clusters"},     {"dim", p.dim},     {"count", p.count}, {"classes", p.classes},
            {"separation", p.separation}, {"sigma", p.sigma}, {"seed", p.seed}};
  write_json(out_dir / "synth.json", j);
  return j;
}

inline json cmd_synth_frame(const synth::FrameParams& p, const fs::path& out_dir) {
  const synth::FrameData data = synth::frame_recovery(p);
  io::write_dataset(out_dir / "data.bin", data.signals);
  io::write_matrix(out_dir / "hidden_dictionary.bin", data.dictionary);
  json j = {{"kind", "frame-recovery"}, {"dim", p.dim},   {"atoms", p.atoms}, {"count", p.count},
            {"sparsity", p.sparsity},   {"noise", p.noise}, {"seed", p.seed}};
  write_json(out_dir / "synth.json", j);
  return j;
}

// ---------------------------------------------------------------- dict

inline Vec feature_mean(const Mat& data) { return data.rowwise().mean(); }

inline json cmd_dict(const fs::path& input, const KsvdConfig& cfg, const std::string& method, bool mean_removal,
                     const fs::path& out_dir) {
  Mat data = io::read_dataset(input);
  json j = {{"method", method}, {"atoms", cfg.atoms}, {"seed", cfg.seed}, {"mean_removal", mean_removal}};
  if (mean_removal) {
    const Vec mu = feature_mean(data);
    data.colwise() -= mu;
    io::write_matrix(out_dir / "feature_mean.bin", Mat(mu));
  }
  if (cfg.atoms < 1 || cfg.atoms > data.rows()) throw ConfigError("dict: atoms must be in [1, n]");
  Mat dictionary;
  if (method == "ksvd") {
    if (data.cols() < cfg.atoms) throw ConfigError("dict: need at least as many samples as atoms");
    const KsvdResult r = ksvd_learn(data, cfg);
    dictionary = r.dictionary;
    j["sparsity"] = cfg.effective_sparsity();
    j["iterations"] = cfg.iterations;
    j["error_history"] = r.error_history;
  } else if (method == "random") {
    dictionary = random_dictionary(data.rows(), cfg.atoms, cfg.seed);
  } else {
    throw ConfigError("dict: method must be 'ksvd' or 'random'");
  }
  io::write_matrix(out_dir / "dictionary.bin", dictionary);
  write_json(out_dir / "dict_summary.json", j);
  return j;
}

// ---------------------------------------------------------------- init

struct InitOptions {
  Architecture arch = Architecture::kDeepLinf;
  std::string method = "admm";  // admm | random (deep_linf only)
  double beta = 0.6;
  double lambda0 = 0.0;
  std::size_t stages = 2;
  std::uint64_t seed = 0;
};

struct InitOutput {
  EncoderParams params;
  double lambda0 = 0.0;
};

inline InitOutput initialize_encoder(const Mat& dictionary, const Mat& calibration, const InitOptions& opt) {
  if (calibration.rows() != dictionary.rows()) throw ConfigError("init: calibration dimension does not match dictionary");
  if (calibration.cols() == 0) throw ConfigError("init: empty calibration set");
  const double lambda0 = opt.lambda0 > 0.0 ? opt.lambda0 : default_lambda0(dictionary, calibration);
  InitOutput out;
  out.lambda0 = lambda0;
  switch (opt.arch) {
    case Architecture::kDeepLinf:
      if (opt.method == "admm") {
        out.params = init_from_dictionary(dictionary, opt.beta, lambda0, opt.stages, calibration).params;
      } else if (opt.method == "random") {
        out.params = init_random(Architecture::kDeepLinf, dictionary.rows(), dictionary.cols(), opt.stages, lambda0, opt.seed);
      } else {
        throw ConfigError("init: method must be 'admm' or 'random'");
      }
      break;
    case Architecture::kSnnh:
      out.params = init_lista(dictionary, lambda0, opt.stages);
      break;
    case Architecture::kNnh:
      out.params = init_random(Architecture::kNnh, dictionary.rows(), dictionary.cols(), opt.stages, 1.0, opt.seed);
      break;
  }
  return out;
}

inline json cmd_init(const fs::path& dictionary_path, const fs::path& calibration_path, const InitOptions& opt,
                     const fs::path& out_dir) {
  const Mat dictionary = io::read_matrix(dictionary_path);
  const Mat calibration = io::read_dataset(calibration_path);
  const InitOutput out = initialize_encoder(dictionary, calibration, opt);
  io::write_model(out_dir / "model.bin", out.params);
  json j = {{"architecture", to_string(opt.arch)}, {"method", opt.method}, {"stages", opt.stages},
            {"beta", opt.beta}, {"lambda0", out.lambda0}, {"n", out.params.input_dim()}, {"N", out.params.code_dim()}};
  write_json(out_dir / "init_summary.json", j);
  return j;
}

// ---------------------------------------------------------------- train

inline json cmd_train(const fs::path& model_path, const fs::path& data_path, const fs::path& labels_path,
                      const fs::path& pairs_path, const TrainConfig& cfg, const fs::path& out_dir) {
  const EncoderParams init = io::read_model(model_path);
  LabeledSet data;
  data.features = io::read_dataset(data_path);
  const auto M = static_cast<std::size_t>(data.features.cols());
  if (!pairs_path.empty()) data.pairs = io::read_pairs(pairs_path, M);
  if (!labels_path.empty()) data.labels = io::read_labels(labels_path, M);
  if (data.pairs.empty() && data.labels.empty()) throw ConfigError("train: need a labels file or a pairs file");
  const TrainResult r = train_siamese(data, cfg, init);
  io::write_model(out_dir / "model.bin", r.params);
  io::atomic_write(out_dir / "loss.csv", loss_csv(r.epoch_loss));
  json j = {{"epochs", cfg.epochs},     {"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
            {"margin", cfg.margin},     {"seed", cfg.seed},
            {"first_epoch_loss", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.front()},
            {"final_epoch_loss", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()}};
  write_json(out_dir / "train_summary.json", j);
  return j;
}

// ---------------------------------------------------------------- encode

inline json cmd_encode(const fs::path& model_path, const fs::path& data_path, const fs::path& out_dir,
                       unsigned threads) {
  const EncoderParams params = io::read_model(model_path);
  const Mat data = io::read_dataset(data_path);
  if (data.rows() != params.input_dim()) throw ConfigError("encode: dataset dimension does not match model input");
  const Mat codes = encode_batch(params, data, threads);
  io::write_dataset(out_dir / "representations.bin", codes);
  io::write_codes(out_dir / "codes.txt", binarize_columns(codes));
  json j = {{"count", data.cols()}, {"bits", params.code_dim()}};
  write_json(out_dir / "encode_summary.json", j);
  return j;
}

// ---------------------------------------------------------------- eval

inline json cmd_eval(const fs::path& query_codes, const fs::path& query_labels, const fs::path& db_codes,
                     const fs::path& db_labels, std::size_t bits, const EvalOptions& opt, const fs::path& out_dir) {
  const auto q = io::read_codes(query_codes, bits);
  const auto d = io::read_codes(db_codes, bits);
  if (d.empty()) throw ConfigError("eval: empty database");
  const auto ql = io::read_labels(query_labels, q.size());
  const auto dl = io::read_labels(db_labels, d.size());
  const RetrievalReport r = evaluate(q, ql, d, dl, opt);
  const json j = report_json(r);
  write_json(out_dir / "report.json", j);
  io::atomic_write(out_dir / "report.csv", report_csv({{"eval", r}}));
  return j;
}

// ---------------------------------------------------------------- quantbench

inline json quant_report_json(const QuantizationReport& r) {
  return {{"n", r.n},
          {"N", r.N},
          {"L", r.levels},
          {"trials", r.trials},
          {"lambda", r.lambda},
          {"bound_linf", r.bound_linf},
          {"bound_ls", r.bound_ls},
          {"bound_ratio", r.bound_linf / r.bound_ls},
          {"max_error_linf", r.max_error_linf},
          {"mean_error_linf", r.mean_error_linf},
          {"max_error_ls", r.max_error_ls},
          {"mean_error_ls", r.mean_error_ls},
          {"mean_recon_error_linf", r.mean_recon_error_linf},
          {"mean_recon_error_ls", r.mean_recon_error_ls},
          {"trials_within_bound", r.trials_within_bound}};
}

inline json cmd_quantbench(const QuantizationConfig& cfg, const fs::path& out_dir) {
  const json j = quant_report_json(quantization_experiment(cfg));
  if (!out_dir.empty()) write_json(out_dir / "quantbench.json", j);
  return j;
}

// ---------------------------------------------------------------- pipeline

struct PipelineData {
  LabeledSet train;
  Mat query, database;
  std::vector<int> query_labels, database_labels;
};

inline PipelineData load_pipeline_data(const ExperimentConfig& cfg, const fs::path& config_dir) {
  PipelineData out;
  if (cfg.data.synthetic) {
    const auto& s = *cfg.data.synthetic;
    synth::ClusterParams cp;
    cp.dim = s.dim;
    cp.classes = s.classes;
    cp.separation = s.separation;
    cp.sigma = s.sigma;
    cp.count = s.train + s.query + s.database;
    cp.seed = cfg.seed;
    const synth::Labeled all = synth::clusters(cp);
    const auto tr = static_cast<Eigen::Index>(s.train);
    const auto qu = static_cast<Eigen::Index>(s.query);
    const auto db = static_cast<Eigen::Index>(s.database);
    out.train.features = all.features.leftCols(tr);
    out.query = all.features.middleCols(tr, qu);
    out.database = all.features.rightCols(db);
    out.train.labels.assign(all.labels.begin(), all.labels.begin() + tr);
    out.query_labels.assign(all.labels.begin() + tr, all.labels.begin() + tr + qu);
    out.database_labels.assign(all.labels.begin() + tr + qu, all.labels.end());
  } else {
    if (cfg.data.train.empty()) throw ConfigError("pipeline: config has no data section");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : config_dir / p; };
    out.train.features = io::read_dataset(resolve(cfg.data.train));
    out.query = io::read_dataset(resolve(cfg.data.query));
    out.database = io::read_dataset(resolve(cfg.data.database));
    const auto Mt = static_cast<std::size_t>(out.train.features.cols());
    if (!cfg.data.train_labels.empty()) out.train.labels = io::read_labels(resolve(cfg.data.train_labels), Mt);
    if (!cfg.data.train_pairs.empty()) out.train.pairs = io::read_pairs(resolve(cfg.data.train_pairs), Mt);
    if (cfg.data.query_labels.empty() || cfg.data.database_labels.empty())
      throw ConfigError("pipeline: query and database label files are required for evaluation");
    out.query_labels = io::read_labels(resolve(cfg.data.query_labels), static_cast<std::size_t>(out.query.cols()));
    out.database_labels =
        io::read_labels(resolve(cfg.data.database_labels), static_cast<std::size_t>(out.database.cols()));
  }
  if (out.database.cols() == 0) throw ConfigError("pipeline: empty database");
  if (out.query.rows() != out.train.features.rows() || out.database.rows() != out.train.features.rows())
    throw ConfigError("pipeline: train/query/database dimensions differ");
  if (cfg.data.mean_removal) {
    const Vec mu = feature_mean(out.train.features);
    out.train.features.colwise() -= mu;
    out.query.colwise() -= mu;
    out.database.colwise() -= mu;
  }
  return out;
}

struct PipelineResult {
  RetrievalReport untrained;
  RetrievalReport trained;
  std::vector<double> epoch_loss;
  EncoderParams model;
  double lambda0 = 0.0;
  double saturation_fraction = 0.0;  // trained outputs with |x_i| >= 0.9 lambda_i
  double bounded_fraction = 0.0;     // trained outputs with |x_i| <= lambda_i
  std::size_t zero_entries = 0;      // trained outputs exactly 0
  json manifest;
};

inline constexpr double kSaturationLevel = 0.9;
inline constexpr double kSaturationRequired = 0.6;

/// Fraction of entries with |x_i| >= level * lambda_i, and with |x_i| <= lambda_i.
inline std::pair<double, double> saturation_stats(const Mat& codes, const Vec& lambda, double level) {
  std::size_t sat = 0, bounded = 0;
  for (Eigen::Index j = 0; j < codes.cols(); ++j)
    for (Eigen::Index i = 0; i < codes.rows(); ++i) {
      const double a = std::abs(codes(i, j));
      if (a >= level * lambda[i]) ++sat;
      if (a <= lambda[i]) ++bounded;
    }
  const double total = static_cast<double>(codes.size());
  return {static_cast<double>(sat) / total, static_cast<double>(bounded) / total};
}

/// dictionary -> init -> train -> encode -> binarize -> evaluate.
/// A failing stage leaves a FAILED marker naming the stage next to whatever
/// artifacts were already written.
inline PipelineResult cmd_pipeline(const ExperimentConfig& cfg, const fs::path& out_dir,
                                   const fs::path& config_dir = fs::path(".")) {
  DirectoryLock lock(out_dir);
  {
    std::error_code ec;
    fs::remove(out_dir / "FAILED", ec);
  }
  std::string stage = "data";
  auto fail = [&](const std::exception& e) {
    try {
      io::atomic_write(out_dir / "FAILED", "stage: " + stage + "\ncause: " + e.what() + "\n");
    } catch (...) {
    }
    return "pipeline stage '" + stage + "': " + e.what();
  };

  try {
    PipelineResult result;
    PipelineData data = load_pipeline_data(cfg, config_dir);
    const Mat& train = data.train.features;

    stage = "dictionary";
    if (cfg.dictionary.atoms > train.rows()) throw ConfigError("dictionary.atoms exceeds feature dimension");
    Mat dictionary;
    json dict_info = {{"method", cfg.dictionary.method}};
    if (cfg.dictionary.method == "ksvd") {
      const KsvdResult kr = ksvd_learn(train, cfg.ksvd_config());
      dictionary = kr.dictionary;
      dict_info["error_history"] = kr.error_history;
    } else {
      dictionary = random_dictionary(train.rows(), cfg.dictionary.atoms, cfg.seed);
    }
    io::write_matrix(out_dir / "dictionary.bin", dictionary);

    stage = "init";
    InitOptions io_opt;
    io_opt.arch = parse_architecture(cfg.encoder.architecture);
    io_opt.method = cfg.train.init;
    io_opt.beta = cfg.solver.beta;
    io_opt.lambda0 = cfg.encoder.lambda0 > 0.0 ? cfg.encoder.lambda0 : cfg.solver.lambda;
    io_opt.stages = cfg.encoder.stages;
    io_opt.seed = cfg.seed + 1;
    const InitOutput init = initialize_encoder(dictionary, train, io_opt);
    result.lambda0 = init.lambda0;
    io::write_model(out_dir / "model_init.bin", init.params);

    stage = "evaluate-untrained";
    EvalOptions eo{cfg.eval.radius, cfg.eval.k, cfg.threads};
    {
      const auto q = binarize_columns(encode_batch(init.params, data.query, cfg.threads));
      const auto d = binarize_columns(encode_batch(init.params, data.database, cfg.threads));
      result.untrained = evaluate(q, data.query_labels, d, data.database_labels, eo);
    }

    stage = "train";
    TrainResult tr{init.params, {}};
    if (cfg.train.epochs > 0) tr = train_siamese(data.train, cfg.train_config(), init.params);
    result.epoch_loss = tr.epoch_loss;
    result.model = tr.params;
    io::write_model(out_dir / "model.bin", result.model);
    io::atomic_write(out_dir / "loss.csv", loss_csv(result.epoch_loss));

    stage = "encode";
    const Mat query_codes = encode_batch(result.model, data.query, cfg.threads);
    const Mat db_codes = encode_batch(result.model, data.database, cfg.threads);
    const auto q = binarize_columns(query_codes);
    const auto d = binarize_columns(db_codes);
    io::write_codes(out_dir / "codes_query.txt", q);
    io::write_codes(out_dir / "codes_database.txt", d);
    io::write_labels(out_dir / "labels_query.csv", data.query_labels);
    io::write_labels(out_dir / "labels_database.csv", data.database_labels);
    {
      Mat all(query_codes.rows(), query_codes.cols() + db_codes.cols());
      all << query_codes, db_codes;
      const auto [sat, bounded] = saturation_stats(all, result.model.lambda, kSaturationLevel);
      result.saturation_fraction = sat;
      result.bounded_fraction = bounded;
      result.zero_entries = static_cast<std::size_t>((all.array() == 0.0).count());
    }

    stage = "evaluate";
    result.trained = evaluate(q, data.query_labels, d, data.database_labels, eo);
    json report = {{"untrained", report_json(result.untrained)},
                   {"trained", report_json(result.trained)},
                   {"lambda0", result.lambda0},
                   {"saturation_level", kSaturationLevel},
                   {"saturation_fraction", result.saturation_fraction},
                   {"bounded_fraction", result.bounded_fraction},
                   {"zero_entries", result.zero_entries}};
    write_json(out_dir / "report.json", report);
    io::atomic_write(out_dir / "report.csv", report_csv({{"untrained", result.untrained}, {"trained", result.trained}}));

    stage = "manifest";
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << config_hash(cfg);
    result.manifest = {{"config", to_json(cfg)},
                       {"config_hash", hash.str()},
                       {"seeds", {{"data", cfg.seed}, {"ksvd", cfg.seed}, {"train", cfg.seed}, {"random_init", cfg.seed + 1}}},
                       {"dictionary", dict_info},
                       {"lambda0", result.lambda0},
                       {"saturation_check", {{"level", kSaturationLevel},
                                             {"required_fraction", kSaturationRequired},
                                             {"observed_fraction", result.saturation_fraction}}},
                       {"artifacts", {"dictionary.bin", "model_init.bin", "model.bin", "loss.csv", "codes_query.txt",
                                      "codes_database.txt", "labels_query.csv", "labels_database.csv", "report.json",
                                      "report.csv"}}};
    write_json(out_dir / "manifest.json", result.manifest);
    return result;
  } catch (const ConfigError& e) {
    throw ConfigError(fail(e));
  } catch (const IoError& e) {
    throw IoError(fail(e));
  } catch (const NumericError& e) {
    throw NumericError(fail(e));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fail(e));
  } catch (const std::exception& e) {
    throw NumericError(fail(e));
  }
}

}  // namespace dlinf::commands
