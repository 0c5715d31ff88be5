// dlinf: command-line front end for the l-inf solver, encoder training and
// hashing evaluation.
//
// Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric failure.

#include "dlinf/dlinf.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using namespace dlinf;
namespace fs = std::filesystem;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config");
  cmd->add_option("--seed", c.seed, "RNG seed (overrides config)");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = sequential reference mode)");
}

// Built-ins, then the config file, then explicit flags.
ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  return cfg;
}

template <class T>
void override_if(const CLI::Option* opt, T& target, const T& value) {
  if (opt->count() > 0) target = value;
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep l-inf encoder: ADMM solver, siamese hashing training and retrieval evaluation"};
  app.require_subcommand(1);

  // solve
  Common solve_c;
  std::string solve_input, solve_dict;
  double solve_lambda = 0.0, solve_beta = 0.6, solve_tol = 1e-8;
  std::size_t solve_iters = 10000;
  auto* solve = app.add_subcommand("solve", "Solve the l-inf constrained least-squares problem for every sample");
  add_common(solve, solve_c);
  solve->add_option("--input", solve_input, "Dataset file")->required();
  solve->add_option("--dictionary", solve_dict, "Dictionary matrix file")->required();
  auto* solve_lambda_opt = solve->add_option("--lambda", solve_lambda, "Bound lambda");
  auto* solve_beta_opt = solve->add_option("--beta", solve_beta, "ADMM penalty beta");
  auto* solve_tol_opt = solve->add_option("--tol", solve_tol, "Primal residual tolerance");
  auto* solve_iters_opt = solve->add_option("--max-iter", solve_iters, "Iteration cap");

  // synth
  Common synth_c;
  std::string synth_kind = "clusters";
  synth::ClusterParams cp;
  synth::FrameParams fp;
  Eigen::Index synth_dim = 32, synth_atoms = 8, synth_sparsity = 1;
  std::size_t synth_count = 900, synth_classes = 2;
  double synth_sep = 10.0, synth_sigma = 1.0, synth_noise = 0.0;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  add_common(synth_cmd, synth_c);
  synth_cmd->add_option("--kind", synth_kind, "clusters | frame-recovery")
      ->check(CLI::IsMember({"clusters", "frame-recovery"}));
  synth_cmd->add_option("--dim", synth_dim, "Feature dimension n");
  synth_cmd->add_option("--count", synth_count, "Number of samples");
  synth_cmd->add_option("--classes", synth_classes, "clusters: number of classes");
  synth_cmd->add_option("--separation", synth_sep, "clusters: center distance in sigmas");
  synth_cmd->add_option("--sigma", synth_sigma, "clusters: per-coordinate noise");
  synth_cmd->add_option("--atoms", synth_atoms, "frame-recovery: hidden atoms N");
  synth_cmd->add_option("--sparsity", synth_sparsity, "frame-recovery: nonzeros per code");
  synth_cmd->add_option("--noise", synth_noise, "frame-recovery: additive noise");

  // dict
  Common dict_c;
  std::string dict_input, dict_method = "ksvd";
  Eigen::Index dict_atoms = 16, dict_sparsity = 0;
  std::size_t dict_iters = 30;
  bool dict_mean = false;
  auto* dict = app.add_subcommand("dict", "Learn a dictionary (K-SVD) or draw a random one");
  add_common(dict, dict_c);
  dict->add_option("--input", dict_input, "Dataset file")->required();
  auto* dict_method_opt = dict->add_option("--dict", dict_method, "ksvd | random")->check(CLI::IsMember({"ksvd", "random"}));
  auto* dict_atoms_opt = dict->add_option("--atoms", dict_atoms, "Number of atoms N");
  auto* dict_sparsity_opt = dict->add_option("--sparsity", dict_sparsity, "OMP nonzeros T (0 = max(1, N/8))");
  auto* dict_iters_opt = dict->add_option("--iterations", dict_iters, "K-SVD iterations");
  auto* dict_mean_opt = dict->add_flag("--mean-removal", dict_mean, "Subtract the per-feature mean first");

  // init
  Common init_c;
  std::string init_dict, init_calib, init_arch = "deep_linf", init_method = "admm";
  double init_beta = 0.6, init_lambda0 = 0.0;
  std::size_t init_stages = 2;
  auto* init = app.add_subcommand("init", "Initialize an encoder from a dictionary");
  add_common(init, init_c);
  init->add_option("--dictionary", init_dict, "Dictionary matrix file")->required();
  init->add_option("--calibration", init_calib, "Calibration dataset file")->required();
  auto* init_arch_opt = init->add_option("--arch", init_arch, "deep_linf | snnh | nnh");
  auto* init_method_opt = init->add_option("--init", init_method, "admm | random");
  auto* init_beta_opt = init->add_option("--beta", init_beta, "ADMM penalty beta");
  auto* init_lambda_opt = init->add_option("--lambda0", init_lambda0, "Initial lambda (0 = automatic)");
  auto* init_stages_opt = init->add_option("--stages", init_stages, "Unfolded stages K");

  // train
  Common train_c;
  std::string train_model, train_data, train_labels, train_pairs;
  double train_lr = 0.01, train_margin = 5.0;
  std::size_t train_batch = 128, train_epochs = 50;
  auto* train = app.add_subcommand("train", "Siamese training of an encoder");
  add_common(train, train_c);
  train->add_option("--model", train_model, "Initial model file")->required();
  train->add_option("--data", train_data, "Training dataset file")->required();
  train->add_option("--labels", train_labels, "Labels CSV (index,label)");
  train->add_option("--pairs", train_pairs, "Pairs CSV (i,j,similar)");
  auto* train_lr_opt = train->add_option("--lr", train_lr, "Learning rate");
  auto* train_batch_opt = train->add_option("--batch", train_batch, "Batch size");
  auto* train_margin_opt = train->add_option("--margin", train_margin, "Contrastive margin m");
  auto* train_epochs_opt = train->add_option("--epochs", train_epochs, "Epochs");

  // encode
  Common encode_c;
  std::string encode_model, encode_data;
  auto* encode = app.add_subcommand("encode", "Encode a dataset and write binary codes");
  add_common(encode, encode_c);
  encode->add_option("--model", encode_model, "Model file")->required();
  encode->add_option("--data", encode_data, "Dataset file")->required();

  // eval
  Common eval_c;
  std::string eval_q, eval_ql, eval_d, eval_dl;
  std::size_t eval_bits = 0, eval_radius = 2, eval_k = 100;
  auto* eval = app.add_subcommand("eval", "Hamming retrieval evaluation");
  add_common(eval, eval_c);
  eval->add_option("--query-codes", eval_q, "Query codes file")->required();
  eval->add_option("--query-labels", eval_ql, "Query labels CSV")->required();
  eval->add_option("--db-codes", eval_d, "Database codes file")->required();
  eval->add_option("--db-labels", eval_dl, "Database labels CSV")->required();
  eval->add_option("--bits", eval_bits, "Code length N")->required();
  auto* eval_radius_opt = eval->add_option("--radius", eval_radius, "Hamming radius r");
  auto* eval_k_opt = eval->add_option("--k", eval_k, "Cutoff for MP@k");

  // quantbench
  Common qb_c;
  QuantizationConfig qb;
  auto* quant = app.add_subcommand("quantbench", "Quantization error of l-inf codes vs least squares");
  add_common(quant, qb_c);
  quant->add_option("--n", qb.n, "Signal dimension n");
  quant->add_option("--N", qb.N, "Code length N (< n)");
  quant->add_option("--L", qb.levels, "Quantization levels L");
  quant->add_option("--trials", qb.trials, "Number of trials");
  quant->add_option("--lambda", qb.lambda, "Bound lambda");

  // pipeline
  Common pipe_c;
  auto* pipeline = app.add_subcommand("pipeline", "Dictionary, init, training, encoding and evaluation end to end");
  add_common(pipeline, pipe_c);
  pipeline->get_option("--config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; any other usage error is a config error.
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (solve->parsed()) {
      const ExperimentConfig cfg = resolve(solve_c);
      commands::SolveOptions opt;
      opt.lambda = cfg.solver.lambda > 0.0 ? cfg.solver.lambda : cfg.encoder.lambda0;
      opt.beta = cfg.solver.beta;
      opt.tol = cfg.solver.tol;
      opt.max_iter = cfg.solver.max_iter;
      opt.threads = cfg.threads;
      override_if(solve_lambda_opt, opt.lambda, solve_lambda);
      override_if(solve_beta_opt, opt.beta, solve_beta);
      override_if(solve_tol_opt, opt.tol, solve_tol);
      override_if(solve_iters_opt, opt.max_iter, solve_iters);
      if (!(opt.lambda > 0.0)) throw ConfigError("solve: --lambda (or solver.lambda) must be positive");
      print(commands::cmd_solve(solve_input, solve_dict, opt, solve_c.out));
    } else if (synth_cmd->parsed()) {
      const ExperimentConfig cfg = resolve(synth_c);
      if (synth_kind == "clusters") {
        cp.dim = synth_dim;
        cp.count = synth_count;
        cp.classes = synth_classes;
        cp.separation = synth_sep;
        cp.sigma = synth_sigma;
        cp.seed = cfg.seed;
        print(commands::cmd_synth_clusters(cp, synth_c.out));
      } else {
        fp.dim = synth_dim;
        fp.atoms = synth_atoms;
        fp.count = synth_count;
        fp.sparsity = synth_sparsity;
        fp.noise = synth_noise;
        fp.seed = cfg.seed;
        print(commands::cmd_synth_frame(fp, synth_c.out));
      }
    } else if (dict->parsed()) {
      ExperimentConfig cfg = resolve(dict_c);
      override_if(dict_method_opt, cfg.dictionary.method, dict_method);
      override_if(dict_atoms_opt, cfg.dictionary.atoms, dict_atoms);
      override_if(dict_sparsity_opt, cfg.dictionary.sparsity, dict_sparsity);
      override_if(dict_iters_opt, cfg.dictionary.iterations, dict_iters);
      bool mean_removal = cfg.data.mean_removal;
      override_if(dict_mean_opt, mean_removal, dict_mean);
      print(commands::cmd_dict(dict_input, cfg.ksvd_config(), cfg.dictionary.method, mean_removal, dict_c.out));
    } else if (init->parsed()) {
      ExperimentConfig cfg = resolve(init_c);
      commands::InitOptions opt;
      opt.arch = parse_architecture(cfg.encoder.architecture);
      opt.method = cfg.train.init;
      opt.beta = cfg.solver.beta;
      opt.lambda0 = cfg.encoder.lambda0;
      opt.stages = cfg.encoder.stages;
      opt.seed = cfg.seed;
      if (init_arch_opt->count()) opt.arch = parse_architecture(init_arch);
      override_if(init_method_opt, opt.method, init_method);
      override_if(init_beta_opt, opt.beta, init_beta);
      override_if(init_lambda_opt, opt.lambda0, init_lambda0);
      override_if(init_stages_opt, opt.stages, init_stages);
      if (opt.stages < 1) throw ConfigError("init: --stages must be >= 1");
      if (!(opt.beta > 0.0)) throw ConfigError("init: --beta must be positive");
      print(commands::cmd_init(init_dict, init_calib, opt, init_c.out));
    } else if (train->parsed()) {
      ExperimentConfig cfg = resolve(train_c);
      TrainConfig tc = cfg.train_config();
      override_if(train_lr_opt, tc.learning_rate, train_lr);
      override_if(train_batch_opt, tc.batch_size, train_batch);
      override_if(train_margin_opt, tc.margin, train_margin);
      override_if(train_epochs_opt, tc.epochs, train_epochs);
      print(commands::cmd_train(train_model, train_data, train_labels, train_pairs, tc, train_c.out));
    } else if (encode->parsed()) {
      const ExperimentConfig cfg = resolve(encode_c);
      print(commands::cmd_encode(encode_model, encode_data, encode_c.out, cfg.threads));
    } else if (eval->parsed()) {
      ExperimentConfig cfg = resolve(eval_c);
      EvalOptions opt{cfg.eval.radius, cfg.eval.k, cfg.threads};
      override_if(eval_radius_opt, opt.radius, eval_radius);
      override_if(eval_k_opt, opt.k, eval_k);
      print(commands::cmd_eval(eval_q, eval_ql, eval_d, eval_dl, eval_bits, opt, eval_c.out));
    } else if (quant->parsed()) {
      const ExperimentConfig cfg = resolve(qb_c);
      qb.seed = cfg.seed;
      print(commands::cmd_quantbench(qb, qb_c.out));
    } else if (pipeline->parsed()) {
      const ExperimentConfig cfg = resolve(pipe_c);
      const auto result = commands::cmd_pipeline(cfg, pipe_c.out, fs::path(pipe_c.config).parent_path());
      print({{"untrained", commands::report_json(result.untrained)},
             {"trained", commands::report_json(result.trained)},
             {"final_epoch_loss", result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()},
             {"saturation_fraction", result.saturation_fraction}});
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  }
  return 0;
}
