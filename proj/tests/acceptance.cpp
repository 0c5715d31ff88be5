// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "dlinf/dlinf.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

using namespace dlinf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const char* title, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("[%s] criterion %d: %s (%.2f s) %s\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

ExperimentConfig shipped_config() {
  return load_config(fs::path(DLINF_SOURCE_DIR) / "configs" / "two_cluster.json");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dlinf_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<double> epoch_losses_of(const fs::path& dir) {
  std::istringstream in(io::read_file(dir / "loss.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) out.push_back(std::stod(line.substr(line.find(',') + 1)));
  return out;
}

double kink_distance(const EncoderParams& p, const ForwardTape& t) {
  double m = std::numeric_limits<double>::infinity();
  for (const Vec& u : t.pre) m = std::min(m, (u.cwiseAbs() - p.lambda).cwiseAbs().minCoeff());
  return m;
}

}  // namespace

int main() {
  run(1, "ADMM objective matches projected-gradient oracle on 20 instances", [] {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto inst = oracle::random_instance(8, 4, seed);
      const Problem p{inst.D, inst.y, 0.5, 0.6};
      const double a = admm_solve(p).result.objective;
      const double o = oracle_solve(p).objective;
      worst = std::max(worst, std::abs(a - o) / (1.0 + o));
    }
    return Outcome{worst <= 1e-6, fmt("max |dobj|/(1+obj) = %.3e", worst)};
  });

  run(2, "reference-mode encoder reproduces truncated ADMM for K = 1, 2, 3", [] {
    double worst = 0.0;
    for (std::size_t K = 1; K <= 3; ++K)
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto inst = oracle::random_instance(8, 4, 1000 + seed);
        const EncoderInit init = init_from_dictionary(inst.D, 0.6, 0.5, K, inst.y);
        AdmmOptions opts;
        opts.max_iter = K;
        opts.tol = 1e-300;
        const AdmmRun ref = admm_solve(Problem{inst.D, inst.y, 0.5, 0.6}, opts);
        const Vec x = forward_reference(init.params, inst.y, ReferenceBias{init.bias_map, ref.p_trace}).output();
        worst = std::max(worst, (x - ref.z_trace.back()).lpNorm<Eigen::Infinity>());
      }
    return Outcome{worst <= 1e-10, fmt("max linf gap = %.3e", worst)};
  });

  run(3, "quantization error of l-inf codes within lambda*sqrt(N)/L in every trial", [] {
    QuantizationConfig cfg;
    cfg.n = 64;
    cfg.N = 16;
    cfg.levels = 16;
    cfg.trials = 100;
    cfg.seed = 7;
    const QuantizationReport r = quantization_experiment(cfg);
    return Outcome{r.trials_within_bound == 100,
                   fmt("%.0f/100 within bound %.4f (max %.4f, LS mean %.4f)", static_cast<double>(r.trials_within_bound),
                       r.bound_linf, r.max_error_linf, r.mean_error_ls)};
  });

  run(4, "backprop matches central differences on W, S_k, b_k, lambda over 10 seeds", [] {
    double worst = 0.0;
    std::size_t checked = 0, rejected = 0;
    for (std::uint64_t seed = 0; checked < 10 && seed < 500; ++seed) {
      Rng rng(seed);
      EncoderParams p;
      p.W = gaussian_matrix(4, 6, rng, 0.5);
      p.S = {gaussian_matrix(4, 4, rng, 0.5), gaussian_matrix(4, 4, rng, 0.5)};
      p.b = {gaussian_vector(4, rng, 0.3), gaussian_vector(4, rng, 0.3), gaussian_vector(4, rng, 0.3)};
      p.lambda = gaussian_vector(4, rng).cwiseAbs().array() * 0.5 + 0.3;
      const Vec ya = gaussian_vector(6, rng), yb = gaussian_vector(6, rng);
      const bool similar = seed % 2 == 0;
      const double margin = 3.0;
      const ForwardTape ta = forward(p, ya), tb = forward(p, yb);
      const double d = (ta.output() - tb.output()).norm();
      if (std::min(kink_distance(p, ta), kink_distance(p, tb)) < 1e-3 ||
          (!similar && (std::abs(d - margin) < 1e-3 || d < 1e-3))) {
        ++rejected;
        continue;
      }
      ++checked;
      const Gradients g = backward(p, ta, tb, similar, margin);
      auto loss = [&] { return pair_loss(p, ya, yb, similar, margin); };
      auto check = [&](double& slot, double analytic) {
        const double fd = oracle::central_difference(loss, slot, 1e-6);
        worst = std::max(worst, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-4}));
      };
      for (Eigen::Index i = 0; i < p.W.size(); ++i) check(p.W.data()[i], g.dW.data()[i]);
      for (std::size_t k = 0; k < p.S.size(); ++k)
        for (Eigen::Index i = 0; i < p.S[k].size(); ++i) check(p.S[k].data()[i], g.dS[k].data()[i]);
      for (std::size_t k = 0; k < p.b.size(); ++k)
        for (Eigen::Index i = 0; i < p.b[k].size(); ++i) check(p.b[k][i], g.db[k][i]);
      for (Eigen::Index i = 0; i < p.lambda.size(); ++i) check(p.lambda[i], g.dlambda[i]);
    }
    return Outcome{checked == 10 && worst < 1e-4,
                   fmt("%.0f seeds checked, %.0f rejected near kinks, max rel err %.3e", static_cast<double>(checked),
                       static_cast<double>(rejected), worst)};
  });

  // Criteria 5 and 7 share one single-threaded pipeline run.
  const fs::path admm_dir = scratch("admm");
  commands::PipelineResult trained;
  double pipeline_secs = 0.0;
  bool pipeline_ok = false;
  std::string pipeline_error;
  try {
    ExperimentConfig cfg = shipped_config();
    cfg.threads = 1;
    const auto t0 = std::chrono::steady_clock::now();
    trained = commands::cmd_pipeline(cfg, admm_dir);
    pipeline_secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    pipeline_ok = true;
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }

  run(5, "two-cluster retrieval: mAP >= 0.9, precision@r2 >= 0.8, beats untrained", [&] {
    if (!pipeline_ok) return Outcome{false, "pipeline failed: " + pipeline_error};
    const bool pass = trained.trained.map >= 0.9 && trained.trained.precision >= 0.8 &&
                      trained.untrained.map < trained.trained.map && pipeline_secs < 120.0;
    return Outcome{pass, fmt("mAP %.4f, P@r2 %.4f, untrained mAP %.4f, pipeline %.1f s", trained.trained.map,
                             trained.trained.precision, trained.untrained.map, pipeline_secs)};
  });

  run(6, "ADMM-initialized training reaches random init's epoch-5 loss within 2 epochs", [&] {
    if (!pipeline_ok) return Outcome{false, "pipeline failed: " + pipeline_error};
    ExperimentConfig cfg = shipped_config();
    cfg.threads = 1;
    cfg.train.init = "random";
    cfg.train.epochs = 5;
    const fs::path dir = scratch("random");
    commands::cmd_pipeline(cfg, dir);
    const std::vector<double> random_loss = epoch_losses_of(dir);
    const std::vector<double>& admm_loss = trained.epoch_loss;
    const double target = random_loss.at(4);
    const double best_two = std::min(admm_loss.at(0), admm_loss.at(1));
    return Outcome{best_two <= target, fmt("ADMM epochs 1-2 best %.4f vs random epoch 5 %.4f", best_two, target)};
  });

  run(7, "outputs bounded by lambda; >= 60% saturate at 0.9 lambda after training", [&] {
    if (!pipeline_ok) return Outcome{false, "pipeline failed: " + pipeline_error};
    // Boundedness over every model the run produced, on all splits.
    const ExperimentConfig cfg = shipped_config();
    const auto data = commands::load_pipeline_data(cfg, ".");
    double bounded_min = 1.0;
    for (const char* model : {"model_init.bin", "model.bin"}) {
      const EncoderParams p = io::read_model(admm_dir / model);
      for (const Mat* split : {&data.train.features, &data.query, &data.database}) {
        const auto [sat, bounded] = commands::saturation_stats(encode_batch(p, *split), p.lambda, 0.9);
        bounded_min = std::min(bounded_min, bounded);
      }
    }
    const bool pass = bounded_min == 1.0 && trained.saturation_fraction >= commands::kSaturationRequired;
    return Outcome{pass, fmt("bounded fraction %.4f, saturated fraction %.4f (required %.2f)", bounded_min,
                             trained.saturation_fraction, commands::kSaturationRequired)};
  });

  run(8, "evaluate matches the sort-based reference on random 50-item sets", [] {
    double worst = 0.0;
    Rng rng(99);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> label(0, 3);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t bits = 8 + static_cast<std::size_t>(trial);
      std::vector<std::vector<bool>> qb(15, std::vector<bool>(bits)), db(50, std::vector<bool>(bits));
      std::vector<int> ql(15), dl(50);
      std::vector<HashCode> q, d;
      for (std::size_t i = 0; i < qb.size(); ++i) {
        HashCode c(bits);
        for (std::size_t b = 0; b < bits; ++b) c.set(b, qb[i][b] = coin(rng));
        q.push_back(c);
        ql[i] = label(rng);
      }
      for (std::size_t i = 0; i < db.size(); ++i) {
        HashCode c(bits);
        for (std::size_t b = 0; b < bits; ++b) c.set(b, db[i][b] = coin(rng));
        d.push_back(c);
        dl[i] = label(rng);
      }
      const RetrievalReport r = evaluate(q, ql, d, dl, EvalOptions{2, 10, 1});
      const oracle::NaiveReport o = oracle::naive_metrics(qb, ql, db, dl, 2, 10);
      for (double gap : {r.precision - o.precision, r.recall - o.recall, r.f1 - o.f1, r.map - o.map,
                         r.mp_at_k - o.mp_at_k})
        worst = std::max(worst, std::abs(gap));
    }
    return Outcome{worst <= 1e-12, fmt("max metric gap %.3e over 20 trials", worst)};
  });

  // Informational: the same comparison with fan-in scaled random weights.
  try {
    ExperimentConfig cfg = shipped_config();
    cfg.threads = 1;
    const auto data = commands::load_pipeline_data(cfg, ".");
    const Mat D = io::read_matrix(admm_dir / "dictionary.bin");
    TrainConfig tc = cfg.train_config();
    tc.epochs = 5;
    const EncoderParams fan_in =
        init_random(Architecture::kDeepLinf, D.rows(), D.cols(), cfg.encoder.stages, trained.lambda0, cfg.seed + 1, 0.0);
    const auto r = train_siamese(data.train, tc, fan_in);
    std::printf("[INFO] fan-in random init: epoch-5 loss %.4f; ADMM epochs 1-2: %.4f, %.4f\n", r.epoch_loss.at(4),
                trained.epoch_loss.at(0), trained.epoch_loss.at(1));
  } catch (const std::exception& e) {
    std::printf("[INFO] fan-in comparison skipped: %s\n", e.what());
  }

  std::printf("%s: %d criterion failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
