#pragma once

// l-infinity constrained least squares:
//
//   minimize  1/2 ||D x - y||_2^2   subject to  ||x||_inf <= lambda
//
// solved by ADMM on the split x = z, with z carrying the box constraint.
// The 1/2-scaled objective is used everywhere in this library.

#include "dlinf/common.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace dlinf {

/// Clips every entry of u into [-lambda_i, lambda_i]. Entries exactly at a
/// bound stay there.
inline Vec box_project(const Eigen::Ref<const Vec>& u, const Eigen::Ref<const Vec>& lambda) {
  require(u.size() == lambda.size(), "box_project: size mismatch");
  require((lambda.array() > 0.0).all(), "box_project: bounds must be positive");
  Vec out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = std::min(std::max(u[i], -lambda[i]), lambda[i]);
  return out;
}

inline Vec box_project(const Eigen::Ref<const Vec>& u, double lambda) {
  require(lambda > 0.0, "box_project: bound must be positive");
  Vec out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out[i] = std::min(std::max(u[i], -lambda), lambda);
  return out;
}

struct Problem {
  Mat dictionary;  // n x N
  Vec signal;      // n
  double lambda = 1.0;
  double beta = 0.6;

  Eigen::Index signal_dim() const { return dictionary.rows(); }
  Eigen::Index code_dim() const { return dictionary.cols(); }

  void validate() const {
    require(dictionary.rows() > 0 && dictionary.cols() > 0, "problem: empty dictionary");
    require(signal.size() == dictionary.rows(), "problem: signal length does not match dictionary rows");
    require(lambda > 0.0, "problem: lambda must be positive");
    require(beta > 0.0, "problem: beta must be positive");
    for (Eigen::Index j = 0; j < dictionary.cols(); ++j)
      require(dictionary.col(j).squaredNorm() > 0.0, "problem: dictionary has an all-zero column");
  }
};

struct AdmmState {
  Vec x, z, p;
  std::size_t t = 0;

  static AdmmState zeros(Eigen::Index code_dim) {
    return {Vec::Zero(code_dim), Vec::Zero(code_dim), Vec::Zero(code_dim), 0};
  }
};

struct SolverResult {
  Vec x_star;
  double objective = 0.0;
  std::size_t iterations = 0;
  double primal_residual = 0.0;
  bool converged = false;
};

/// Returns 1/2 ||D x - y||^2.
inline double objective(const Problem& problem, const Eigen::Ref<const Vec>& x) {
  require(x.size() == problem.code_dim(), "objective: code length does not match dictionary columns");
  require(problem.signal.size() == problem.signal_dim(), "objective: signal length mismatch");
  return 0.5 * (problem.dictionary * x - problem.signal).squaredNorm();
}

/// Cached Cholesky factor of (D^T D + beta I) for one (D, beta) pair.
class AdmmSystem {
 public:
  AdmmSystem(const Mat& dictionary, double beta) : dictionary_(dictionary), beta_(beta) {
    require(beta > 0.0, "AdmmSystem: beta must be positive");
    const Eigen::Index N = dictionary.cols();
    Mat system = dictionary.transpose() * dictionary;
    system.diagonal().array() += beta;
    llt_.compute(system);
    if (llt_.info() != Eigen::Success) throw NumericError("AdmmSystem: Cholesky factorization failed");
    inverse_ = llt_.solve(Mat::Identity(N, N));
  }

  double beta() const { return beta_; }
  const Mat& dictionary() const { return dictionary_; }

  /// (D^T D + beta I)^{-1}
  const Mat& inverse() const { return inverse_; }

  Vec solve(const Eigen::Ref<const Vec>& rhs) const { return llt_.solve(rhs); }

  bool matches(const Problem& problem) const {
    return problem.beta == beta_ && problem.dictionary.rows() == dictionary_.rows() &&
           problem.dictionary.cols() == dictionary_.cols() && problem.dictionary == dictionary_;
  }

 private:
  Mat dictionary_;
  double beta_;
  Eigen::LLT<Mat> llt_;
  Mat inverse_;
};

namespace detail {

inline AdmmState admm_update(const Vec& dty, double lambda, const AdmmState& state, const AdmmSystem& system) {
  const double beta = system.beta();
  AdmmState next;
  next.x = system.solve(dty + beta * state.z + state.p);
  next.z = box_project(next.x - state.p / beta, lambda);
  next.p = state.p + beta * (next.z - next.x);
  next.t = state.t + 1;
  return next;
}

}  // namespace detail

/// One ADMM iteration in the order x -> z -> p.
inline AdmmState admm_step(const Problem& problem, const AdmmState& state, const AdmmSystem& system) {
  problem.validate();
  require(system.matches(problem), "admm_step: factorization does not match problem (D, beta)");
  const Eigen::Index N = problem.code_dim();
  require(state.x.size() == N && state.z.size() == N && state.p.size() == N, "admm_step: state size mismatch");
  return detail::admm_update(problem.dictionary.transpose() * problem.signal, problem.lambda, state, system);
}

struct AdmmOptions {
  std::size_t max_iter = 10000;
  double tol = 1e-8;
  bool record_trace = true;
};

struct AdmmRun {
  SolverResult result;
  // Entry t-1 holds (z_t, p_t); the zero initial state is not stored.
  std::vector<Vec> z_trace;
  std::vector<Vec> p_trace;
};

/// ADMM from x = z = p = 0 until ||z - x||_2 <= tol and ||z_t - z_{t-1}||_2 <= tol,
/// or max_iter iterations.
/// Running out of iterations is reported through result.converged.
inline AdmmRun admm_solve(const Problem& problem, const AdmmSystem& system, const AdmmOptions& options = {}) {
  problem.validate();
  require(options.max_iter >= 1, "admm_solve: max_iter must be >= 1");
  require(options.tol > 0.0, "admm_solve: tol must be positive");
  require(system.matches(problem), "admm_solve: factorization does not match problem (D, beta)");

  const Vec dty = problem.dictionary.transpose() * problem.signal;
  AdmmRun run;
  AdmmState state = AdmmState::zeros(problem.code_dim());
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  while (state.t < options.max_iter) {
    const Vec previous_z = state.z;
    state = detail::admm_update(dty, problem.lambda, state, system);
    if (!state.z.allFinite() || !state.p.allFinite()) throw NumericError("admm_solve: non-finite iterate");
    if (options.record_trace) {
      run.z_trace.push_back(state.z);
      run.p_trace.push_back(state.p);
    }
    residual = (state.z - state.x).norm();
    // The primal residual alone can vanish while z is still moving (it is
    // exactly zero whenever nothing clips), so z must also have settled.
    if (residual <= options.tol && (state.z - previous_z).norm() <= options.tol) {
      converged = true;
      break;
    }
  }
  run.result.x_star = state.z;
  run.result.objective = objective(problem, state.z);
  run.result.iterations = state.t;
  run.result.primal_residual = residual;
  run.result.converged = converged;
  return run;
}

inline AdmmRun admm_solve(const Problem& problem, const AdmmOptions& options = {}) {
  return admm_solve(problem, AdmmSystem(problem.dictionary, problem.beta), options);
}

/// Unconstrained least-squares code argmin ||D x - y||.
inline Vec least_squares(const Mat& dictionary, const Eigen::Ref<const Vec>& signal) {
  require(signal.size() == dictionary.rows(), "least_squares: size mismatch");
  return dictionary.colPivHouseholderQr().solve(signal);
}

/// Largest eigenvalue of the symmetric PSD matrix m by power iteration.
inline double largest_eigenvalue(const Mat& m, std::size_t max_iter = 10000, double rel_tol = 1e-15) {
  Vec v = Vec::Ones(m.rows()) / std::sqrt(static_cast<double>(m.rows()));
  double value = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Vec w = m * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    const double next = v.dot(m * v);
    if (std::abs(next - value) <= rel_tol * std::abs(next)) return next;
    value = next;
  }
  return value;
}

struct OracleOptions {
  double gradient_mapping_tol = 1e-10;
  std::size_t max_iter = 20'000'000;
};

/// Projected gradient descent with step 1/L, L = lambda_max(D^T D). Serves as
/// an independent reference for admm_solve on small instances.
inline SolverResult oracle_solve(const Problem& problem, const OracleOptions& options = {}) {
  problem.validate();
  const Mat gram = problem.dictionary.transpose() * problem.dictionary;
  const Vec dty = problem.dictionary.transpose() * problem.signal;
  // Slight inflation keeps the step strictly below 2/L even if power
  // iteration undershoots.
  const double lipschitz = largest_eigenvalue(gram) * (1.0 + 1e-12);
  const double step = 1.0 / lipschitz;

  Vec x = Vec::Zero(problem.code_dim());
  SolverResult result;
  double mapping_norm = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (; it < options.max_iter; ++it) {
    const Vec grad = gram * x - dty;
    const Vec next = box_project(x - step * grad, problem.lambda);
    mapping_norm = (x - next).norm() * lipschitz;
    x = next;
    if (mapping_norm <= options.gradient_mapping_tol) {
      result.converged = true;
      ++it;
      break;
    }
  }
  result.x_star = x;
  result.objective = objective(problem, x);
  result.iterations = it;
  result.primal_residual = 0.0;
  return result;
}

}  // namespace dlinf
