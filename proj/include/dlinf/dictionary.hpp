#pragma once

// K-SVD dictionary learning with an OMP sparse-coding stage.

#include "dlinf/common.hpp"

#include <cmath>
#include <vector>

namespace dlinf {

struct KsvdConfig {
  Eigen::Index atoms = 16;
  Eigen::Index sparsity = 0;  // 0 selects max(1, atoms / 8)
  std::size_t iterations = 30;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  Eigen::Index effective_sparsity() const { return sparsity > 0 ? sparsity : std::max<Eigen::Index>(1, atoms / 8); }
};

/// Orthogonal matching pursuit with at most `sparsity` atoms. Correlation ties
/// go to the lowest atom index; a signal with no correlation to any atom gets
/// the zero code.
inline Vec omp_sparse_code(const Mat& dictionary, const Eigen::Ref<const Vec>& signal, Eigen::Index sparsity) {
  require(signal.size() == dictionary.rows(), "omp_sparse_code: signal length mismatch");
  require(sparsity >= 1 && sparsity <= dictionary.cols(), "omp_sparse_code: sparsity must be in [1, N]");

  const Eigen::Index N = dictionary.cols();
  Vec code = Vec::Zero(N);
  const double signal_norm = signal.norm();
  if (signal_norm == 0.0) return code;

  std::vector<Eigen::Index> support;
  std::vector<char> selected(static_cast<std::size_t>(N), 0);
  Vec residual = signal;
  Vec coeffs;
  for (Eigen::Index round = 0; round < sparsity; ++round) {
    const Vec corr = dictionary.transpose() * residual;
    Eigen::Index best = -1;
    double best_abs = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (selected[static_cast<std::size_t>(j)]) continue;
      const double c = std::abs(corr[j]);
      if (c > best_abs) {
        best_abs = c;
        best = j;
      }
    }
    // Round 1 stops only on exactly zero correlation; later rounds stop once
    // what is left is numerical noise.
    if (best < 0 || (round > 0 && best_abs <= 1e-14 * signal_norm)) break;
    support.push_back(best);
    selected[static_cast<std::size_t>(best)] = 1;

    Mat active(dictionary.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t k = 0; k < support.size(); ++k) active.col(static_cast<Eigen::Index>(k)) = dictionary.col(support[k]);
    coeffs = active.householderQr().solve(signal);
    residual = signal - active * coeffs;
    if (residual.norm() <= 1e-14 * signal_norm) break;
  }
  for (std::size_t k = 0; k < support.size(); ++k) code[support[k]] = coeffs[static_cast<Eigen::Index>(k)];
  return code;
}

/// Gaussian dictionary with unit-norm columns.
inline Mat random_dictionary(Eigen::Index n, Eigen::Index atoms, std::uint64_t seed) {
  require(n >= 1 && atoms >= 1, "random_dictionary: empty shape");
  Rng rng(seed);
  Mat d = gaussian_matrix(n, atoms, rng);
  normalize_columns(d);
  return d;
}

struct KsvdResult {
  Mat dictionary;
  Mat codes;
  // Entry 0 is the error of the initial dictionary with its OMP codes, then
  // one entry after each atom-update sweep.
  std::vector<double> error_history;
};

inline double reconstruction_error(const Mat& data, const Mat& dictionary, const Mat& codes) {
  return 0.5 * (data - dictionary * codes).squaredNorm();
}

/// K-SVD on the columns of `data` (n x M).
inline KsvdResult ksvd_learn(const Mat& data, const KsvdConfig& config) {
  const Eigen::Index n = data.rows();
  const Eigen::Index M = data.cols();
  const Eigen::Index N = config.atoms;
  const Eigen::Index T = config.effective_sparsity();
  require(N >= 1 && N <= n, "ksvd_learn: atoms must be in [1, n]");
  require(T >= 1 && T <= N, "ksvd_learn: sparsity must be in [1, atoms]");
  require(config.iterations >= 1, "ksvd_learn: iterations must be >= 1");
  require(M >= N, "ksvd_learn: need at least as many samples as atoms");

  std::vector<Eigen::Index> nonzero;
  for (Eigen::Index j = 0; j < M; ++j)
    if (data.col(j).squaredNorm() > 0.0) nonzero.push_back(j);
  require(!nonzero.empty(), "ksvd_learn: all data columns are zero");

  // Initial atoms: distinct nonzero data columns in seeded random order,
  // topped up with Gaussian atoms if there are too few.
  Rng rng(config.seed);
  std::shuffle(nonzero.begin(), nonzero.end(), rng);
  Mat dict(n, N);
  for (Eigen::Index k = 0; k < N; ++k) {
    if (static_cast<std::size_t>(k) < nonzero.size()) {
      dict.col(k) = data.col(nonzero[static_cast<std::size_t>(k)]);
    } else {
      dict.col(k) = gaussian_vector(n, rng);
    }
  }
  normalize_columns(dict);

  Mat codes = Mat::Zero(N, M);
  auto sparse_code_all = [&](const Mat& d) {
    Mat out(N, M);
    parallel_for(static_cast<std::size_t>(M), config.threads, [&](std::size_t j) {
      out.col(static_cast<Eigen::Index>(j)) = omp_sparse_code(d, data.col(static_cast<Eigen::Index>(j)), T);
    });
    return out;
  };

  KsvdResult result;
  codes = sparse_code_all(dict);
  result.error_history.push_back(reconstruction_error(data, dict, codes));

  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    if (iter > 0) {
      // Keep the previous code where fresh OMP does worse, so the
      // sparse-coding half of the sweep never raises the error.
      const Mat fresh = sparse_code_all(dict);
      for (Eigen::Index j = 0; j < M; ++j) {
        const double old_err = (data.col(j) - dict * codes.col(j)).squaredNorm();
        const double new_err = (data.col(j) - dict * fresh.col(j)).squaredNorm();
        if (new_err <= old_err) codes.col(j) = fresh.col(j);
      }
    }

    for (Eigen::Index k = 0; k < N; ++k) {
      std::vector<Eigen::Index> users;
      for (Eigen::Index j = 0; j < M; ++j)
        if (codes(k, j) != 0.0) users.push_back(j);

      if (users.empty()) {
        // Unused atom: replace with the worst-represented sample.
        const Mat residual = data - dict * codes;
        Eigen::Index worst = 0;
        residual.colwise().squaredNorm().maxCoeff(&worst);
        const double norm = data.col(worst).norm();
        if (norm > 0.0) dict.col(k) = data.col(worst) / norm;
        continue;
      }

      const auto m = static_cast<Eigen::Index>(users.size());
      Mat restricted(n, m);
      for (Eigen::Index c = 0; c < m; ++c) {
        const Eigen::Index j = users[static_cast<std::size_t>(c)];
        restricted.col(c) = data.col(j) - dict * codes.col(j) + dict.col(k) * codes(k, j);
      }
      Eigen::JacobiSVD<Mat> svd(restricted, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const Vec u = svd.matrixU().col(0);
      const double sigma = svd.singularValues()[0];
      if (sigma == 0.0) continue;
      const Vec v = svd.matrixV().col(0);
      dict.col(k) = u / u.norm();
      for (Eigen::Index c = 0; c < m; ++c) codes(k, users[static_cast<std::size_t>(c)]) = sigma * v[c];
    }
    result.error_history.push_back(reconstruction_error(data, dict, codes));
  }

  result.dictionary = std::move(dict);
  result.codes = std::move(codes);
  return result;
}

}  // namespace dlinf
