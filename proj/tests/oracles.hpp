#pragma once

// Test-only reference implementations. Nothing here calls into the code path
// it is used to check.

#include "dlinf/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace dlinf::oracle {

inline Mat random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_matrix(rows, cols, rng);
}

struct Instance {
  Mat D;
  Vec y;
};

inline Instance random_instance(Eigen::Index n, Eigen::Index N, std::uint64_t seed) {
  Rng rng(seed);
  Instance inst;
  inst.D = gaussian_matrix(n, N, rng);
  inst.y = gaussian_vector(n, rng);
  return inst;
}

/// 1/2 ||D x - y||^2 by explicit loops.
inline double naive_objective(const Mat& D, const Vec& x, const Vec& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    double r = -y[i];
    for (Eigen::Index j = 0; j < D.cols(); ++j) r += D(i, j) * x[j];
    total += r * r;
  }
  return 0.5 * total;
}

inline std::size_t naive_hamming(const std::vector<bool>& a, const std::vector<bool>& b) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i] ? 1 : 0;
  return d;
}

struct NaiveReport {
  double precision = 0, recall = 0, f1 = 0, map = 0, mp_at_k = 0;
};

/// Quadratic-time metrics straight from the definitions: full sort with an
/// explicit (distance, index) comparator.
inline NaiveReport naive_metrics(const std::vector<std::vector<bool>>& queries, const std::vector<int>& ql,
                                 const std::vector<std::vector<bool>>& db, const std::vector<int>& dl,
                                 std::size_t radius, std::size_t k) {
  NaiveReport r;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<std::size_t> order(db.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> dist(db.size());
    for (std::size_t j = 0; j < db.size(); ++j) dist[j] = naive_hamming(queries[q], db[j]);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
    });
    double retrieved = 0, hit = 0, relevant = 0;
    for (std::size_t j = 0; j < db.size(); ++j) {
      const bool rel = dl[j] == ql[q];
      relevant += rel;
      if (dist[j] <= radius) {
        retrieved += 1;
        hit += rel;
      }
    }
    r.precision += retrieved > 0 ? hit / retrieved : 0.0;
    r.recall += relevant > 0 ? hit / relevant : 0.0;

    double ap = 0, seen = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (dl[order[pos]] == ql[q]) {
        seen += 1;
        ap += seen / static_cast<double>(pos + 1);
      }
    }
    r.map += seen > 0 ? ap / seen : 0.0;

    const std::size_t kk = std::min(k, db.size());
    double top = 0;
    for (std::size_t pos = 0; pos < kk; ++pos) top += dl[order[pos]] == ql[q];
    r.mp_at_k += top / static_cast<double>(kk);
  }
  const double Q = static_cast<double>(queries.size());
  r.precision /= Q;
  r.recall /= Q;
  r.map /= Q;
  r.mp_at_k /= Q;
  r.f1 = (r.precision > 0 && r.recall > 0) ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

/// Central finite difference of f at the scalar referenced by `slot`.
template <class F>
double central_difference(F&& f, double& slot, double h) {
  const double saved = slot;
  slot = saved + h;
  const double plus = f();
  slot = saved - h;
  const double minus = f();
  slot = saved;
  return (plus - minus) / (2.0 * h);
}

inline double angle_between(const Vec& a, const Vec& b) {
  const double c = std::min(1.0, std::abs(a.dot(b)) / (a.norm() * b.norm()));
  return std::acos(c);
}

}  // namespace dlinf::oracle
