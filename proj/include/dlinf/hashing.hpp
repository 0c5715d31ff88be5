#pragma once

// Binary codes, Hamming retrieval and the retrieval metrics.

#include "dlinf/common.hpp"
#include "dlinf/solver.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dlinf {

/// Fixed-length bit string. Bit 0 is the most significant bit of byte 0.
class HashCode {
 public:
  HashCode() = default;
  explicit HashCode(std::size_t bits) : bits_(bits), bytes_((bits + 7) / 8, 0) {}

  std::size_t size() const { return bits_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  bool get(std::size_t i) const { return (bytes_[i / 8] >> (7 - i % 8)) & 1u; }
  void set(std::size_t i, bool v) {
    const auto mask = static_cast<std::uint8_t>(1u << (7 - i % 8));
    if (v) {
      bytes_[i / 8] |= mask;
    } else {
      bytes_[i / 8] &= static_cast<std::uint8_t>(~mask);
    }
  }

  static HashCode from_bytes(std::vector<std::uint8_t> bytes, std::size_t bits) {
    require(bytes.size() == (bits + 7) / 8, "HashCode: byte count does not match bit length");
    HashCode code;
    code.bits_ = bits;
    code.bytes_ = std::move(bytes);
    // Padding bits must be zero for equality and distance to stay exact.
    if (bits % 8 != 0) code.bytes_.back() &= static_cast<std::uint8_t>(0xFFu << (8 - bits % 8));
    return code;
  }

  std::string to_hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes_.size() * 2);
    for (auto b : bytes_) {
      out.push_back(kDigits[b >> 4]);
      out.push_back(kDigits[b & 0xF]);
    }
    return out;
  }

  static HashCode from_hex(std::string_view hex, std::size_t bits) {
    if (hex.size() != 2 * ((bits + 7) / 8)) throw IoError("hash code hex has wrong length for " + std::to_string(bits) + " bits");
    auto nibble = [](char c) -> std::uint8_t {
      if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
      if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
      if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
      throw IoError("hash code contains a non-hex character");
    };
    std::vector<std::uint8_t> bytes(hex.size() / 2);
    for (std::size_t k = 0; k < bytes.size(); ++k)
      bytes[k] = static_cast<std::uint8_t>((nibble(hex[2 * k]) << 4) | nibble(hex[2 * k + 1]));
    return from_bytes(std::move(bytes), bits);
  }

  friend bool operator==(const HashCode&, const HashCode&) = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint8_t> bytes_;
};

/// bit_i = (x_i >= 0)
inline HashCode binarize(const Eigen::Ref<const Vec>& x) {
  HashCode code(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) code.set(static_cast<std::size_t>(i), x[i] >= 0.0);
  return code;
}

inline std::vector<HashCode> binarize_columns(const Mat& codes) {
  std::vector<HashCode> out;
  out.reserve(static_cast<std::size_t>(codes.cols()));
  for (Eigen::Index j = 0; j < codes.cols(); ++j) out.push_back(binarize(codes.col(j)));
  return out;
}

inline std::size_t hamming_distance(const HashCode& a, const HashCode& b) {
  require(a.size() == b.size(), "hamming_distance: code lengths differ");
  std::size_t d = 0;
  const auto& x = a.bytes();
  const auto& y = b.bytes();
  for (std::size_t k = 0; k < x.size(); ++k) d += static_cast<std::size_t>(std::popcount(static_cast<unsigned>(x[k] ^ y[k])));
  return d;
}

struct Quantized {
  Vec values;
  double error = 0.0;  // ||x - q||_2
};

/// Uniform L-level quantizer on [-lambda, lambda] with level centers at
/// -lambda + (2i + 1) lambda / L, so every coordinate moves by at most
/// lambda / L.
inline Quantized uniform_quantize(const Eigen::Ref<const Vec>& x, double lambda, std::size_t levels) {
  require(lambda > 0.0, "uniform_quantize: lambda must be positive");
  require(levels >= 2, "uniform_quantize: need at least 2 levels");
  const double L = static_cast<double>(levels);
  const double width = 2.0 * lambda / L;
  Quantized q;
  q.values.resize(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    require(std::abs(x[i]) <= lambda, "uniform_quantize: input outside [-lambda, lambda]");
    auto cell = static_cast<std::size_t>(std::floor((x[i] + lambda) / width));
    if (cell >= levels) cell = levels - 1;
    q.values[i] = -lambda + (2.0 * static_cast<double>(cell) + 1.0) * lambda / L;
  }
  q.error = (x - q.values).norm();
  return q;
}

struct QuantizationConfig {
  Eigen::Index n = 64;
  Eigen::Index N = 16;
  std::size_t levels = 16;
  std::size_t trials = 100;
  double lambda = 0.2;
  double beta = 0.6;
  std::uint64_t seed = 0;
};

struct QuantizationReport {
  Eigen::Index n = 0, N = 0;
  std::size_t levels = 0, trials = 0;
  double lambda = 0.0;
  double bound_linf = 0.0;  // lambda sqrt(N) / L
  double bound_ls = 0.0;    // sqrt(n) / L
  double max_error_linf = 0.0, mean_error_linf = 0.0;
  double max_error_ls = 0.0, mean_error_ls = 0.0;
  double mean_recon_error_linf = 0.0, mean_recon_error_ls = 0.0;
  std::size_t trials_within_bound = 0;
  std::vector<double> errors_linf;
};

/// Per trial: Gaussian unit-column D (n x N) and signal y, scaled so that
/// ||x_LS||_2 = 0.9. The l-inf code (ADMM, fixed lambda) is quantized on
/// [-lambda, lambda]; x_LS on [-1, 1].
inline QuantizationReport quantization_experiment(const QuantizationConfig& cfg) {
  if (cfg.N >= cfg.n) throw ConfigError("quantbench: requires N < n");
  if (cfg.levels < 2) throw ConfigError("quantbench: requires L >= 2");
  if (cfg.trials < 1) throw ConfigError("quantbench: requires at least one trial");
  if (!(cfg.lambda > 0.0)) throw ConfigError("quantbench: lambda must be positive");

  QuantizationReport r;
  r.n = cfg.n;
  r.N = cfg.N;
  r.levels = cfg.levels;
  r.trials = cfg.trials;
  r.lambda = cfg.lambda;
  const double L = static_cast<double>(cfg.levels);
  r.bound_linf = cfg.lambda * std::sqrt(static_cast<double>(cfg.N)) / L;
  r.bound_ls = std::sqrt(static_cast<double>(cfg.n)) / L;

  Rng rng(cfg.seed);
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    Mat D = gaussian_matrix(cfg.n, cfg.N, rng);
    normalize_columns(D);
    Vec y = gaussian_vector(cfg.n, rng);
    const Vec x_ls_raw = least_squares(D, y);
    const double scale = 0.9 / x_ls_raw.norm();
    y *= scale;
    const Vec x_ls = x_ls_raw * scale;

    Problem problem{D, y, cfg.lambda, cfg.beta};
    AdmmOptions opts;
    opts.record_trace = false;
    opts.max_iter = 20000;
    const Vec x_inf = admm_solve(problem, opts).result.x_star;

    const Quantized q_inf = uniform_quantize(x_inf, cfg.lambda, cfg.levels);
    const Quantized q_ls = uniform_quantize(x_ls, 1.0, cfg.levels);
    r.errors_linf.push_back(q_inf.error);
    r.max_error_linf = std::max(r.max_error_linf, q_inf.error);
    r.max_error_ls = std::max(r.max_error_ls, q_ls.error);
    r.mean_error_linf += q_inf.error;
    r.mean_error_ls += q_ls.error;
    r.mean_recon_error_linf += (D * (x_inf - q_inf.values)).norm();
    r.mean_recon_error_ls += (D * (x_ls - q_ls.values)).norm();
    if (q_inf.error <= r.bound_linf) ++r.trials_within_bound;
  }
  const double T = static_cast<double>(cfg.trials);
  r.mean_error_linf /= T;
  r.mean_error_ls /= T;
  r.mean_recon_error_linf /= T;
  r.mean_recon_error_ls /= T;
  return r;
}

struct RetrievalReport {
  std::size_t code_length = 0;
  std::size_t radius = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double map = 0.0;         // full ranked list
  double map_at_10 = 0.0;   // top-10 truncated
  double mp_at_k = 0.0;
  std::size_t k = 0;
};

inline double harmonic_f1(double precision, double recall) {
  return (precision > 0.0 && recall > 0.0) ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

/// Average precision over a ranked relevance list: mean of precision@i at
/// each relevant position (0 when nothing is relevant).
inline double average_precision(const std::vector<bool>& ranked_relevance, std::size_t cutoff) {
  const std::size_t limit = std::min(cutoff, ranked_relevance.size());
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < limit; ++i) {
    if (!ranked_relevance[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

struct EvalOptions {
  std::size_t radius = 2;
  std::size_t k = 100;
  unsigned threads = 0;
};

/// Hamming-ranking evaluation with label-equality relevance. Ranking is by
/// distance, ties broken by database index. Queries retrieving nothing within
/// the radius count precision 0.
inline RetrievalReport evaluate(const std::vector<HashCode>& queries, const std::vector<int>& query_labels,
                                const std::vector<HashCode>& database, const std::vector<int>& database_labels,
                                const EvalOptions& opts) {
  if (database.empty()) throw ConfigError("evaluate: empty database");
  if (queries.empty()) throw ConfigError("evaluate: empty query set");
  require(query_labels.size() == queries.size(), "evaluate: query label count mismatch");
  require(database_labels.size() == database.size(), "evaluate: database label count mismatch");
  const std::size_t bits = database.front().size();
  for (const auto& c : database) require(c.size() == bits, "evaluate: mixed code lengths");
  for (const auto& c : queries) require(c.size() == bits, "evaluate: mixed code lengths");

  const std::size_t Q = queries.size();
  const std::size_t M = database.size();
  const std::size_t k = std::min(opts.k, M);
  struct PerQuery {
    double precision = 0, recall = 0, ap = 0, ap10 = 0, pk = 0;
  };
  std::vector<PerQuery> per(Q);

  parallel_for(Q, opts.threads, [&](std::size_t q) {
    // Counting sort on distance is stable, which gives the index tie-break.
    std::vector<std::vector<std::size_t>> buckets(bits + 1);
    std::size_t relevant_total = 0;
    for (std::size_t j = 0; j < M; ++j) {
      buckets[hamming_distance(queries[q], database[j])].push_back(j);
      if (database_labels[j] == query_labels[q]) ++relevant_total;
    }
    std::vector<bool> ranked;
    ranked.reserve(M);
    std::size_t retrieved = 0, retrieved_relevant = 0;
    for (std::size_t d = 0; d <= bits; ++d) {
      for (std::size_t j : buckets[d]) {
        const bool rel = database_labels[j] == query_labels[q];
        ranked.push_back(rel);
        if (d <= opts.radius) {
          ++retrieved;
          if (rel) ++retrieved_relevant;
        }
      }
    }
    PerQuery& pq = per[q];
    pq.precision = retrieved ? static_cast<double>(retrieved_relevant) / static_cast<double>(retrieved) : 0.0;
    pq.recall = relevant_total ? static_cast<double>(retrieved_relevant) / static_cast<double>(relevant_total) : 0.0;
    pq.ap = average_precision(ranked, M);
    pq.ap10 = average_precision(ranked, 10);
    std::size_t topk = 0;
    for (std::size_t i = 0; i < k; ++i) topk += ranked[i] ? 1 : 0;
    pq.pk = static_cast<double>(topk) / static_cast<double>(k);
  });

  RetrievalReport r;
  r.code_length = bits;
  r.radius = opts.radius;
  r.k = k;
  for (const auto& pq : per) {
    r.precision += pq.precision;
    r.recall += pq.recall;
    r.map += pq.ap;
    r.map_at_10 += pq.ap10;
    r.mp_at_k += pq.pk;
  }
  const double inv = 1.0 / static_cast<double>(Q);
  r.precision *= inv;
  r.recall *= inv;
  r.map *= inv;
  r.map_at_10 *= inv;
  r.mp_at_k *= inv;
  r.f1 = harmonic_f1(r.precision, r.recall);
  return r;
}

}  // namespace dlinf
