#pragma once

// Unfolded encoders.
//
// Deep l-inf encoder (K stages, BLU activation):
//   z_1 = B_lambda(W y + b_1)
//   z_k = B_lambda(W y + S_k z_{k-1} + b_k),   k = 2..K
//
// With W = (D^T D + beta I)^{-1} D^T, S = beta (D^T D + beta I)^{-1} and
// b_k = [(D^T D + beta I)^{-1} - I / beta] p_{k-1}, stage k reproduces the
// k-th ADMM iterate z_k exactly.
//
// The same container also holds the two comparison encoders:
//   SNNH: identical wiring, soft threshold (SHeLU) instead of BLU.
//   NNH:  plain feed-forward, z_1 = tanh(W y + b_1), z_k = tanh(S_k z_{k-1} + b_k).

#include "dlinf/common.hpp"
#include "dlinf/neurons.hpp"
#include "dlinf/solver.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dlinf {

enum class Architecture : std::uint32_t { kDeepLinf = 0, kSnnh = 1, kNnh = 2 };

inline std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kDeepLinf: return "deep_linf";
    case Architecture::kSnnh: return "snnh";
    case Architecture::kNnh: return "nnh";
  }
  return "unknown";
}

inline Architecture parse_architecture(std::string_view name) {
  if (name == "deep_linf") return Architecture::kDeepLinf;
  if (name == "snnh") return Architecture::kSnnh;
  if (name == "nnh") return Architecture::kNnh;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

struct EncoderParams {
  Architecture arch = Architecture::kDeepLinf;
  Mat W;                // N x n, applied to the input
  std::vector<Mat> S;   // S_2..S_K, each N x N
  std::vector<Vec> b;   // b_1..b_K, each N
  Vec lambda;           // N, positive

  Eigen::Index input_dim() const { return W.cols(); }
  Eigen::Index code_dim() const { return W.rows(); }
  std::size_t stages() const { return b.size(); }

  void validate() const {
    const Eigen::Index N = code_dim();
    require(N > 0 && input_dim() > 0, "encoder: empty W");
    require(!b.empty(), "encoder: need at least one stage");
    require(S.size() + 1 == b.size(), "encoder: need K-1 S matrices for K biases");
    for (const auto& s : S) require(s.rows() == N && s.cols() == N, "encoder: S must be N x N");
    for (const auto& v : b) require(v.size() == N, "encoder: bias length must be N");
    require(lambda.size() == N, "encoder: lambda length must be N");
    require((lambda.array() > 0.0).all(), "encoder: lambda entries must be positive");
    require(W.allFinite() && lambda.allFinite(), "encoder: non-finite parameters");
    for (const auto& s : S) require(s.allFinite(), "encoder: non-finite S");
    for (const auto& v : b) require(v.allFinite(), "encoder: non-finite b");
  }

  std::size_t parameter_count() const {
    std::size_t count = static_cast<std::size_t>(W.size() + lambda.size());
    for (const auto& s : S) count += static_cast<std::size_t>(s.size());
    for (const auto& v : b) count += static_cast<std::size_t>(v.size());
    return count;
  }
};

/// Everything backpropagation needs from one forward pass.
struct ForwardTape {
  Vec input;
  std::vector<Vec> pre;   // u_k
  std::vector<Vec> post;  // z_k
  std::vector<Vec> bias;  // bias actually added at stage k

  const Vec& output() const { return post.back(); }
};

/// Per-sample biases for reference mode: stage k uses bias_map * p_{k-1},
/// with p_0 = 0 and p_trace[t-1] = p_t.
struct ReferenceBias {
  Mat bias_map;
  std::vector<Vec> p_trace;
};

/// Multiply-add counter for the linear layers.
struct OpCounter {
  std::uint64_t multiply_adds = 0;
};

inline Vec activate(Architecture arch, const Vec& u, const Vec& lambda) {
  switch (arch) {
    case Architecture::kDeepLinf: return blu(u, lambda);
    case Architecture::kSnnh: return scaled_shelu(u, lambda);
    case Architecture::kNnh: return u.array().tanh().matrix();
  }
  return u;
}

namespace detail {

inline ForwardTape run_forward(const EncoderParams& params, const Eigen::Ref<const Vec>& y,
                               const ReferenceBias* reference, OpCounter* counter) {
  require(y.size() == params.input_dim(), "forward: input length does not match W columns");
  const std::size_t K = params.stages();
  const Eigen::Index N = params.code_dim();
  const bool input_every_stage = params.arch != Architecture::kNnh;

  ForwardTape tape;
  tape.input = y;
  tape.pre.reserve(K);
  tape.post.reserve(K);
  tape.bias.reserve(K);

  const Vec wy = params.W * y;
  if (counter) counter->multiply_adds += static_cast<std::uint64_t>(params.W.size());

  for (std::size_t k = 0; k < K; ++k) {
    Vec bias;
    if (reference) {
      if (k == 0) {
        bias = Vec::Zero(N);
      } else {
        require(reference->p_trace.size() >= k, "forward: p-trace shorter than K-1");
        bias = reference->bias_map * reference->p_trace[k - 1];
      }
    } else {
      bias = params.b[k];
    }
    Vec u = (k == 0 || input_every_stage) ? Vec(wy + bias) : Vec(bias);
    if (k > 0) {
      u.noalias() += params.S[k - 1] * tape.post[k - 1];
      if (counter) counter->multiply_adds += static_cast<std::uint64_t>(params.S[k - 1].size());
    }
    tape.post.push_back(activate(params.arch, u, params.lambda));
    tape.pre.push_back(std::move(u));
    tape.bias.push_back(std::move(bias));
  }
  return tape;
}

}  // namespace detail

/// Fixed-bias forward pass.
inline ForwardTape forward(const EncoderParams& params, const Eigen::Ref<const Vec>& y, OpCounter* counter = nullptr) {
  return detail::run_forward(params, y, nullptr, counter);
}

/// Forward pass with the biases rebuilt per sample from a recorded ADMM
/// multiplier trace.
inline ForwardTape forward_reference(const EncoderParams& params, const Eigen::Ref<const Vec>& y,
                                     const ReferenceBias& reference) {
  require(reference.bias_map.rows() == params.code_dim() && reference.bias_map.cols() == params.code_dim(),
          "forward_reference: bias map must be N x N");
  return detail::run_forward(params, y, &reference, nullptr);
}

/// Forward pass of a comparison encoder; `kind` must match the parameters.
inline Vec forward_baseline(Architecture kind, const EncoderParams& params, const Eigen::Ref<const Vec>& y) {
  require(kind != Architecture::kDeepLinf, "forward_baseline: kind must be NNH or SNNH");
  require(params.arch == kind, "forward_baseline: parameters belong to a different architecture");
  return forward(params, y).output();
}

/// Column-wise fixed-bias encoding of Y (n x M) into N x M.
inline Mat encode_batch(const EncoderParams& params, const Mat& inputs, unsigned threads = 0,
                        OpCounter* counter = nullptr) {
  require(inputs.rows() == params.input_dim(), "encode_batch: input rows must equal n");
  Mat out(params.code_dim(), inputs.cols());
  std::vector<OpCounter> counters(static_cast<std::size_t>(inputs.cols()));
  parallel_for(static_cast<std::size_t>(inputs.cols()), threads, [&](std::size_t j) {
    const auto col = static_cast<Eigen::Index>(j);
    out.col(col) = forward(params, inputs.col(col), counter ? &counters[j] : nullptr).output();
  });
  if (counter)
    for (const auto& c : counters) counter->multiply_adds += c.multiply_adds;
  return out;
}

/// 0.8 x median over calibration columns of ||x_LS||_inf.
inline double default_lambda0(const Mat& dictionary, const Mat& calibration) {
  require(calibration.cols() > 0, "default_lambda0: empty calibration set");
  const auto qr = dictionary.colPivHouseholderQr();
  std::vector<double> peaks;
  peaks.reserve(static_cast<std::size_t>(calibration.cols()));
  for (Eigen::Index j = 0; j < calibration.cols(); ++j) {
    const Vec x = qr.solve(calibration.col(j));
    peaks.push_back(x.lpNorm<Eigen::Infinity>());
  }
  std::sort(peaks.begin(), peaks.end());
  const std::size_t m = peaks.size();
  const double median = (m % 2 == 1) ? peaks[m / 2] : 0.5 * (peaks[m / 2 - 1] + peaks[m / 2]);
  if (!(median > 0.0)) throw NumericError("default_lambda0: calibration codes are all zero");
  return 0.8 * median;
}

struct EncoderInit {
  EncoderParams params;
  Mat bias_map;  // (D^T D + beta I)^{-1} - I / beta
  double lambda0 = 0.0;
};

/// Deep l-inf encoder initialized from a dictionary: W and all S_k from the
/// closed forms, b_k from the mean multiplier p_{k-1} of K truncated ADMM
/// iterations over the calibration signals. lambda0 <= 0 picks
/// default_lambda0.
inline EncoderInit init_from_dictionary(const Mat& dictionary, double beta, double lambda0, std::size_t stages,
                                        const Mat& calibration) {
  require(beta > 0.0, "init_from_dictionary: beta must be positive");
  require(stages >= 1, "init_from_dictionary: need at least one stage");
  require(calibration.cols() > 0, "init_from_dictionary: empty calibration set");
  require(calibration.rows() == dictionary.rows(), "init_from_dictionary: calibration rows must equal n");

  if (lambda0 <= 0.0) lambda0 = default_lambda0(dictionary, calibration);
  const AdmmSystem system(dictionary, beta);
  const Eigen::Index N = dictionary.cols();

  EncoderInit init;
  init.lambda0 = lambda0;
  init.bias_map = system.inverse();
  init.bias_map.diagonal().array() -= 1.0 / beta;

  auto& p = init.params;
  p.arch = Architecture::kDeepLinf;
  p.W = system.inverse() * dictionary.transpose();
  const Mat S = beta * system.inverse();
  p.S.assign(stages - 1, S);
  p.lambda = Vec::Constant(N, lambda0);

  std::vector<Vec> mean_p(stages, Vec::Zero(N));
  for (Eigen::Index j = 0; j < calibration.cols(); ++j) {
    const Vec dty = dictionary.transpose() * calibration.col(j);
    AdmmState state = AdmmState::zeros(N);
    for (std::size_t k = 1; k < stages; ++k) {
      state = detail::admm_update(dty, lambda0, state, system);
      mean_p[k] += state.p;
    }
  }
  p.b.resize(stages);
  for (std::size_t k = 0; k < stages; ++k) {
    mean_p[k] /= static_cast<double>(calibration.cols());
    p.b[k] = init.bias_map * mean_p[k];
  }
  return init;
}

inline constexpr double kDefaultInitStddev = 0.01;

/// Gaussian initialization of W and S_k with a fixed standard deviation
/// (stddev <= 0 selects fan-in scaling, 1/sqrt(n) and 1/sqrt(N)), zero
/// biases.
inline EncoderParams init_random(Architecture arch, Eigen::Index n, Eigen::Index N, std::size_t stages,
                                 double lambda0, std::uint64_t seed, double stddev = kDefaultInitStddev) {
  require(n > 0 && N > 0 && stages >= 1, "init_random: bad shape");
  require(lambda0 > 0.0, "init_random: lambda0 must be positive");
  Rng rng(seed);
  EncoderParams p;
  p.arch = arch;
  const double w_std = stddev > 0.0 ? stddev : 1.0 / std::sqrt(static_cast<double>(n));
  const double s_std = stddev > 0.0 ? stddev : 1.0 / std::sqrt(static_cast<double>(N));
  p.W = gaussian_matrix(N, n, rng, w_std);
  for (std::size_t k = 1; k < stages; ++k) p.S.push_back(gaussian_matrix(N, N, rng, s_std));
  p.b.assign(stages, Vec::Zero(N));
  p.lambda = Vec::Constant(N, lambda0);
  return p;
}

/// LISTA initialization of the SNNH encoder: W = D^T / L, S = I - D^T D / L,
/// soft thresholds lambda0 / L with L = lambda_max(D^T D).
inline EncoderParams init_lista(const Mat& dictionary, double lambda0, std::size_t stages) {
  require(stages >= 1, "init_lista: need at least one stage");
  require(lambda0 > 0.0, "init_lista: lambda0 must be positive");
  const Mat gram = dictionary.transpose() * dictionary;
  const double L = largest_eigenvalue(gram);
  const Eigen::Index N = dictionary.cols();
  EncoderParams p;
  p.arch = Architecture::kSnnh;
  p.W = dictionary.transpose() / L;
  const Mat S = Mat::Identity(N, N) - gram / L;
  p.S.assign(stages - 1, S);
  p.b.assign(stages, Vec::Zero(N));
  p.lambda = Vec::Constant(N, lambda0 / L);
  return p;
}

}  // namespace dlinf
