#pragma once

// Siamese training: contrastive pair loss, backpropagation through the
// unfolded encoders, and plain minibatch SGD.

#include "dlinf/common.hpp"
#include "dlinf/encoder.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

namespace dlinf {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  double momentum = 0.0;  // fixed; nonzero values are rejected
  double margin = 5.0;
  std::size_t epochs = 50;
  std::size_t pairs_per_epoch = 0;  // 0 = dataset size
  std::uint64_t seed = 0;
  unsigned threads = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (!(margin > 0.0)) throw ConfigError("train: margin must be positive");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (momentum != 0.0) throw ConfigError("train: momentum is not supported (must be 0)");
  }
};

struct PairBatch {
  Mat anchors;  // n x B
  Mat others;   // n x B
  std::vector<bool> similar;

  std::size_t size() const { return similar.size(); }

  void validate() const {
    require(anchors.rows() == others.rows() && anchors.cols() == others.cols(), "PairBatch: shape mismatch");
    require(static_cast<std::size_t>(anchors.cols()) == similar.size(), "PairBatch: flag count mismatch");
    require(!similar.empty(), "PairBatch: empty batch");
  }
};

struct Gradients {
  Mat dW;
  std::vector<Mat> dS;
  std::vector<Vec> db;
  Vec dlambda;

  static Gradients zeros_like(const EncoderParams& p) {
    Gradients g;
    g.dW = Mat::Zero(p.W.rows(), p.W.cols());
    for (const auto& s : p.S) g.dS.push_back(Mat::Zero(s.rows(), s.cols()));
    for (const auto& v : p.b) g.db.push_back(Vec::Zero(v.size()));
    g.dlambda = Vec::Zero(p.lambda.size());
    return g;
  }

  Gradients& operator+=(const Gradients& o) {
    dW += o.dW;
    for (std::size_t k = 0; k < dS.size(); ++k) dS[k] += o.dS[k];
    for (std::size_t k = 0; k < db.size(); ++k) db[k] += o.db[k];
    dlambda += o.dlambda;
    return *this;
  }

  Gradients& operator*=(double s) {
    dW *= s;
    for (auto& m : dS) m *= s;
    for (auto& v : db) v *= s;
    dlambda *= s;
    return *this;
  }

  bool all_finite() const {
    if (!dW.allFinite() || !dlambda.allFinite()) return false;
    for (const auto& m : dS)
      if (!m.allFinite()) return false;
    for (const auto& v : db)
      if (!v.allFinite()) return false;
    return true;
  }

  double max_abs() const {
    double m = std::max(dW.cwiseAbs().maxCoeff(), dlambda.cwiseAbs().maxCoeff());
    for (const auto& s : dS) m = std::max(m, s.cwiseAbs().maxCoeff());
    for (const auto& v : db) m = std::max(m, v.cwiseAbs().maxCoeff());
    return m;
  }
};

/// Contrastive loss of one pair: 1/2 d^2 when similar, 1/2 max(0, m - d)^2
/// when dissimilar, with d = ||xa - xb||_2.
inline double pairwise_loss(const Eigen::Ref<const Vec>& xa, const Eigen::Ref<const Vec>& xb, bool similar,
                            double margin) {
  require(xa.size() == xb.size(), "pairwise_loss: length mismatch");
  const double d = (xa - xb).norm();
  if (similar) return 0.5 * d * d;
  const double gap = std::max(0.0, margin - d);
  return 0.5 * gap * gap;
}

namespace detail {

// dL/dz_K -> accumulate parameter gradients for one column.
inline void backprop_column(const EncoderParams& params, const ForwardTape& tape, Vec grad_out, Gradients& grads) {
  const std::size_t K = params.stages();
  const bool input_every_stage = params.arch != Architecture::kNnh;
  Vec grad_input_proj = Vec::Zero(params.code_dim());  // dL/d(W y)

  for (std::size_t kk = K; kk-- > 0;) {
    const Vec& u = tape.pre[kk];
    const Vec& z = tape.post[kk];
    Vec grad_u(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double g = grad_out[i];
      const double lam = params.lambda[i];
      const double sgn = u[i] < 0.0 ? -1.0 : 1.0;
      switch (params.arch) {
        case Architecture::kDeepLinf: {
          // Inside the box, and on its boundary, BLU passes the gradient.
          const double a = std::abs(u[i]);
          grad_u[i] = a <= lam ? g : 0.0;
          if (a >= lam) grads.dlambda[i] += g * sgn;
          break;
        }
        case Architecture::kSnnh:
          if (std::abs(u[i]) > lam) {
            grad_u[i] = g;
            grads.dlambda[i] -= g * sgn;
          } else {
            grad_u[i] = 0.0;
          }
          break;
        case Architecture::kNnh:
          grad_u[i] = g * (1.0 - z[i] * z[i]);
          break;
      }
    }
    grads.db[kk] += grad_u;
    if (kk == 0 || input_every_stage) grad_input_proj += grad_u;
    if (kk > 0) {
      grads.dS[kk - 1].noalias() += grad_u * tape.post[kk - 1].transpose();
      grad_out = params.S[kk - 1].transpose() * grad_u;
    }
  }
  grads.dW.noalias() += grad_input_proj * tape.input.transpose();
}

inline void check_tape(const EncoderParams& params, const ForwardTape& tape) {
  require(tape.pre.size() == params.stages() && tape.post.size() == params.stages(),
          "backward: tape stage count does not match parameters");
  require(tape.input.size() == params.input_dim(), "backward: tape input length does not match parameters");
  for (std::size_t k = 0; k < tape.pre.size(); ++k)
    require(tape.pre[k].size() == params.code_dim() && tape.post[k].size() == params.code_dim(),
            "backward: tape activation length does not match parameters");
}

}  // namespace detail

/// Exact (sub)gradient of pairwise_loss for one siamese pair. Both columns
/// share the parameters, so their contributions add.
inline Gradients backward(const EncoderParams& params, const ForwardTape& tape_a, const ForwardTape& tape_b,
                          bool similar, double margin) {
  detail::check_tape(params, tape_a);
  detail::check_tape(params, tape_b);
  Gradients grads = Gradients::zeros_like(params);

  const Vec diff = tape_a.output() - tape_b.output();
  Vec grad_a;
  if (similar) {
    grad_a = diff;
  } else {
    const double d = diff.norm();
    // At d == 0 the hinge has no descent direction; use the zero subgradient.
    if (d >= margin || d == 0.0) return grads;
    grad_a = -(margin - d) / d * diff;
  }
  detail::backprop_column(params, tape_a, grad_a, grads);
  detail::backprop_column(params, tape_b, -grad_a, grads);
  return grads;
}

/// Loss of one pair evaluated through the encoder.
inline double pair_loss(const EncoderParams& params, const Eigen::Ref<const Vec>& ya,
                        const Eigen::Ref<const Vec>& yb, bool similar, double margin) {
  return pairwise_loss(forward(params, ya).output(), forward(params, yb).output(), similar, margin);
}

struct BatchResult {
  Gradients grads;  // of the mean loss
  double mean_loss = 0.0;
};

/// Mean loss and gradient over a batch; per-pair work may run in parallel,
/// the reduction is in pair order.
inline BatchResult batch_gradients(const EncoderParams& params, const PairBatch& batch, double margin,
                                   unsigned threads = 0) {
  batch.validate();
  const std::size_t B = batch.size();
  std::vector<Gradients> per_pair(B);
  std::vector<double> losses(B, 0.0);
  parallel_for(B, threads, [&](std::size_t i) {
    const auto c = static_cast<Eigen::Index>(i);
    const ForwardTape ta = forward(params, batch.anchors.col(c));
    const ForwardTape tb = forward(params, batch.others.col(c));
    losses[i] = pairwise_loss(ta.output(), tb.output(), batch.similar[i], margin);
    per_pair[i] = backward(params, ta, tb, batch.similar[i], margin);
  });
  BatchResult out{Gradients::zeros_like(params), 0.0};
  for (std::size_t i = 0; i < B; ++i) {
    out.grads += per_pair[i];
    out.mean_loss += losses[i];
  }
  const double inv = 1.0 / static_cast<double>(B);
  out.grads *= inv;
  out.mean_loss *= inv;
  return out;
}

inline constexpr double kLambdaFloor = 1e-6;

/// params - lr * grads, then lambda clamped to at least kLambdaFloor.
inline EncoderParams sgd_step(const EncoderParams& params, const Gradients& grads, double lr) {
  require(grads.dW.rows() == params.W.rows() && grads.dW.cols() == params.W.cols() &&
              grads.dS.size() == params.S.size() && grads.db.size() == params.b.size() &&
              grads.dlambda.size() == params.lambda.size(),
          "sgd_step: gradient shape mismatch");
  if (!grads.all_finite()) {
    std::ostringstream msg;
    msg << "sgd_step: non-finite gradient (lr=" << lr << ", W " << params.W.rows() << "x" << params.W.cols()
        << ", stages " << params.stages() << ")";
    throw NumericError(msg.str());
  }
  EncoderParams next = params;
  next.W -= lr * grads.dW;
  for (std::size_t k = 0; k < next.S.size(); ++k) next.S[k] -= lr * grads.dS[k];
  for (std::size_t k = 0; k < next.b.size(); ++k) next.b[k] -= lr * grads.db[k];
  next.lambda -= lr * grads.dlambda;
  next.lambda = next.lambda.cwiseMax(kLambdaFloor);
  return next;
}

struct IndexPair {
  std::size_t i = 0;
  std::size_t j = 0;
  bool similar = false;
};

/// Features (n x M) with either class labels or an explicit pair list.
struct LabeledSet {
  Mat features;
  std::vector<int> labels;
  std::vector<IndexPair> pairs;
};

/// Draws batches of B/2 similar and B - B/2 dissimilar pairs uniformly from
/// label-derived (or listed) pools.
class PairSampler {
 public:
  explicit PairSampler(const LabeledSet& data) : data_(data) {
    const std::size_t M = static_cast<std::size_t>(data.features.cols());
    if (M == 0) throw ConfigError("training data is empty");
    if (!data.pairs.empty()) {
      for (std::size_t k = 0; k < data.pairs.size(); ++k) {
        const auto& pr = data.pairs[k];
        if (pr.i >= M || pr.j >= M) throw ConfigError("pair list references an index outside the data");
        (pr.similar ? similar_pairs_ : dissimilar_pairs_).push_back(k);
      }
      if (similar_pairs_.empty() || dissimilar_pairs_.empty())
        throw ConfigError("pair list needs both similar and dissimilar pairs");
      return;
    }
    if (data.labels.size() != M) throw ConfigError("label count does not match sample count");
    std::vector<int> classes = data.labels;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) throw ConfigError("training data has a single class: no dissimilar pairs");
    members_.resize(classes.size());
    class_of_.resize(M);
    for (std::size_t s = 0; s < M; ++s) {
      const auto c = static_cast<std::size_t>(
          std::lower_bound(classes.begin(), classes.end(), data.labels[s]) - classes.begin());
      class_of_[s] = c;
      members_[c].push_back(s);
    }
    for (std::size_t s = 0; s < M; ++s)
      if (members_[class_of_[s]].size() >= 2) similar_anchors_.push_back(s);
    if (similar_anchors_.empty()) throw ConfigError("no class has two members: no similar pairs");
  }

  std::vector<IndexPair> sample(std::size_t count, Rng& rng) const {
    std::vector<IndexPair> out;
    out.reserve(count);
    const std::size_t n_similar = count / 2;
    for (std::size_t k = 0; k < count; ++k) out.push_back(draw(k < n_similar, rng));
    return out;
  }

 private:
  static std::size_t uniform(std::size_t n, Rng& rng) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }

  IndexPair draw(bool similar, Rng& rng) const {
    if (!data_.pairs.empty()) {
      const auto& pool = similar ? similar_pairs_ : dissimilar_pairs_;
      return data_.pairs[pool[uniform(pool.size(), rng)]];
    }
    const std::size_t M = class_of_.size();
    if (similar) {
      const std::size_t a = similar_anchors_[uniform(similar_anchors_.size(), rng)];
      const auto& same = members_[class_of_[a]];
      std::size_t b = same[uniform(same.size() - 1, rng)];
      if (b == a) b = same.back();
      return {a, b, true};
    }
    const std::size_t a = uniform(M, rng);
    const std::size_t others = M - members_[class_of_[a]].size();
    // Rank among samples outside a's class, mapped back to an index.
    std::size_t r = uniform(others, rng);
    for (std::size_t s = 0; s < M; ++s) {
      if (class_of_[s] == class_of_[a]) continue;
      if (r-- == 0) return {a, s, false};
    }
    return {a, a, false};
  }

  const LabeledSet& data_;
  std::vector<std::size_t> class_of_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> similar_anchors_;
  std::vector<std::size_t> similar_pairs_;
  std::vector<std::size_t> dissimilar_pairs_;
};

inline PairBatch make_batch(const Mat& features, const std::vector<IndexPair>& pairs) {
  PairBatch batch;
  const auto B = static_cast<Eigen::Index>(pairs.size());
  batch.anchors.resize(features.rows(), B);
  batch.others.resize(features.rows(), B);
  for (Eigen::Index c = 0; c < B; ++c) {
    const auto& pr = pairs[static_cast<std::size_t>(c)];
    batch.anchors.col(c) = features.col(static_cast<Eigen::Index>(pr.i));
    batch.others.col(c) = features.col(static_cast<Eigen::Index>(pr.j));
    batch.similar.push_back(pr.similar);
  }
  return batch;
}

struct TrainResult {
  EncoderParams params;
  std::vector<double> epoch_loss;  // mean pair loss seen during each epoch
};

/// Shuffled minibatch SGD over sampled pairs.
inline TrainResult train_siamese(const LabeledSet& data, const TrainConfig& config, const EncoderParams& init) {
  config.validate();
  init.validate();
  if (data.features.rows() != init.input_dim()) throw ConfigError("training features do not match encoder input size");
  const PairSampler sampler(data);
  const std::size_t per_epoch =
      config.pairs_per_epoch > 0 ? config.pairs_per_epoch : static_cast<std::size_t>(data.features.cols());

  Rng rng(config.seed);
  TrainResult result{init, {}};
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t seen = 0;
    while (seen < per_epoch) {
      const std::size_t B = std::min(config.batch_size, per_epoch - seen);
      auto pairs = sampler.sample(B, rng);
      std::shuffle(pairs.begin(), pairs.end(), rng);
      const BatchResult br = batch_gradients(result.params, make_batch(data.features, pairs), config.margin,
                                             config.threads);
      loss_sum += br.mean_loss * static_cast<double>(B);
      seen += B;
      result.params = sgd_step(result.params, br.grads, config.learning_rate);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  return result;
}

}  // namespace dlinf
