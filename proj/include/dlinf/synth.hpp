#pragma once

// Seeded synthetic datasets.

#include "dlinf/common.hpp"
#include "dlinf/dictionary.hpp"

#include <cmath>
#include <vector>

namespace dlinf::synth {

struct ClusterParams {
  Eigen::Index dim = 32;
  std::size_t count = 900;
  std::size_t classes = 2;
  double separation = 10.0;  // center distance in units of sigma
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

struct Labeled {
  Mat features;  // dim x count
  std::vector<int> labels;
};

/// Isotropic Gaussian blobs. Two classes sit at +-separation/2 along a random
/// unit direction; more classes get random unit directions scaled by
/// separation / sqrt(2), so centers are about `separation` apart. Labels are
/// assigned round-robin.
inline Labeled clusters(const ClusterParams& p) {
  if (p.count == 0) throw ConfigError("synth clusters: count must be > 0");
  if (p.dim < 1) throw ConfigError("synth clusters: dim must be >= 1");
  if (p.classes < 1) throw ConfigError("synth clusters: classes must be >= 1");
  if (!(p.sigma > 0.0) || p.separation < 0.0) throw ConfigError("synth clusters: need sigma > 0 and separation >= 0");

  Rng rng(p.seed);
  Mat centers(p.dim, static_cast<Eigen::Index>(p.classes));
  if (p.classes == 2) {
    Vec dir = gaussian_vector(p.dim, rng);
    dir.normalize();
    centers.col(0) = 0.5 * p.separation * p.sigma * dir;
    centers.col(1) = -centers.col(0);
  } else {
    for (Eigen::Index c = 0; c < centers.cols(); ++c) {
      Vec dir = gaussian_vector(p.dim, rng);
      dir.normalize();
      centers.col(c) = p.separation * p.sigma / std::sqrt(2.0) * dir;
    }
  }
  Labeled out;
  out.features.resize(p.dim, static_cast<Eigen::Index>(p.count));
  out.labels.resize(p.count);
  for (std::size_t s = 0; s < p.count; ++s) {
    const auto c = static_cast<Eigen::Index>(s % p.classes);
    out.labels[s] = static_cast<int>(c);
    out.features.col(static_cast<Eigen::Index>(s)) = centers.col(c) + gaussian_vector(p.dim, rng, p.sigma);
  }
  return out;
}

struct FrameParams {
  Eigen::Index dim = 16;
  Eigen::Index atoms = 8;
  std::size_t count = 200;
  Eigen::Index sparsity = 1;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

struct FrameData {
  Mat signals;     // dim x count
  Mat dictionary;  // hidden, dim x atoms, unit columns
  Mat codes;       // atoms x count
};

/// Signals D0 * c with `sparsity` Gaussian nonzeros per code (uniform random
/// support) plus optional Gaussian noise.
inline FrameData frame_recovery(const FrameParams& p) {
  if (p.count == 0) throw ConfigError("synth frame-recovery: count must be > 0");
  if (p.atoms < 1 || p.atoms > p.dim) throw ConfigError("synth frame-recovery: need 1 <= atoms <= dim");
  if (p.sparsity < 1 || p.sparsity > p.atoms) throw ConfigError("synth frame-recovery: need 1 <= sparsity <= atoms");
  Rng rng(p.seed);
  FrameData out;
  out.dictionary = gaussian_matrix(p.dim, p.atoms, rng);
  normalize_columns(out.dictionary);
  out.codes = Mat::Zero(p.atoms, static_cast<Eigen::Index>(p.count));
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(p.atoms));
  std::normal_distribution<double> normal;
  for (Eigen::Index s = 0; s < out.codes.cols(); ++s) {
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Eigen::Index k = 0; k < p.sparsity; ++k) {
      double v = normal(rng);
      v += v < 0.0 ? -0.5 : 0.5;  // keep magnitudes away from zero
      out.codes(idx[static_cast<std::size_t>(k)], s) = v;
    }
  }
  out.signals = out.dictionary * out.codes;
  if (p.noise > 0.0) out.signals += gaussian_matrix(p.dim, out.signals.cols(), rng, p.noise);
  return out;
}

}  // namespace dlinf::synth
