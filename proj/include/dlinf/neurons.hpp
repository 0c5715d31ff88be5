#pragma once

#include "dlinf/common.hpp"

#include <cmath>
#include <string_view>

namespace dlinf {

enum class NeuronKind { kBlu, kTanh, kRelu, kShelu, kHelu };

inline std::string_view to_string(NeuronKind kind) {
  switch (kind) {
    case NeuronKind::kBlu: return "blu";
    case NeuronKind::kTanh: return "tanh";
    case NeuronKind::kRelu: return "relu";
    case NeuronKind::kShelu: return "shelu";
    case NeuronKind::kHelu: return "helu";
  }
  return "unknown";
}

/// Unit-threshold forms. Per-element thresholds come from wrapping these in
/// the diagonal scalings lambda_i * f(u_i / lambda_i).
inline double neuron_apply(NeuronKind kind, double u) {
  switch (kind) {
    case NeuronKind::kBlu: return std::min(std::max(u, -1.0), 1.0);
    case NeuronKind::kTanh: return std::tanh(u);
    case NeuronKind::kRelu: return std::max(u, 0.0);
    case NeuronKind::kShelu: {
      const double mag = std::max(std::abs(u) - 1.0, 0.0);
      return u < 0.0 ? -mag : mag;
    }
    case NeuronKind::kHelu: return std::abs(u) <= 1.0 ? 0.0 : u;
  }
  return u;
}

/// Bounded linear unit with per-element bounds, computed as scale by
/// 1/lambda_i, unit clip, scale by lambda_i.
inline Vec blu(const Eigen::Ref<const Vec>& u, const Eigen::Ref<const Vec>& lambda) {
  require(u.size() == lambda.size(), "blu: size mismatch");
  require((lambda.array() > 0.0).all(), "blu: bounds must be positive");
  Vec out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i)
    out[i] = lambda[i] * neuron_apply(NeuronKind::kBlu, u[i] / lambda[i]);
  return out;
}

/// Soft threshold at lambda_i through the same scaling decomposition.
inline Vec scaled_shelu(const Eigen::Ref<const Vec>& u, const Eigen::Ref<const Vec>& lambda) {
  require(u.size() == lambda.size(), "scaled_shelu: size mismatch");
  require((lambda.array() > 0.0).all(), "scaled_shelu: thresholds must be positive");
  Vec out(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i)
    out[i] = lambda[i] * neuron_apply(NeuronKind::kShelu, u[i] / lambda[i]);
  return out;
}

}  // namespace dlinf
