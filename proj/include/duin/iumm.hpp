#pragma once

// Intent intensity as a diagonal Gaussian over personalized inputs, sampled with
// the reparameterization trick and used to gate trigger-side vs target-side
// latent intent.

#include <cstdint>
#include <random>
#include <vector>

#include "duin/nn.hpp"

namespace duin {

template <class Real>
struct IntentDistribution {
  Tensor<Real> mu;     // [B, d_z]
  Tensor<Real> sigma;  // [B, d_z], variance, > 0
};

enum class SampleMode { kTrain, kInfer };

/// How the unbounded sample becomes a mixing weight in [0,1].
enum class GateSquash { kSigmoid, kClamp };

template <class Real>
Tensor<Real> clamp01(const Tensor<Real>& x) {
  return detail::unary_op<Real>(
      x, [](Real v) { return std::clamp(v, Real(0), Real(1)); },
      [](Real v, Real) { return (v > Real(0) && v < Real(1)) ? Real(1) : Real(0); });
}

/// z_raw = mu + sqrt(sigma) * eps. `noise` must have mu's shape; infer mode returns mu.
template <class Real>
Tensor<Real> sample_intensity(const IntentDistribution<Real>& d, const Tensor<Real>& noise, SampleMode mode) {
  if (mode == SampleMode::kInfer) return d.mu;
  if (noise.shape() != d.mu.shape()) {
    throw DimensionError("noise " + shape_str(noise.shape()) + " vs mu " + shape_str(d.mu.shape()));
  }
  return add(d.mu, mul(sqrt(d.sigma), noise));
}

template <class Real>
Tensor<Real> sample_intensity(const IntentDistribution<Real>& d, Rng& rng, SampleMode mode) {
  if (mode == SampleMode::kInfer) return d.mu;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Real> eps(d.mu.size());
  for (auto& e : eps) e = static_cast<Real>(normal(rng));
  return sample_intensity(d, Tensor<Real>(d.mu.shape(), std::move(eps)), mode);
}

/// (z * H_tr ; (1 - z) * H_ta) with z = squash(z_raw); output [B, 2D].
template <class Real>
Tensor<Real> gate(const Tensor<Real>& z_raw, const Tensor<Real>& trigger_side, const Tensor<Real>& target_side,
                  GateSquash squash = GateSquash::kSigmoid) {
  if (trigger_side.shape() != target_side.shape() || trigger_side.rank() != 2) {
    throw ContractError("gate inputs differ: " + shape_str(trigger_side.shape()) + " vs " +
                        shape_str(target_side.shape()));
  }
  const bool vector_gate = z_raw.shape() == trigger_side.shape();
  const bool scalar_gate = z_raw.shape() == Shape{trigger_side.dim(0), 1};
  if (!vector_gate && !scalar_gate) {
    throw ContractError("gate width " + shape_str(z_raw.shape()) + " does not match latent intent " +
                        shape_str(trigger_side.shape()));
  }
  auto z = squash == GateSquash::kSigmoid ? sigmoid(z_raw) : clamp01(z_raw);
  return concat<Real>({mul(trigger_side, z), mul(target_side, one_minus(z))}, 1);
}

/// Two parameter-disjoint networks producing mu and sigma = softplus(.).
template <class Real>
class IntentUncertaintyModule {
 public:
  IntentUncertaintyModule() = default;
  IntentUncertaintyModule(ParameterStore<Real>& store, std::size_t in, std::size_t hidden1, std::size_t hidden2,
                          std::size_t out, Rng& rng)
      : mu_net_(store, "iumm.mu", {in, hidden1, hidden2, out}, rng),
        sigma_net_(store, "iumm.sigma", {in, hidden1, hidden2, out}, rng) {}

  IntentDistribution<Real> heads(const Tensor<Real>& x) const { return {mu_net_(x), softplus(sigma_net_(x))}; }

  const Mlp<Real>& mu_net() const { return mu_net_; }
  const Mlp<Real>& sigma_net() const { return sigma_net_; }

 private:
  Mlp<Real> mu_net_;
  Mlp<Real> sigma_net_;
};

/// Static intensity: one deterministic scalar per sample, broadcast over the latent width.
template <class Real>
class StaticIntensityHead {
 public:
  StaticIntensityHead() = default;
  StaticIntensityHead(ParameterStore<Real>& store, std::size_t in, std::size_t hidden1, std::size_t hidden2, Rng& rng)
      : net_(store, "sii.head", {in, hidden1, hidden2, 1}, rng) {}

  Tensor<Real> operator()(const Tensor<Real>& x) const { return net_(x); }

 private:
  Mlp<Real> net_;
};

}  // namespace duin
