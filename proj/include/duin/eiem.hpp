#pragma once

// Explicit intent: the trigger plus historical items sharing its attribute,
// encoded by a self-attention block and trained with an in-batch contrastive
// objective against a randomly masked view of the same sequence.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "duin/cooc_graph.hpp"
#include "duin/nn.hpp"

namespace duin {

/// items[0] is the trigger; the rest share its attribute, newest first.
struct ExplicitSequence {
  std::vector<ItemRef> items;
};

/// Trigger followed by the newest `l_max` behaviors whose attribute matches the trigger's.
inline ExplicitSequence extract_explicit(std::span<const ItemRef> behaviors, const ItemRef& trigger,
                                         std::size_t l_max) {
  ExplicitSequence s;
  s.items.push_back(trigger);
  for (auto it = behaviors.rbegin(); it != behaviors.rend() && s.items.size() < l_max + 1; ++it) {
    if (it->attr == trigger.attr) s.items.push_back(*it);
  }
  return s;
}

/// Masks each non-trigger position independently with probability gamma.
/// Masked positions become padding; the trigger is never masked.
inline ExplicitSequence augment(const ExplicitSequence& s, double gamma, Rng& rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ContractError("mask probability must lie in [0,1]");
  std::bernoulli_distribution drop(gamma);
  ExplicitSequence out = s;
  for (std::size_t i = 1; i < out.items.size(); ++i) {
    if (drop(rng)) out.items[i] = ItemRef{};
  }
  return out;
}

/// Which in-batch views count as negatives for an anchor.
enum class NegativeSet {
  kOtherSamples,   // the 2(B-1) anchors and positives of other samples
  kAllOtherViews,  // every view except the anchor itself (2B-1 terms, own positive included)
};

inline std::size_t negative_count(NegativeSet mode, std::size_t batch) {
  return mode == NegativeSet::kOtherSamples ? 2 * batch - 2 : 2 * batch - 1;
}

template <class Real>
Tensor<Real> l2_normalize_rows(const Tensor<Real>& x) {
  auto norm = sqrt(add_scalar(sum(mul(x, x), 1), Real(1e-12)));
  return div(x, reshape(norm, {x.dim(0), 1}));
}

/// InfoNCE over cosine similarities: mean over anchors of
/// -log(exp(s+/tau) / (exp(s+/tau) + sum_neg exp(s-/tau))).
template <class Real>
Tensor<Real> ssl_loss(const Tensor<Real>& anchors, const Tensor<Real>& positives, Real tau,
                      NegativeSet negatives = NegativeSet::kOtherSamples) {
  if (anchors.rank() != 2 || anchors.shape() != positives.shape()) {
    throw DimensionError("ssl_loss expects matching [B,d] views, got " + shape_str(anchors.shape()) + " and " +
                         shape_str(positives.shape()));
  }
  const std::size_t batch = anchors.dim(0);
  if (batch < 2) throw ContractError("ssl_loss needs a batch of at least 2 (no negatives otherwise)");
  if (!(tau > 0)) throw ContractError("temperature must be positive");

  auto a = l2_normalize_rows(anchors);
  auto views = concat<Real>({a, l2_normalize_rows(positives)}, 0);  // [2B, d]
  auto logits = scale(matmul(a, transpose(views)), Real(1) / tau);  // [B, 2B]

  // Column j < B is anchor j, column B+j is positive j. Each row's candidates are
  // its positive (prepended) followed by the columns of its negative set; excluded
  // columns get a large negative offset so they vanish from the softmax.
  const std::size_t cols = 2 * batch;
  std::vector<Real> offset(batch * cols, Real(0));
  std::vector<Real> pick(batch * cols, Real(0));
  for (std::size_t i = 0; i < batch; ++i) {
    offset[i * cols + i] = Real(-1e9);
    if (negatives == NegativeSet::kOtherSamples) offset[i * cols + batch + i] = Real(-1e9);
    pick[i * cols + batch + i] = Real(1);
  }
  auto positive = reshape(sum(mul(logits, Tensor<Real>({batch, cols}, std::move(pick))), 1), {batch, 1});
  auto candidates = concat<Real>({positive, add(logits, Tensor<Real>({batch, cols}, std::move(offset)))}, 1);
  return scale(sum(slice(log_softmax(candidates, 1), 1, 0, 1)), Real(-1) / static_cast<Real>(batch));
}

/// Explicit-intent encoder and target feature interaction.
template <class Real>
class ExplicitIntentModule {
 public:
  ExplicitIntentModule() = default;
  ExplicitIntentModule(ParameterStore<Real>& store, std::size_t width, std::size_t max_len, std::size_t heads,
                       std::size_t hidden1, std::size_t hidden2, Rng& rng)
      : width_(width),
        max_len_(max_len),
        positions_(store.uniform("eiem.position", {max_len, width}, 1.0 / std::sqrt(static_cast<double>(width)), rng)),
        attention_(store, "eiem.attention", width, heads, rng),
        ffn_in_(store, "eiem.ffn_in", width, width, rng),
        ffn_out_(store, "eiem.ffn_out", width, width, rng),
        interaction_(store, "eiem.interaction", {4 * width, hidden1, hidden2}, rng, true) {}

  /// embedded [B, L, D] with L <= max_len, mask B*L -> H_ei [B, D].
  Tensor<Real> encode(const Tensor<Real>& embedded, std::span<const std::uint8_t> mask) const {
    const std::size_t batch = embedded.dim(0), len = embedded.dim(1);
    if (len > max_len_ || embedded.dim(2) != width_) {
      throw DimensionError("explicit sequence " + shape_str(embedded.shape()) + " exceeds encoder capacity");
    }
    auto x = add(embedded, len == max_len_ ? positions_ : slice(positions_, 0, 0, len));
    auto h = add(x, attention_(x, x, x, mask));
    auto y = add(h, ffn_out_(relu(ffn_in_(h))));
    std::vector<Real> weights(batch * len, Real(0));
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t count = 0;
      for (std::size_t t = 0; t < len; ++t) count += mask[b * len + t] ? 1 : 0;
      for (std::size_t t = 0; t < len; ++t) {
        if (mask[b * len + t]) weights[b * len + t] = Real(1) / static_cast<Real>(count);
      }
    }
    return sum(mul(y, Tensor<Real>({batch, len, 1}, std::move(weights))), 1);
  }

  /// H_i = MLP(H_ei, e_ta, H_ei * e_ta, H_ei - e_ta).
  Tensor<Real> interact(const Tensor<Real>& explicit_intent, const Tensor<Real>& target) const {
    if (explicit_intent.shape() != target.shape()) {
      throw DimensionError("interaction inputs differ: " + shape_str(explicit_intent.shape()) + " vs " +
                           shape_str(target.shape()));
    }
    return interaction_(concat<Real>(
        {explicit_intent, target, mul(explicit_intent, target), sub(explicit_intent, target)}, 1));
  }

  std::size_t max_len() const { return max_len_; }
  std::size_t out_features() const { return interaction_.out_features(); }
  const Mlp<Real>& interaction() const { return interaction_; }

 private:
  std::size_t width_ = 0;
  std::size_t max_len_ = 0;
  Tensor<Real> positions_;
  MultiHeadAttention<Real> attention_;
  Linear<Real> ffn_in_;
  Linear<Real> ffn_out_;
  Mlp<Real> interaction_;
};

}  // namespace duin
