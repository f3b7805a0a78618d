#pragma once

// Latent intent: self-attention over the behavior sequence, then one
// cross-attention per reference item (trigger, target) whose keys and values
// are the behaviors scaled by their co-occurrence relevance to that item.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "duin/cooc_graph.hpp"
#include "duin/nn.hpp"

namespace duin {

/// Keys = values = pi-scaled behaviors. query [B,D], behaviors [B,T,D], pi [B,T], mask B*T -> [B,D].
template <class Real>
Tensor<Real> modulated_attention(const MultiHeadAttention<Real>& attention, const Tensor<Real>& query,
                                 const Tensor<Real>& behaviors, std::span<const std::uint8_t> mask,
                                 const Tensor<Real>& pi) {
  const std::size_t batch = behaviors.dim(0), len = behaviors.dim(1), width = behaviors.dim(2);
  if (pi.shape() != Shape{batch, len}) {
    throw DimensionError("relevance scores " + shape_str(pi.shape()) + " do not match behaviors " +
                         shape_str(behaviors.shape()));
  }
  if (query.shape() != Shape{batch, width}) {
    throw DimensionError("query " + shape_str(query.shape()) + " does not match behaviors " +
                         shape_str(behaviors.shape()));
  }
  auto scaled = mul(behaviors, reshape(pi, {batch, len, 1}));
  auto out = attention(reshape(query, {batch, 1, width}), scaled, scaled, mask);
  return reshape(out, {batch, width});
}

template <class Real>
class LatentIntentModule {
 public:
  LatentIntentModule() = default;
  LatentIntentModule(ParameterStore<Real>& store, std::size_t width, std::size_t heads, std::size_t bucket_dim,
                     std::size_t score_hidden, Rng& rng)
      : refine_(store, "liem.refine", width, heads, rng),
        scorer_(store, "liem.relevance", bucket_dim, score_hidden, rng),
        trigger_attention_(store, "liem.trigger_attention", width, heads, rng),
        target_attention_(store, "liem.target_attention", width, heads, rng) {}

  /// Self-attention over behaviors [B,T,D]; fully padded rows come out as zeros.
  Tensor<Real> refine(const Tensor<Real>& behaviors, std::span<const std::uint8_t> mask) const {
    return refine_(behaviors, behaviors, behaviors, mask);
  }

  /// Pi per behavior position against one reference item per sample; padded positions get 0.
  /// behaviors: B*T refs (row-major), refs: B items.
  Tensor<Real> score(const CoocGraph& graph, std::span<const ItemRef> behaviors, std::span<const std::uint8_t> mask,
                     std::span<const ItemRef> refs) const {
    const std::size_t batch = refs.size();
    if (batch == 0 || behaviors.size() % batch != 0 || mask.size() != behaviors.size()) {
      throw DimensionError("behavior/reference counts disagree");
    }
    const std::size_t len = behaviors.size() / batch;
    std::vector<RelationTriple> triples(behaviors.size());
    std::vector<Real> keep(behaviors.size());
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < len; ++t) {
        const auto i = b * len + t;
        keep[i] = mask[i] ? Real(1) : Real(0);
        if (mask[i]) triples[i] = graph.relation(behaviors[i], refs[b]);
      }
    }
    return mul(reshape(scorer_(triples), {batch, len}), Tensor<Real>({batch, len}, std::move(keep)));
  }

  struct Output {
    Tensor<Real> trigger_side;  // H_li^tr [B,D]
    Tensor<Real> target_side;   // H_li^ta [B,D]
    Tensor<Real> trigger_pi;    // [B,T]
    Tensor<Real> target_pi;     // [B,T]
  };

  /// Refine once, score against trigger and target, attend twice.
  Output latent_intents(const CoocGraph& graph, const Tensor<Real>& trigger, const Tensor<Real>& target,
                        const Tensor<Real>& behaviors, std::span<const std::uint8_t> mask,
                        std::span<const ItemRef> behavior_refs, std::span<const ItemRef> trigger_refs,
                        std::span<const ItemRef> target_refs) const {
    auto refined = refine(behaviors, mask);
    Output out;
    out.trigger_pi = score(graph, behavior_refs, mask, trigger_refs);
    out.target_pi = score(graph, behavior_refs, mask, target_refs);
    out.trigger_side = modulated_attention(trigger_attention_, trigger, refined, mask, out.trigger_pi);
    out.target_side = modulated_attention(target_attention_, target, refined, mask, out.target_pi);
    return out;
  }

  const RelevanceScorer<Real>& scorer() const { return scorer_; }
  const MultiHeadAttention<Real>& refine_attention() const { return refine_; }
  const MultiHeadAttention<Real>& trigger_attention() const { return trigger_attention_; }
  const MultiHeadAttention<Real>& target_attention() const { return target_attention_; }

 private:
  MultiHeadAttention<Real> refine_;
  RelevanceScorer<Real> scorer_;
  MultiHeadAttention<Real> trigger_attention_;
  MultiHeadAttention<Real> target_attention_;
};

}  // namespace duin
