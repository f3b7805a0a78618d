#pragma once

// Full network: explicit intent (EIEM), latent intent (LIEM), intent
// uncertainty gating (IUMM) and the prediction head.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duin/cooc_graph.hpp"
#include "duin/dataset.hpp"
#include "duin/eiem.hpp"
#include "duin/embedding.hpp"
#include "duin/iumm.hpp"
#include "duin/liem.hpp"
#include "duin/nn.hpp"

namespace duin {

struct AblationFlags {
  bool no_eiem = false;
  bool no_liem = false;
  bool no_iumm = false;
  bool no_ssl = false;
  bool sii = false;               // static intensity head in place of the Gaussian
  bool trigger_agnostic = false;  // trigger hidden from every module

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct ModelConfig {
  std::size_t dim = 16;  // per-field embedding width d; item representation is 2d
  std::size_t heads = 8;
  std::size_t seq_len = 20;
  std::size_t explicit_len = 10;
  std::size_t interaction_hidden1 = 144;
  std::size_t interaction_hidden2 = 72;
  std::size_t iumm_hidden1 = 144;
  std::size_t iumm_hidden2 = 72;
  std::size_t head_hidden1 = 200;
  std::size_t head_hidden2 = 80;
  std::size_t score_hidden = 72;
  double tau = 0.1;
  double gamma = 0.5;
  double alpha = 1.0;
  NegativeSet negatives = NegativeSet::kOtherSamples;
  GateSquash squash = GateSquash::kSigmoid;
  bool sample_at_infer = false;
  AblationFlags flags;

  std::size_t item_width() const { return 2 * dim; }
  bool ssl_active() const { return !flags.no_eiem && !flags.no_ssl && !flags.trigger_agnostic && alpha > 0; }
};

struct Vocabulary {
  std::size_t items = 2;
  std::size_t attrs = 2;
  std::size_t context = 2;
  std::size_t profile = 2;
  std::size_t context_fields = 1;
  std::size_t profile_fields = 1;
};

/// Mean BCE from probabilities (reference form; training uses logits).
inline double bce_loss(std::span<const double> probs, std::span<const float> labels) {
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += labels[i] * std::log(probs[i]) + (1 - labels[i]) * std::log(1 - probs[i]);
  }
  return -acc / static_cast<double>(probs.size());
}

template <class Real>
Tensor<Real> final_loss(const Tensor<Real>& l_ctr, const Tensor<Real>& l_ssl, Real alpha) {
  if (alpha < 0) throw ContractError("alpha must be non-negative");
  return add(l_ctr, scale(l_ssl, alpha));
}

inline double final_loss(double l_ctr, double l_ssl, double alpha) {
  if (alpha < 0) throw ContractError("alpha must be non-negative");
  return l_ctr + alpha * l_ssl;
}

template <class Real>
struct ForwardOutput {
  Tensor<Real> logits;                 // [B]
  std::optional<Tensor<Real>> l_ssl;   // present when the contrastive task ran
  Tensor<Real> explicit_intent;        // H_ei [B, 2d]
  Tensor<Real> interaction;            // H_i [B, 72]
  Tensor<Real> latent_intent;          // H_li [B, 4d]
  std::optional<IntentDistribution<Real>> intensity;
  std::vector<double> probabilities() const {
    std::vector<double> p;
    for (auto z : logits.data()) p.push_back(static_cast<double>(stable_sigmoid(z)));
    return p;
  }
};

template <class Real>
class DuinModel {
 public:
  DuinModel(const ModelConfig& cfg, const Vocabulary& vocab, std::uint64_t seed) : cfg_(cfg), vocab_(vocab) {
    Rng rng(seed);
    const std::size_t d = cfg.dim, w = cfg.item_width();
    items_ = EmbeddingTable<Real>(store_, "embedding.item", vocab.items, d, rng);
    attrs_ = EmbeddingTable<Real>(store_, "embedding.attr", vocab.attrs, d, rng);
    context_ = EmbeddingTable<Real>(store_, "embedding.context", vocab.context, d, rng);
    profile_ = EmbeddingTable<Real>(store_, "embedding.profile", vocab.profile, d, rng);
    eiem_ = ExplicitIntentModule<Real>(store_, w, cfg.explicit_len + 1, cfg.heads, cfg.interaction_hidden1,
                                       cfg.interaction_hidden2, rng);
    liem_ = LatentIntentModule<Real>(store_, w, cfg.heads, d, cfg.score_hidden, rng);
    const std::size_t x_width = w + d * (vocab.context_fields + vocab.profile_fields);
    iumm_ = IntentUncertaintyModule<Real>(store_, x_width, cfg.iumm_hidden1, cfg.iumm_hidden2, w, rng);
    if (cfg.flags.sii) sii_ = StaticIntensityHead<Real>(store_, x_width, cfg.iumm_hidden1, cfg.iumm_hidden2, rng);
    head_input_ = w + cfg.interaction_hidden2 + 2 * w + d * (vocab.context_fields + vocab.profile_fields) + w;
    head_ = Mlp<Real>(store_, "head", {head_input_, cfg.head_hidden1, cfg.head_hidden2, 1}, rng);
  }

  /// [n] item refs -> [n, 2d] (item embedding ; attribute embedding).
  Tensor<Real> item_repr(std::span<const ItemRef> refs) const {
    std::vector<std::uint32_t> item_ids, attr_ids;
    item_ids.reserve(refs.size());
    attr_ids.reserve(refs.size());
    for (const auto& r : refs) {
      item_ids.push_back(r.item);
      attr_ids.push_back(r.attr);
    }
    return concat<Real>({items_.lookup(item_ids), attrs_.lookup(attr_ids)}, 1);
  }

  /// Personalized input for the intensity heads: (E(trigger), E(context), E(profile)).
  Tensor<Real> intensity_input(const Batch& batch, const Tensor<Real>& trigger) const {
    return concat<Real>({trigger, fields(context_, batch.context, batch.size), fields(profile_, batch.profile, batch.size)}, 1);
  }

  ForwardOutput<Real> forward(const Batch& batch, Rng& rng, SampleMode mode) const {
    check_batch(batch);
    const auto& f = cfg_.flags;
    const std::size_t n = batch.size, w = cfg_.item_width();
    ForwardOutput<Real> out;

    auto trigger = item_repr(batch.triggers);
    auto target = item_repr(batch.targets);
    auto ctx = fields(context_, batch.context, n);
    auto prof = fields(profile_, batch.profile, n);

    if (!f.no_eiem) {
      const bool contrastive = mode == SampleMode::kTrain && cfg_.ssl_active();
      if (contrastive) {
        if (batch.augmented_items.size() != batch.explicit_items.size()) {
          throw ContractError("contrastive training needs augmented views in the batch");
        }
        std::vector<ItemRef> both(batch.explicit_items);
        both.insert(both.end(), batch.augmented_items.begin(), batch.augmented_items.end());
        std::vector<std::uint8_t> mask(batch.explicit_mask);
        mask.insert(mask.end(), batch.augmented_mask.begin(), batch.augmented_mask.end());
        auto encoded = eiem_.encode(reshape(item_repr(both), {2 * n, batch.explicit_len, w}), mask);
        out.explicit_intent = slice(encoded, 0, 0, n);
        out.l_ssl = ssl_loss(out.explicit_intent, slice(encoded, 0, n, 2 * n), static_cast<Real>(cfg_.tau),
                             cfg_.negatives);
      } else {
        out.explicit_intent =
            eiem_.encode(reshape(item_repr(batch.explicit_items), {n, batch.explicit_len, w}), batch.explicit_mask);
      }
      out.interaction = eiem_.interact(out.explicit_intent, target);
    } else {
      out.explicit_intent = Tensor<Real>::zeros({n, w});
      out.interaction = Tensor<Real>::zeros({n, cfg_.interaction_hidden2});
    }

    if (!f.no_liem) {
      auto behaviors = reshape(item_repr(batch.behaviors), {n, batch.seq_len, w});
      auto latent = liem_.latent_intents(*graph_, trigger, target, behaviors, batch.behavior_mask, batch.behaviors,
                                         batch.triggers, batch.targets);
      if (f.sii) {
        out.latent_intent = gate(sii_(intensity_input(batch, trigger)), latent.trigger_side, latent.target_side,
                                 cfg_.squash);
      } else if (!f.no_iumm) {
        out.intensity = iumm_.heads(intensity_input(batch, trigger));
        const auto sample_mode = cfg_.sample_at_infer ? SampleMode::kTrain : mode;
        out.latent_intent = gate(sample_intensity(*out.intensity, rng, sample_mode), latent.trigger_side,
                                 latent.target_side, cfg_.squash);
      } else {
        out.latent_intent = concat<Real>({latent.trigger_side, latent.target_side}, 1);
      }
    } else {
      out.latent_intent = Tensor<Real>::zeros({n, 2 * w});
    }

    auto features = concat<Real>({out.explicit_intent, out.interaction, out.latent_intent, ctx, prof, target}, 1);
    out.logits = reshape(head_(features), {n});
    return out;
  }

  struct Losses {
    Tensor<Real> ctr;
    std::optional<Tensor<Real>> ssl;
    Tensor<Real> total;
  };

  Losses losses(const ForwardOutput<Real>& out, std::span<const float> labels) const {
    Losses l;
    l.ctr = bce_with_logits(out.logits, labels);
    l.ssl = out.l_ssl;
    l.total = l.ssl ? final_loss(l.ctr, *l.ssl, static_cast<Real>(cfg_.alpha)) : l.ctr;
    return l;
  }

  void set_graph(const CoocGraph* graph) { graph_ = graph; }
  const CoocGraph* graph() const { return graph_; }

  ParameterStore<Real>& parameters() { return store_; }
  const ParameterStore<Real>& parameters() const { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocabulary() const { return vocab_; }
  const ExplicitIntentModule<Real>& eiem() const { return eiem_; }
  const LatentIntentModule<Real>& liem() const { return liem_; }
  const IntentUncertaintyModule<Real>& iumm() const { return iumm_; }
  const Mlp<Real>& head() const { return head_; }
  std::size_t head_input_width() const { return head_input_; }

 private:
  Tensor<Real> fields(const EmbeddingTable<Real>& table, const std::vector<std::uint32_t>& ids, std::size_t n) const {
    const std::size_t per = ids.size() / n;
    return reshape(table.lookup(ids), {n, per * table.dim()});
  }

  void check_batch(const Batch& b) const {
    auto require = [](bool ok, const std::string& slot) {
      if (!ok) throw ContractError("batch slot '" + slot + "' has inconsistent shape");
    };
    require(b.size > 0, "size");
    require(b.behaviors.size() == b.size * b.seq_len && b.behavior_mask.size() == b.behaviors.size(), "behaviors");
    require(b.seq_len == cfg_.seq_len, "seq_len");
    require(b.triggers.size() == b.size, "triggers");
    require(b.targets.size() == b.size, "targets");
    require(b.explicit_len == cfg_.explicit_len + 1 && b.explicit_items.size() == b.size * b.explicit_len, "explicit");
    require(b.context.size() == b.size * vocab_.context_fields, "context");
    require(b.profile.size() == b.size * vocab_.profile_fields, "profile");
    require(b.labels.size() == b.size, "labels");
    if (!cfg_.flags.no_liem && graph_ == nullptr) throw ContractError("latent intent module needs a co-occurrence graph");
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  ParameterStore<Real> store_;
  EmbeddingTable<Real> items_, attrs_, context_, profile_;
  ExplicitIntentModule<Real> eiem_;
  LatentIntentModule<Real> liem_;
  IntentUncertaintyModule<Real> iumm_;
  StaticIntensityHead<Real> sii_;
  Mlp<Real> head_;
  std::size_t head_input_ = 0;
  const CoocGraph* graph_ = nullptr;
};

}  // namespace duin
