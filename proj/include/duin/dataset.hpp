#pragma once

// Raw samples -> dense ids -> padded mini-batches.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "duin/data.hpp"
#include "duin/eiem.hpp"
#include "duin/embedding.hpp"

namespace duin {

struct Vocabs {
  FeatureVocab items;
  FeatureVocab attrs;
  FeatureVocab context;
  FeatureVocab profile;

  void save(const std::string& dir) const {
    items.save(dir + "/items.vocab");
    attrs.save(dir + "/attrs.vocab");
    context.save(dir + "/context.vocab");
    profile.save(dir + "/profile.vocab");
  }

  static Vocabs load(const std::string& dir) {
    return {FeatureVocab::load(dir + "/items.vocab"), FeatureVocab::load(dir + "/attrs.vocab"),
            FeatureVocab::load(dir + "/context.vocab"), FeatureVocab::load(dir + "/profile.vocab")};
  }
};

/// Vocabularies over the training split; anything unseen later maps to the unknown id.
inline Vocabs build_vocabs(const std::vector<InteractionSample>& train) {
  Vocabs v;
  auto add_item = [&](const RawItem& r) {
    v.items.add(r.item);
    v.attrs.add(r.attr);
  };
  for (const auto& s : train) {
    for (const auto& b : s.behaviors) add_item(b);
    add_item(s.trigger);
    add_item(s.target);
    for (const auto& c : s.context) v.context.add(c);
    for (const auto& p : s.profile) v.profile.add(p);
  }
  return v;
}

/// Adds items/attributes from graph sequences so graph ids and embedding ids agree.
inline void extend_vocabs(Vocabs& v, const std::vector<std::vector<RawItem>>& sequences) {
  for (const auto& seq : sequences) {
    for (const auto& r : seq) {
      v.items.add(r.item);
      v.attrs.add(r.attr);
    }
  }
}

inline ItemRef encode_item(const Vocabs& v, const RawItem& r) { return {v.items.id(r.item), v.attrs.id(r.attr)}; }

inline std::vector<ItemSequence> encode_sequences(const Vocabs& v, const std::vector<std::vector<RawItem>>& raw) {
  std::vector<ItemSequence> out;
  out.reserve(raw.size());
  for (const auto& seq : raw) {
    ItemSequence s;
    for (const auto& r : seq) s.push_back(encode_item(v, r));
    out.push_back(std::move(s));
  }
  return out;
}

struct EncodedSample {
  std::int64_t ts = 0;
  ItemRef trigger;
  ItemRef target;
  std::vector<ItemRef> behaviors;  // oldest first
  std::vector<std::uint32_t> context;
  std::vector<std::uint32_t> profile;
  float label = 0;
  bool same_attribute = false;  // target shares the trigger's attribute
};

struct EncodedDataset {
  std::vector<EncodedSample> samples;
  std::size_t context_fields = 0;
  std::size_t profile_fields = 0;

  std::vector<float> labels() const {
    std::vector<float> y;
    y.reserve(samples.size());
    for (const auto& s : samples) y.push_back(s.label);
    return y;
  }
};

inline EncodedDataset encode_samples(const std::vector<InteractionSample>& raw, const Vocabs& v,
                                     std::size_t context_fields, std::size_t profile_fields) {
  EncodedDataset ds;
  ds.context_fields = context_fields;
  ds.profile_fields = profile_fields;
  ds.samples.reserve(raw.size());
  for (const auto& s : raw) {
    EncodedSample e;
    e.ts = s.ts;
    e.trigger = encode_item(v, s.trigger);
    e.target = encode_item(v, s.target);
    for (const auto& b : s.behaviors) e.behaviors.push_back(encode_item(v, b));
    e.context.assign(context_fields, kPaddingId);
    for (std::size_t i = 0; i < std::min(context_fields, s.context.size()); ++i) e.context[i] = v.context.id(s.context[i]);
    e.profile.assign(profile_fields, kPaddingId);
    for (std::size_t i = 0; i < std::min(profile_fields, s.profile.size()); ++i) e.profile[i] = v.profile.id(s.profile[i]);
    e.label = static_cast<float>(s.label);
    e.same_attribute = s.target.attr == s.trigger.attr;
    ds.samples.push_back(std::move(e));
  }
  return ds;
}

inline std::size_t max_field_count(const std::vector<InteractionSample>& raw, bool context) {
  std::size_t n = 0;
  for (const auto& s : raw) n = std::max(n, context ? s.context.size() : s.profile.size());
  return n;
}

struct BatchOptions {
  std::size_t seq_len = 20;        // T
  std::size_t explicit_len = 10;   // L_max
  double mask_prob = 0.5;          // gamma
  bool augment = false;            // build the masked view for the contrastive task
  bool trigger_agnostic = false;   // hide the trigger everywhere
};

struct Batch {
  std::size_t size = 0;
  std::size_t seq_len = 0;
  std::size_t explicit_len = 0;  // 1 + L_max
  std::size_t context_fields = 0;
  std::size_t profile_fields = 0;
  std::vector<ItemRef> behaviors;  // size*seq_len
  std::vector<std::uint8_t> behavior_mask;
  std::vector<ItemRef> triggers;
  std::vector<ItemRef> targets;
  std::vector<ItemRef> explicit_items;  // size*explicit_len
  std::vector<std::uint8_t> explicit_mask;
  std::vector<ItemRef> augmented_items;
  std::vector<std::uint8_t> augmented_mask;
  std::vector<std::uint32_t> context;
  std::vector<std::uint32_t> profile;
  std::vector<float> labels;
};

inline void append_padded(const ExplicitSequence& s, std::size_t len, std::vector<ItemRef>& items,
                          std::vector<std::uint8_t>& mask) {
  for (std::size_t i = 0; i < len; ++i) {
    const ItemRef r = i < s.items.size() ? s.items[i] : ItemRef{};
    items.push_back(r);
    mask.push_back(r.item != kPaddingId);
  }
}

inline Batch make_batch(const EncodedDataset& ds, std::span<const std::size_t> indices, const BatchOptions& opt,
                        Rng& rng) {
  Batch b;
  b.size = indices.size();
  b.seq_len = opt.seq_len;
  b.explicit_len = opt.explicit_len + 1;
  b.context_fields = ds.context_fields;
  b.profile_fields = ds.profile_fields;
  for (auto idx : indices) {
    const auto& s = ds.samples.at(idx);
    const std::size_t keep = std::min(opt.seq_len, s.behaviors.size());
    const std::size_t start = s.behaviors.size() - keep;
    for (std::size_t t = 0; t < opt.seq_len; ++t) {
      const ItemRef r = t < keep ? s.behaviors[start + t] : ItemRef{};
      b.behaviors.push_back(r);
      b.behavior_mask.push_back(r.item != kPaddingId);
    }
    const ItemRef trigger = opt.trigger_agnostic ? ItemRef{} : s.trigger;
    b.triggers.push_back(trigger);
    b.targets.push_back(s.target);
    ExplicitSequence ex;
    if (opt.trigger_agnostic) {
      ex.items.push_back(ItemRef{});
    } else {
      ex = extract_explicit(std::span<const ItemRef>(s.behaviors.data() + start, keep), trigger, opt.explicit_len);
    }
    append_padded(ex, b.explicit_len, b.explicit_items, b.explicit_mask);
    if (opt.augment) append_padded(augment(ex, opt.mask_prob, rng), b.explicit_len, b.augmented_items, b.augmented_mask);
    b.context.insert(b.context.end(), s.context.begin(), s.context.end());
    b.profile.insert(b.profile.end(), s.profile.begin(), s.profile.end());
    b.labels.push_back(s.label);
  }
  return b;
}

}  // namespace duin
