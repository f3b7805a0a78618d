#pragma once

// Events -> split samples -> vocabularies, encoded splits and the train-time graph.

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "duin/config.hpp"
#include "duin/cooc_graph.hpp"
#include "duin/data.hpp"
#include "duin/dataset.hpp"
#include "duin/model.hpp"
#include "duin/synthetic.hpp"

namespace duin {

struct RawSplits {
  Split split;
  std::vector<std::vector<RawItem>> graph_sequences;  // behavior up to the last training sample
  AssembleStats stats;
};

struct PreparedData {
  Vocabs vocabs;
  EncodedDataset train, val, test;
  CoocGraph graph;
  Vocabulary vocabulary;
};

/// The co-occurrence graph only sees events before the first kept training
/// sample. Training samples in the leading `graph_history` fraction of the
/// training period are given up to build it; otherwise every training sample's
/// own label click would be counted in its relation features.
inline RawSplits split_events(const std::vector<BehaviorEvent>& events, const TrainConfig& cfg,
                              const std::unordered_map<std::string, std::vector<std::string>>& profiles = {}) {
  RawSplits r;
  auto samples = assemble_samples(events, cfg.assemble(), profiles, &r.stats);
  r.split = split_chronological(std::move(samples));
  auto& train = r.split.train;
  const auto skip = static_cast<std::size_t>(cfg.graph_history * static_cast<double>(train.size()));
  // graph_history = 0: graph over the whole training period (own labels included).
  std::int64_t cutoff = train.empty() ? 0 : train.back().ts;
  if (skip > 0 && skip < train.size()) {
    cutoff = train[skip].ts;
    std::erase_if(train, [&](const InteractionSample& s) { return s.ts < cutoff; });
  }
  r.graph_sequences = behavior_sequences(events, cutoff - 1);
  return r;
}

inline Vocabulary vocabulary_of(const Vocabs& v, std::size_t context_fields, std::size_t profile_fields) {
  return {v.items.table_size(), v.attrs.table_size(), v.context.table_size(), v.profile.table_size(),
          context_fields, profile_fields};
}

inline PreparedData encode_splits(const Split& split, const std::vector<std::vector<RawItem>>& graph_sequences,
                                  std::size_t window, Vocabs vocabs) {
  PreparedData p;
  p.vocabs = std::move(vocabs);
  const std::size_t cf = std::max<std::size_t>(1, max_field_count(split.train, true));
  const std::size_t pf = std::max<std::size_t>(1, max_field_count(split.train, false));
  p.train = encode_samples(split.train, p.vocabs, cf, pf);
  p.val = encode_samples(split.val, p.vocabs, cf, pf);
  p.test = encode_samples(split.test, p.vocabs, cf, pf);
  p.graph = CoocGraph::build(encode_sequences(p.vocabs, graph_sequences), window);
  p.vocabulary = vocabulary_of(p.vocabs, cf, pf);
  return p;
}

inline PreparedData prepare(const std::vector<BehaviorEvent>& events, const TrainConfig& cfg,
                            const std::unordered_map<std::string, std::vector<std::string>>& profiles = {}) {
  auto raw = split_events(events, cfg, profiles);
  auto vocabs = build_vocabs(raw.split.train);
  extend_vocabs(vocabs, raw.graph_sequences);
  return encode_splits(raw.split, raw.graph_sequences, cfg.window, std::move(vocabs));
}

inline std::unordered_map<std::string, std::vector<std::string>> synthetic_profiles(const SyntheticData& data) {
  std::unordered_map<std::string, std::vector<std::string>> out;
  for (const auto& [u, seg] : data.user_segments) out[u] = {seg};
  return out;
}

inline PreparedData prepare_synthetic(const SyntheticSpec& spec, const TrainConfig& cfg) {
  const auto data = generate_synthetic(spec);
  return prepare(data.events, cfg, synthetic_profiles(data));
}

}  // namespace duin
