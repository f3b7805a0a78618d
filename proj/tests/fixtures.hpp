#pragma once

// Small synthetic datasets and model configs shared by tests.

#include <numeric>

#include "duin/pipeline.hpp"
#include "duin/trainer.hpp"

namespace duin::testing {

inline SyntheticSpec tiny_spec(std::uint64_t seed = 1, std::size_t sessions = 600) {
  SyntheticSpec s;
  s.sessions = sessions;
  s.n_users = 80;
  s.n_items = 120;
  s.n_attributes = 8;
  s.trending_items = 10;
  s.seed = seed;
  return s;
}

inline ModelConfig tiny_model(std::size_t dim = 4, std::size_t seq_len = 6) {
  ModelConfig m;
  m.dim = dim;
  m.heads = 2;
  m.seq_len = seq_len;
  m.explicit_len = 3;
  m.interaction_hidden1 = 12;
  m.interaction_hidden2 = 6;
  m.iumm_hidden1 = 12;
  m.iumm_hidden2 = 6;
  m.head_hidden1 = 16;
  m.head_hidden2 = 8;
  m.score_hidden = 6;
  return m;
}

inline TrainConfig tiny_train_config(const ModelConfig& m) {
  TrainConfig c;
  c.model = m;
  c.batch_size = 16;
  c.epochs = 1;
  return c;
}

inline Batch first_batch(const EncodedDataset& ds, const ModelConfig& m, std::size_t n, bool training,
                         std::uint64_t seed = 1) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  return make_batch(ds, idx, batch_options(m, training), rng);
}

}  // namespace duin::testing
