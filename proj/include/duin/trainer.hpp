#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "duin/checkpoint.hpp"
#include "duin/config.hpp"
#include "duin/dataset.hpp"
#include "duin/metrics.hpp"
#include "duin/model.hpp"
#include "duin/optim.hpp"

namespace duin {

struct StepLosses {
  double ctr = 0;
  double ssl = NAN;  // NaN when the contrastive task did not run
  double total = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0;
  double val_auc = NAN;
  double seconds = 0;
};

struct TrainResult {
  std::vector<StepLosses> steps;
  std::vector<EpochRecord> epochs;
  double best_val_auc = NAN;
  std::size_t best_epoch = 0;
};

/// Sources of randomness, all derived from the run seed.
struct RunRngs {
  Rng shuffle;
  Rng augment;
  Rng sample;
  explicit RunRngs(std::uint64_t seed)
      : shuffle(seed * 0x9E3779B97F4A7C15ULL + 1), augment(seed * 0x9E3779B97F4A7C15ULL + 2),
        sample(seed * 0x9E3779B97F4A7C15ULL + 3) {}
};

inline BatchOptions batch_options(const ModelConfig& m, bool training) {
  BatchOptions o;
  o.seq_len = m.seq_len;
  o.explicit_len = m.explicit_len;
  o.mask_prob = m.gamma;
  o.augment = training && m.ssl_active();
  o.trigger_agnostic = m.flags.trigger_agnostic;
  return o;
}

/// One optimization step. Throws NumericError (naming `batch_index`) on a non-finite loss.
template <class Real>
StepLosses train_step(DuinModel<Real>& model, Adam<Real>& adam, const Batch& batch, Rng& rng,
                      std::size_t batch_index = 0) {
  Tape<Real> tape;
  auto out = model.forward(batch, rng, SampleMode::kTrain);
  auto l = model.losses(out, batch.labels);
  StepLosses s;
  s.ctr = static_cast<double>(l.ctr.item());
  s.ssl = l.ssl ? static_cast<double>(l.ssl->item()) : NAN;
  s.total = static_cast<double>(l.total.item());
  if (!std::isfinite(s.total)) {
    throw NumericError("non-finite loss at batch " + std::to_string(batch_index) + " (l_ctr=" + std::to_string(s.ctr) +
                       ", l_ssl=" + std::to_string(s.ssl) + ", batch size " + std::to_string(batch.size) + ")");
  }
  adam.zero_grad();
  tape.backward(l.total);
  adam.step();
  return s;
}

/// Click probabilities for every sample, inference mode, no tape.
template <class Real>
std::vector<double> predict(const DuinModel<Real>& model, const EncodedDataset& ds, std::size_t batch_size,
                            std::uint64_t seed = 0) {
  std::vector<double> scores;
  scores.reserve(ds.samples.size());
  Rng rng(seed);
  const auto opt = batch_options(model.config(), false);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.samples.size(); start += batch_size) {
    idx.resize(std::min(batch_size, ds.samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto batch = make_batch(ds, idx, opt, rng);
    auto p = model.forward(batch, rng, SampleMode::kInfer).probabilities();
    scores.insert(scores.end(), p.begin(), p.end());
  }
  return scores;
}

template <class Real>
double evaluate_auc(const DuinModel<Real>& model, const EncodedDataset& ds, std::size_t batch_size) {
  const auto scores = predict(model, ds, batch_size);
  return auc(scores, ds.labels());
}

struct TrainOutputs {
  std::string metrics_csv;     // empty: no metrics file
  std::string checkpoint_dir;  // empty: keep the best parameters in memory only
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Per-epoch shuffled mini-batches with Adam; the best-validation parameters are
/// restored into `model` at the end (and written to `checkpoint_dir` when set).
template <class Real>
TrainResult train(DuinModel<Real>& model, const TrainConfig& cfg, const EncodedDataset& train_ds,
                  const EncodedDataset* val_ds, const TrainOutputs& outputs = {}) {
  cfg.validate();
  if (train_ds.samples.size() < 2) throw DataError("training split has fewer than 2 samples");
  Adam<Real> adam(model.parameters(), AdamOptions{cfg.lr});
  RunRngs rngs(cfg.seed);
  const auto opt = batch_options(model.config(), true);

  std::unique_ptr<std::ofstream> csv;
  if (!outputs.metrics_csv.empty()) {
    csv = std::make_unique<std::ofstream>(outputs.metrics_csv, std::ios::binary);
    if (!*csv) throw DataError("cannot write " + outputs.metrics_csv);
    *csv << "epoch,step,l_ctr,l_ssl,l_final,val_auc\n";
    csv->precision(9);
  }

  TrainResult result;
  std::vector<std::vector<Real>> best;
  std::vector<std::size_t> order(train_ds.samples.size());
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rngs.shuffle);
    double loss_sum = 0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      if (n < 2) break;  // a lone trailing sample has no in-batch negatives
      std::span<const std::size_t> idx(order.data() + start, n);
      auto batch = make_batch(train_ds, idx, opt, rngs.augment);
      auto s = train_step(model, adam, batch, rngs.sample, global_step);
      result.steps.push_back(s);
      loss_sum += s.total;
      ++loss_count;
      if (csv) *csv << epoch << ',' << global_step << ',' << s.ctr << ',' << s.ssl << ',' << s.total << ",\n";
      ++global_step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : NAN;
    if (val_ds != nullptr && !val_ds->samples.empty()) rec.val_auc = evaluate_auc(model, *val_ds, 512);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (csv) *csv << epoch << ',' << global_step << ",,,," << rec.val_auc << '\n';
    result.epochs.push_back(rec);
    if (outputs.on_epoch) outputs.on_epoch(rec);

    const bool improved = val_ds == nullptr || std::isnan(result.best_val_auc) || rec.val_auc > result.best_val_auc;
    if (improved) {
      result.best_val_auc = rec.val_auc;
      result.best_epoch = epoch;
      best.clear();
      for (const auto& [_, t] : model.parameters().entries()) best.emplace_back(t.data().begin(), t.data().end());
      if (!outputs.checkpoint_dir.empty()) {
        CheckpointInfo info{cfg.seed, ConfigSchema::hash(cfg), adam.steps(), model.vocabulary()};
        save_checkpoint(outputs.checkpoint_dir, model.parameters(), &adam, info);
      }
    }
  }
  if (!best.empty()) {
    std::size_t i = 0;
    for (const auto& [_, param] : model.parameters().entries()) {
      Tensor<Real> t = param;
      std::ranges::copy(best[i++], t.data().begin());
    }
  }
  return result;
}

}  // namespace duin
