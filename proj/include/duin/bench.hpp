#pragma once

// Ablation matrix and hyperparameter sweeps over a synthetic dataset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "duin/metrics.hpp"
#include "duin/pipeline.hpp"
#include "duin/trainer.hpp"

namespace duin {

struct Variant {
  std::string name;
  AblationFlags flags;
};

/// Full model, then one module removed at a time.
inline std::vector<Variant> ablation_variants() {
  std::vector<Variant> v(6);
  v[0] = {"full", {}};
  v[1] = {"no_eiem", {}};
  v[1].flags.no_eiem = true;
  v[2] = {"no_liem", {}};
  v[2].flags.no_liem = true;
  v[3] = {"no_iumm", {}};
  v[3].flags.no_iumm = true;
  v[4] = {"no_ssl", {}};
  v[4].flags.no_ssl = true;
  v[5] = {"sii", {}};
  v[5].flags.sii = true;
  return v;
}

inline Variant trigger_agnostic_variant() {
  Variant v{"trigger_agnostic", {}};
  v.flags.trigger_agnostic = true;
  return v;
}

inline std::string flag_marks(const AblationFlags& f) {
  auto mark = [](bool on) { return on ? std::string("x") : std::string("-"); };
  // EIEM LIEM IUMM SSL SII
  const bool iumm = !f.no_iumm && !f.sii && !f.no_liem;
  const bool ssl = !f.no_ssl && !f.no_eiem && !f.trigger_agnostic;
  return mark(!f.no_eiem) + " " + mark(!f.no_liem) + " " + mark(iumm) + " " + mark(ssl) + " " + mark(f.sii);
}

struct ExperimentMatrix {
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  SyntheticSpec data;
  TrainConfig config;
  std::string base_variant = "trigger_agnostic";  // RelaImpr reference; ignored when absent

  void validate() const {
    std::set<std::string> names;
    for (const auto& v : variants) {
      if (!names.insert(v.name).second) throw UsageError("duplicate variant name " + v.name);
    }
    if (variants.empty()) throw UsageError("experiment matrix has no variants");
    if (seeds.empty()) throw UsageError("experiment matrix has no seeds");
  }
};

struct VariantResult {
  std::string name;
  AblationFlags flags;
  std::vector<double> aucs;
  MeanStd summary;
  double epoch_seconds = 0;  // mean wall time per epoch
  bool failed = false;
  std::string error;
  double relaimpr = NAN;
};

struct MatrixResult {
  std::vector<VariantResult> rows;
  std::string base_variant;
  double total_seconds = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains one model with the given flags and seed; returns test AUC and mean epoch time.
inline std::pair<double, double> run_single(const PreparedData& data, TrainConfig cfg, const AblationFlags& flags,
                                            std::uint64_t seed) {
  cfg.model.flags = flags;
  cfg.seed = seed;
  DuinModel<float> model(cfg.model, data.vocabulary, seed);
  model.set_graph(&data.graph);
  auto result = train(model, cfg, data.train, &data.val);
  double secs = 0;
  for (const auto& e : result.epochs) secs += e.seconds;
  return {evaluate_auc(model, data.test, 512), secs / static_cast<double>(result.epochs.size())};
}

inline MatrixResult run_matrix(const ExperimentMatrix& m, const PreparedData& data, const ProgressFn& progress = {}) {
  m.validate();
  const auto start = std::chrono::steady_clock::now();
  MatrixResult out;
  out.base_variant = m.base_variant;
  for (const auto& v : m.variants) {
    VariantResult r{v.name, v.flags};
    double secs = 0;
    try {
      for (auto seed : m.seeds) {
        auto [a, s] = run_single(data, m.config, v.flags, seed);
        r.aucs.push_back(a);
        secs += s;
        if (progress) {
          std::ostringstream os;
          os << v.name << " seed " << seed << " test_auc " << std::fixed << std::setprecision(4) << a << " ("
             << std::setprecision(1) << s << " s/epoch)";
          progress(os.str());
        }
      }
      r.summary = mean_std(r.aucs);
      r.epoch_seconds = secs / static_cast<double>(m.seeds.size());
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      if (progress) progress(v.name + " failed: " + r.error);
    }
    out.rows.push_back(std::move(r));
  }
  // The full model's row goes first.
  std::stable_partition(out.rows.begin(), out.rows.end(), [](const VariantResult& r) { return r.name == "full"; });
  const VariantResult* base = nullptr;
  for (const auto& r : out.rows) {
    if (r.name == m.base_variant && !r.failed) base = &r;
  }
  if (base && base->summary.mean != 0.5) {
    for (auto& r : out.rows) {
      if (!r.failed) r.relaimpr = relaimpr(r.summary.mean, base->summary.mean);
    }
  }
  out.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline MatrixResult run_matrix(const ExperimentMatrix& m, const ProgressFn& progress = {}) {
  const auto data = prepare_synthetic(m.data, m.config);
  return run_matrix(m, data, progress);
}

inline const VariantResult* find_row(const MatrixResult& r, const std::string& name) {
  for (const auto& row : r.rows) {
    if (row.name == name) return &row;
  }
  return nullptr;
}

namespace detail {
inline std::string fixed(double v, int digits) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}
}  // namespace detail

inline void write_ablation_csv(const std::string& path, const MatrixResult& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "model,variant,eiem,liem,iumm,ssl,sii,seeds,auc_mean,auc_std,relaimpr_pct,epoch_seconds,status,aucs\n";
  std::size_t idx = 1;
  for (const auto& row : r.rows) {
    auto marks = flag_marks(row.flags);
    for (auto& c : marks) c = c == ' ' ? ',' : (c == 'x' ? '1' : '0');
    std::string aucs;
    for (auto a : row.aucs) aucs += (aucs.empty() ? "" : ";") + detail::fixed(a, 6);
    out << idx++ << ',' << row.name << ',' << marks << ',' << row.aucs.size() << ',' << detail::fixed(row.summary.mean, 6)
        << ',' << (row.failed ? "" : detail::fixed(row.summary.std, 6)) << ',' << detail::fixed(row.relaimpr, 2) << ','
        << detail::fixed(row.epoch_seconds, 2) << ',' << (row.failed ? "failed" : "ok") << ',' << aucs << '\n';
  }
}

/// Aligned plain-text table, one row per variant.
inline std::string format_ablation(const MatrixResult& r) {
  std::ostringstream os;
  os << std::left << std::setw(7) << "Model" << std::setw(18) << "variant" << "EIEM LIEM IUMM SSL  SII  "
     << std::setw(20) << "AUC" << std::setw(12) << "RelaImpr" << "s/epoch\n";
  std::size_t idx = 1;
  for (const auto& row : r.rows) {
    const auto f = flag_marks(row.flags);
    std::string cols;
    for (std::size_t i = 0; i < f.size(); i += 2) cols += f[i] + std::string(4, ' ');
    std::string auc_text = row.failed ? "FAILED" : detail::fixed(row.summary.mean, 4);
    if (!row.failed && !std::isnan(row.summary.std)) auc_text += " +- " + detail::fixed(row.summary.std, 4);
    const std::string rel = std::isnan(row.relaimpr) ? "" : detail::fixed(row.relaimpr, 2) + "%";
    os << std::left << std::setw(7) << idx++ << std::setw(18) << row.name << std::setw(25) << cols << std::setw(20)
       << auc_text << std::setw(12) << rel << detail::fixed(row.epoch_seconds, 1) << '\n';
    if (row.failed) os << "       error: " << row.error << '\n';
  }
  if (!r.base_variant.empty()) os << "RelaImpr base: " << r.base_variant << '\n';
  return os.str();
}

enum class SweepParam { kTau, kGamma, kAlpha };

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "tau") return SweepParam::kTau;
  if (s == "gamma") return SweepParam::kGamma;
  if (s == "alpha") return SweepParam::kAlpha;
  throw UsageError("sweep parameter must be tau, gamma or alpha");
}

struct SweepPoint {
  double value = 0;
  std::vector<double> aucs;
  MeanStd summary;
};

inline std::vector<SweepPoint> hyperparam_sweep(SweepParam param, const std::vector<double>& values,
                                                const std::vector<std::uint64_t>& seeds, const PreparedData& data,
                                                const TrainConfig& base, const ProgressFn& progress = {}) {
  if (values.empty()) throw UsageError("sweep needs at least one value");
  if (seeds.empty()) throw UsageError("sweep needs at least one seed");
  std::vector<SweepPoint> out;
  for (double v : values) {
    if (!std::isfinite(v)) throw UsageError("sweep values must be finite");
    TrainConfig cfg = base;
    switch (param) {
      case SweepParam::kTau: cfg.model.tau = v; break;
      case SweepParam::kGamma: cfg.model.gamma = v; break;
      case SweepParam::kAlpha: cfg.model.alpha = v; break;
    }
    cfg.validate();
    SweepPoint p{v};
    for (auto seed : seeds) {
      p.aucs.push_back(run_single(data, cfg, cfg.model.flags, seed).first);
      if (progress) progress("value " + detail::fixed(v, 4) + " seed " + std::to_string(seed) + " test_auc " +
                             detail::fixed(p.aucs.back(), 4));
    }
    p.summary = mean_std(p.aucs);
    out.push_back(std::move(p));
  }
  return out;
}

inline void write_sweep_csv(const std::string& path, const std::string& param, const std::vector<SweepPoint>& pts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << param << ",auc_mean,auc_std,seeds,aucs\n";
  for (const auto& p : pts) {
    std::string aucs;
    for (auto a : p.aucs) aucs += (aucs.empty() ? "" : ";") + detail::fixed(a, 6);
    out << detail::fixed(p.value, 6) << ',' << detail::fixed(p.summary.mean, 6) << ',' << detail::fixed(p.summary.std, 6)
        << ',' << p.aucs.size() << ',' << aucs << '\n';
  }
}

}  // namespace duin
