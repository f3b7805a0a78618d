// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// `acceptance 3 7` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "duin/bench.hpp"
#include "duin/checkpoint.hpp"
#include "duin/cooc_graph.hpp"
#include "duin/eiem.hpp"
#include "duin/iumm.hpp"
#include "duin/liem.hpp"
#include "duin/metrics.hpp"
#include "duin/pipeline.hpp"
#include "duin/trainer.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace duin;
using namespace duin::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PreparedData tiny_data(const ModelConfig& m, std::uint64_t seed = 1) {
  return prepare_synthetic(tiny_spec(seed), tiny_train_config(m));
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg = tiny_model(8, 4);
  cfg.explicit_len = 3;
  const auto data = tiny_data(cfg);
  DuinModel<double> model(cfg, data.vocabulary, 3);
  model.set_graph(&data.graph);
  auto batch = first_batch(data.train, cfg, 4, true, 5);
  std::vector<Tensor<double>> leaves;
  for (const auto& [_, p] : model.parameters().entries()) leaves.push_back(p);
  auto loss = [&] {
    Rng rng(17);
    auto out = model.forward(batch, rng, SampleMode::kTrain);
    return model.losses(out, batch.labels).total;
  };
  const auto r = grad_check(loss, leaves, 1e-6, 30, 11);
  const double secs = seconds_since(t0);
  return {r.probes >= 30 && r.max_rel_error <= 1e-2 && secs < 60,
          fmt("%.0f probes, max rel error %.2e, %.1f s", static_cast<double>(r.probes), r.max_rel_error, secs)};
}

Outcome closed_form_losses() {
  std::vector<double> half(6, 0.5);
  std::vector<float> y{1, 0, 1, 1, 0, 0};
  const double bce_err = std::abs(bce_loss(half, y) - std::log(2.0));

  // Every view identical: all similarities equal, so the loss is ln(1 + N_neg).
  double ssl_err = 0;
  for (std::size_t b : {2u, 5u, 16u}) {
    for (auto mode : {NegativeSet::kOtherSamples, NegativeSet::kAllOtherViews}) {
      auto v = Tensor<double>::zeros({b, 6});
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t c = 0; c < 6; ++c) v.data()[i * 6 + c] = 0.3 + 0.1 * static_cast<double>(c);
      const double got = ssl_loss(v, v, 0.1, mode).item();
      ssl_err = std::max(ssl_err, std::abs(got - std::log(1.0 + static_cast<double>(negative_count(mode, b)))));
    }
  }

  double lin_err = 0;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0, 3);
  for (int i = 0; i < 100; ++i) {
    const double c = u(rng), s = u(rng), a = u(rng), b = u(rng);
    // Affine in alpha: f(a) + f(b) - f(0) equals f(a + b).
    lin_err = std::max(lin_err, std::abs(final_loss(c, s, a) + final_loss(c, s, b) - final_loss(c, s, 0.0) -
                                         final_loss(c, s, a + b)));
    lin_err = std::max(lin_err, std::abs(final_loss(c, s, a) - (c + a * s)));
  }
  return {bce_err <= 1e-6 && ssl_err <= 1e-5 && lin_err <= 1e-7,
          fmt("bce err %.1e, ssl err %.1e, alpha-linearity err %.1e", bce_err, ssl_err, lin_err)};
}

Outcome relaimpr_table() {
  const double a = relaimpr(0.7782, 0.6107);
  const double b = relaimpr(0.6096, 0.6107);
  return {std::abs(a - 151.31) <= 0.02 && std::abs(b - -0.99) <= 0.02, fmt("%.4f%% and %.4f%%", a, b)};
}

RelationTriple brute_relation(const std::vector<ItemSequence>& seqs, std::size_t w, ItemRef a, ItemRef b) {
  RelationTriple r;
  for (const auto& s : seqs)
    for (std::size_t p = 0; p < s.size(); ++p)
      for (std::size_t q = 0; q < s.size(); ++q) {
        if (q <= p || q - p > w) continue;
        r.transition += s[p].item == a.item && s[q].item == b.item;
        r.complementary += s[p].attr == a.attr && s[q].attr == b.attr;
        r.popularity += s[p].attr == a.attr && s[q].item == b.item;
      }
  return r;
}

Outcome graph_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(4);
  std::size_t mismatches = 0, checks = 0;
  for (int c = 0; c < 500; ++c) {
    std::uniform_int_distribution<std::size_t> nseq(0, 10), len(0, 8), win(1, 4);
    std::uniform_int_distribution<std::uint32_t> item(2, 9), attr(2, 5);
    std::vector<ItemSequence> seqs(nseq(rng));
    for (auto& s : seqs) {
      for (std::size_t i = len(rng); i > 0; --i) s.push_back({item(rng), attr(rng)});
    }
    const std::size_t w = win(rng);
    const auto g = CoocGraph::build(seqs, w);
    // Every (item, attr) pair that can occur, so zero counts are covered too.
    for (std::uint32_t i = 2; i <= 9; ++i)
      for (std::uint32_t j = 2; j <= 9; ++j) {
        const ItemRef a{i, 2 + i % 4}, b{j, 2 + (j * 3) % 4};
        mismatches += !(g.relation(a, b) == brute_relation(seqs, w, a, b));
        ++checks;
      }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10,
          fmt("%.0f mismatches over %.0f lookups, %.2f s", static_cast<double>(mismatches), static_cast<double>(checks),
              secs)};
}

// Attention written with loops, one head at a time.
std::vector<double> plain_attention(ParameterStore<double>& store, const std::string& prefix,
                                    const Tensor<double>& q, const Tensor<double>& kv,
                                    const std::vector<std::uint8_t>& mask, std::size_t heads) {
  const std::size_t B = kv.dim(0), T = kv.dim(1), d = kv.dim(2), dh = d / heads;
  auto project = [&](const std::string& name, const Tensor<double>& x, std::size_t rows) {
    const auto w = store.get(prefix + "." + name + ".weight");
    std::vector<double> out(rows * d);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < d; ++o) {
        double s = 0;
        for (std::size_t i = 0; i < d; ++i) s += x[r * d + i] * w[i * d + o];
        out[r * d + o] = s;
      }
    return out;
  };
  const auto Q = project("wq", q, B), K = project("wk", kv, B * T), V = project("wv", kv, B * T);
  std::vector<double> heads_out(B * d, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> s(T, -INFINITY);
      double mx = -INFINITY;
      for (std::size_t t = 0; t < T; ++t) {
        if (!mask[b * T + t]) continue;
        double dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += Q[b * d + h * dh + c] * K[(b * T + t) * d + h * dh + c];
        s[t] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[t]);
      }
      if (mx == -INFINITY) continue;
      double z = 0;
      for (std::size_t t = 0; t < T; ++t) z += mask[b * T + t] ? std::exp(s[t] - mx) : 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        if (!mask[b * T + t]) continue;
        const double a = std::exp(s[t] - mx) / z;
        for (std::size_t c = 0; c < dh; ++c) heads_out[b * d + h * dh + c] += a * V[(b * T + t) * d + h * dh + c];
      }
    }
  const auto wo = store.get(prefix + ".wo.weight");
  std::vector<double> out(B * d);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t o = 0; o < d; ++o) {
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) s += heads_out[r * d + i] * wo[i * d + o];
      out[r * d + o] = s;
    }
  return out;
}

Outcome attention_reduction() {
  double max_diff = 0;
  bool zero_exact = true;
  std::mt19937 g(5);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore<double> store;
    Rng rng(100 + trial);
    const std::size_t heads = trial % 2 ? 2 : 4, B = 3, T = 5, d = 8;
    MultiHeadAttention<double> att(store, "a", d, heads, rng);
    auto q = random_tensor({B, d}, g, 1, false);
    auto beh = random_tensor({B, T, d}, g, 1, false);
    std::vector<std::uint8_t> mask(B * T);
    for (auto& m : mask) m = g() % 4 != 0;
    mask[0] = 1;
    auto mod = modulated_attention(att, q, beh, mask, Tensor<double>::ones({B, T}));
    const auto ref = plain_attention(store, "a", q, beh, mask, heads);
    for (std::size_t i = 0; i < ref.size(); ++i) max_diff = std::max(max_diff, std::abs(mod[i] - ref[i]));
    auto zero = modulated_attention(att, q, beh, mask, Tensor<double>::zeros({B, T}));
    for (double v : zero.data()) zero_exact = zero_exact && v == 0.0;
  }
  return {max_diff <= 1e-6 && zero_exact,
          fmt("Pi=1 max abs diff %.2e; Pi=0 exactly zero: ", max_diff) + (zero_exact ? "yes" : "no")};
}

Outcome auc_oracle() {
  std::mt19937 rng(6);
  double worst = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<int> n(2, 50), coarse(0, 9);
    const int len = n(rng);
    std::vector<double> s(len);
    std::vector<float> y(len);
    for (int i = 0; i < len; ++i) {
      s[i] = trial % 2 ? coarse(rng) / 9.0 : std::uniform_real_distribution<double>(0, 1)(rng);
      y[i] = static_cast<float>(rng() % 2);
    }
    y[0] = 1;
    y[1] = 0;
    double num = 0, den = 0;
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < len; ++j)
        if (y[i] == 1 && y[j] == 0) {
          num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
          den += 1;
        }
    worst = std::max(worst, std::abs(auc(s, y) - num / den));
  }
  return {worst <= 1e-12, fmt("max abs diff %.2e over 200 sets", worst)};
}

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg;
  const auto data = prepare_synthetic(tiny_spec(1, 2000), cfg);
  DuinModel<float> model(cfg.model, data.vocabulary, 1);
  model.set_graph(&data.graph);
  Adam<float> adam(model.parameters(), AdamOptions{cfg.lr});
  // One sample per distinct trigger + history. Impressions of one session share
  // their explicit sequence, and identical anchors put a floor of
  // ln(1 + 2(k-1)) under the contrastive term that no amount of fitting removes.
  std::vector<std::size_t> idx;
  std::set<std::vector<std::uint32_t>> seen;
  for (std::size_t i = 0; i < data.train.samples.size() && idx.size() < 32; ++i) {
    const auto& s = data.train.samples[i];
    std::vector<std::uint32_t> key{s.trigger.item};
    for (const auto& b : s.behaviors) key.push_back(b.item);
    if (seen.insert(key).second) idx.push_back(i);
  }
  Rng batch_rng(2);
  // Fixed batch, including its augmented views.
  const auto batch = make_batch(data.train, idx, batch_options(cfg.model, true), batch_rng);
  std::size_t positives = 0;
  for (float l : batch.labels) positives += l == 1;
  double last = NAN, ctr = NAN;
  for (int step = 0; step < 200; ++step) {
    Rng rng(7);  // same reparameterization noise every step
    const auto s = train_step(model, adam, batch, rng, static_cast<std::size_t>(step));
    last = s.total;
    ctr = s.ctr;
  }
  const double secs = seconds_since(t0);
  return {last < 0.05 && secs < 120,
          fmt("final loss %.4f (ctr %.4f), %.0f positives of 32, %.1f s", last, ctr, static_cast<double>(positives), secs)};
}

Outcome ablation_order() {
  ExperimentMatrix m;
  m.variants = {{"full", {}}};
  for (const auto& v : ablation_variants()) {
    if (v.name == "no_ssl" || v.name == "no_liem" || v.name == "no_iumm") m.variants.push_back(v);
  }
  m.variants.push_back(trigger_agnostic_variant());
  const auto r = run_matrix(m, [](const std::string& line) { std::cout << "  " << line << std::endl; });
  std::cout << format_ablation(r);
  auto mean = [&](const char* name) {
    const auto* row = find_row(r, name);
    return row && !row->failed ? row->summary.mean : NAN;
  };
  const double full = mean("full"), no_ssl = mean("no_ssl"), no_liem = mean("no_liem"), no_iumm = mean("no_iumm"),
               ta = mean("trigger_agnostic");
  std::vector<std::string> broken;
  if (!(full >= no_ssl)) broken.push_back("full < no_ssl");
  if (!(no_ssl >= no_liem)) broken.push_back("no_ssl < no_liem");
  if (!(full >= no_iumm)) broken.push_back("full < no_iumm");
  if (!(full - ta >= 0.03)) broken.push_back("full - trigger_agnostic < 0.03");
  if (!(r.total_seconds < 1800)) broken.push_back("over 30 min");
  std::string detail = fmt("full %.4f, no_ssl %.4f, no_liem %.4f, no_iumm %.4f", full, no_ssl, no_liem, no_iumm) +
                       fmt(", trigger_agnostic %.4f, %.0f s", ta, r.total_seconds);
  for (const auto& b : broken) detail += "; " + b;
  return {broken.empty(), detail};
}

Outcome iumm_statistics() {
  const std::size_t n = 100000;
  IntentDistribution<double> d{Tensor<double>::zeros({n, 1}), Tensor<double>::ones({n, 1})};
  Rng rng(9);
  const auto z = sample_intensity(d, rng, SampleMode::kTrain);
  double m = 0, v = 0;
  for (double x : z.data()) m += x;
  m /= static_cast<double>(n);
  for (double x : z.data()) v += (x - m) * (x - m);
  v /= static_cast<double>(n - 1);

  // Inference through a real module: same input, different generator state, same output.
  ParameterStore<double> store;
  Rng init(10);
  IntentUncertaintyModule<double> iumm(store, 6, 8, 4, 3, init);
  std::mt19937 g(10);
  const auto x = random_tensor({7, 6}, g, 1, false);
  Rng r1(1), r2(12345);
  const auto a = sample_intensity(iumm.heads(x), r1, SampleMode::kInfer).values();
  const auto b = sample_intensity(iumm.heads(x), r2, SampleMode::kInfer).values();
  const bool det = a == b;
  return {std::abs(m) <= 0.02 && v >= 0.97 && v <= 1.03 && det,
          fmt("mean %.4f, variance %.4f", m, v) + ", infer deterministic: " + (det ? "yes" : "no")};
}

Outcome determinism() {
  const ModelConfig cfg = tiny_model();
  const auto data = tiny_data(cfg);
  auto run = [&] {
    DuinModel<float> model(cfg, data.vocabulary, 5);
    model.set_graph(&data.graph);
    Adam<float> adam(model.parameters());
    RunRngs rngs(5);
    const auto opt = batch_options(cfg, true);
    std::vector<std::size_t> order(data.train.samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rngs.shuffle);
    std::vector<double> losses;
    for (std::size_t step = 0; step < 50; ++step) {
      const std::size_t start = (step * 16) % (order.size() - 16);
      std::span<const std::size_t> idx(order.data() + start, 16);
      const auto batch = make_batch(data.train, idx, opt, rngs.augment);
      losses.push_back(train_step(model, adam, batch, rngs.sample, step).total);
    }
    return losses;
  };
  const bool same_losses = run() == run();

  DuinModel<float> model(cfg, data.vocabulary, 6);
  model.set_graph(&data.graph);
  train(model, tiny_train_config(cfg), data.train, nullptr);
  const auto dir = fs::temp_directory_path() / "duin_acceptance_ckpt";
  fs::remove_all(dir);
  Adam<float> adam(model.parameters());
  save_checkpoint(dir.string(), model.parameters(), &adam, {6, 0, 0, data.vocabulary});
  DuinModel<float> restored(cfg, data.vocabulary, 77);
  restored.set_graph(&data.graph);
  load_checkpoint(dir.string(), restored.parameters());
  const bool same_forward = predict(model, data.test, 64) == predict(restored, data.test, 64);
  fs::remove_all(dir);

  const auto a = fs::temp_directory_path() / "duin_acceptance_syn_a";
  const auto b = fs::temp_directory_path() / "duin_acceptance_syn_b";
  for (const auto& p : {a, b}) {
    fs::remove_all(p);
    fs::create_directories(p);
    SyntheticGenerator::write(generate_synthetic(tiny_spec(3, 1500)), p.string());
  }
  bool same_files = true;
  for (const char* f : {"events.tsv", "users.tsv", "ground_truth.tsv"}) same_files = same_files && slurp(a / f) == slurp(b / f);
  fs::remove_all(a);
  fs::remove_all(b);

  auto yn = [](bool v) { return std::string(v ? "yes" : "no"); };
  return {same_losses && same_forward && same_files, "50-step losses identical: " + yn(same_losses) +
                                                         ", checkpoint forward identical: " + yn(same_forward) +
                                                         ", synthetic files identical: " + yn(same_files)};
}

Outcome leakage() {
  const TrainConfig cfg;
  const auto data = generate_synthetic(SyntheticSpec{});
  const auto samples = assemble_samples(data.events, cfg.assemble(), synthetic_profiles(data));
  const auto window = cfg.assemble().trigger_window_seconds;
  const std::size_t n = std::min<std::size_t>(samples.size(), 10000);
  std::size_t violations = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    bool ok = s.trigger.ts <= s.ts && s.trigger.ts > s.ts - window;
    for (const auto& b : s.behaviors) ok = ok && b.ts < s.ts;
    violations += !ok;
  }
  return {n == 10000 && violations == 0,
          fmt("%.0f violations in %.0f samples", static_cast<double>(violations), static_cast<double>(n))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient check", gradient_check},
      {"closed-form losses", closed_form_losses},
      {"RelaImpr arithmetic", relaimpr_table},
      {"co-occurrence oracle", graph_oracle},
      {"attention reduction", attention_reduction},
      {"AUC oracle", auc_oracle},
      {"overfit smoke test", overfit},
      {"ablation direction", ablation_order},
      {"IUMM statistics", iumm_statistics},
      {"determinism and persistence", determinism},
      {"data hygiene", leakage},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
