// duin: command-line front end (data generation, preparation, training, evaluation, ablations).

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "duin/bench.hpp"
#include "duin/checkpoint.hpp"
#include "duin/config.hpp"
#include "duin/metrics.hpp"
#include "duin/pipeline.hpp"
#include "duin/synthetic.hpp"
#include "duin/trainer.hpp"

namespace fs = std::filesystem;
using namespace duin;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct ConfigFlags {
  std::string path;
  std::vector<std::string> overrides;

  void attach(CLI::App* app) {
    app->add_option("--config", path, "key = value config file");
    app->add_option("--set", overrides, "config override key=value (repeatable)");
  }

  TrainConfig resolve(TrainConfig base = {}) const {
    if (!path.empty()) ConfigSchema::apply_file(base, path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
      ConfigSchema::set(base, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    base.validate();
    return base;
  }
};

void write_snapshot(const std::string& dir, const TrainConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream out(dir + "/config.resolved", std::ios::binary);
  out << ConfigSchema::snapshot(cfg);
  if (!out) throw DataError("cannot write " + dir + "/config.resolved");
}

TrainConfig read_snapshot(const std::string& dir) {
  TrainConfig cfg;
  ConfigSchema::apply_file(cfg, dir + "/config.resolved");
  return cfg;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_on(text, ',')) {
    if (detail::trim(tok).empty()) continue;
    out.push_back(detail::parse_number<double>("value list", detail::trim(tok)));
  }
  return out;
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < count; ++i) s.push_back(first + i);
  return s;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  SyntheticSpec spec;
  std::string out = "synthetic";
  std::string mixture;
  ConfigFlags config;
};

int cmd_gen(const GenArgs& a) {
  const auto cfg = a.config.resolve();
  SyntheticSpec spec = a.spec;
  if (!a.mixture.empty()) {
    const auto w = parse_list(a.mixture);
    if (w.size() != 3) throw UsageError("--mixture expects three comma-separated weights");
    spec.mixture = {w[0], w[1], w[2]};
  }
  try {
    spec.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(a.out);
  const auto data = generate_synthetic(spec);
  SyntheticGenerator::write(data, a.out);
  write_snapshot(a.out, cfg);
  std::cout << "wrote " << data.events.size() << " events, " << data.truth.size() << " sessions to " << a.out << "\n";
  return kExitOk;
}

struct PrepareArgs {
  std::string events;
  std::string profiles;
  std::string out = "prepared";
  ConfigFlags config;
};

int cmd_prepare(const PrepareArgs& a) {
  const auto cfg = a.config.resolve();
  ReadStats rs;
  const auto events = read_events(a.events, &rs);
  std::unordered_map<std::string, std::vector<std::string>> profiles;
  if (!a.profiles.empty()) profiles = read_profiles(a.profiles);
  auto raw = split_events(events, cfg, profiles);
  fs::create_directories(a.out);
  write_samples(a.out + "/train.tsv", raw.split.train);
  write_samples(a.out + "/val.tsv", raw.split.val);
  write_samples(a.out + "/test.tsv", raw.split.test);
  write_sequences(a.out + "/sequences.tsv", raw.graph_sequences);
  auto vocabs = build_vocabs(raw.split.train);
  extend_vocabs(vocabs, raw.graph_sequences);
  vocabs.save(a.out);
  write_snapshot(a.out, cfg);
  std::cout << "rows " << rs.rows << ", malformed " << rs.malformed;
  if (!rs.malformed_lines.empty()) {
    std::cout << " (lines";
    for (auto l : rs.malformed_lines) std::cout << ' ' << l;
    std::cout << ")";
  }
  std::cout << "\nsamples train " << raw.split.train.size() << ", val " << raw.split.val.size() << ", test "
            << raw.split.test.size() << " (impressions " << raw.stats.impressions << ", dropped without trigger "
            << raw.stats.dropped_no_trigger << ", positives " << raw.stats.positives << ")\n";
  return kExitOk;
}

struct GraphArgs {
  std::string data = "prepared";
  std::string out;
  std::size_t window = 0;
};

int cmd_build_graph(const GraphArgs& a) {
  const auto cfg = read_snapshot(a.data);
  const std::size_t window = a.window ? a.window : cfg.window;
  const auto vocabs = Vocabs::load(a.data);
  const auto graph = CoocGraph::build(encode_sequences(vocabs, read_sequences(a.data + "/sequences.tsv")), window);
  const std::string out = a.out.empty() ? a.data + "/graph" : a.out;
  fs::create_directories(out);
  graph.save(out);
  std::cout << "graph window " << window << ": " << graph.transition().size() << " transition, "
            << graph.complementary().size() << " complementary, " << graph.popularity().size() << " popularity edges -> "
            << out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data = "prepared";
  std::string graph;
  std::string out = "checkpoint";
  ConfigFlags config;
};

int cmd_train(const TrainArgs& a) {
  const auto cfg = a.config.resolve(read_snapshot(a.data));
  const auto vocabs = Vocabs::load(a.data);
  const auto train_raw = read_samples(a.data + "/train.tsv");
  const auto val_raw = read_samples(a.data + "/val.tsv");
  const std::size_t cf = std::max<std::size_t>(1, max_field_count(train_raw, true));
  const std::size_t pf = std::max<std::size_t>(1, max_field_count(train_raw, false));
  const auto train_ds = encode_samples(train_raw, vocabs, cf, pf);
  const auto val_ds = encode_samples(val_raw, vocabs, cf, pf);
  const std::string graph_dir = a.graph.empty() ? a.data + "/graph" : a.graph;
  const auto graph = CoocGraph::load(graph_dir);

  DuinModel<float> model(cfg.model, vocabulary_of(vocabs, cf, pf), cfg.seed);
  model.set_graph(&graph);
  fs::create_directories(a.out);
  write_snapshot(a.out, cfg);
  vocabs.save(a.out);
  fs::create_directories(a.out + "/graph");
  graph.save(a.out + "/graph");

  TrainOutputs outputs;
  outputs.metrics_csv = a.out + "/metrics.csv";
  outputs.checkpoint_dir = a.out;
  outputs.on_epoch = [](const EpochRecord& r) {
    std::cout << "epoch " << r.epoch << "  loss " << std::fixed << std::setprecision(4) << r.mean_loss << "  val_auc "
              << r.val_auc << "  " << std::setprecision(1) << r.seconds << " s" << std::endl;
  };
  const auto result = train(model, cfg, train_ds, &val_ds, outputs);
  std::cout << "best val_auc " << std::fixed << std::setprecision(4) << result.best_val_auc << " at epoch "
            << result.best_epoch << "; checkpoint in " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint = "checkpoint";
  std::string data;
  double base_auc = 0;
};

int cmd_eval(const EvalArgs& a) {
  const auto cfg = read_snapshot(a.checkpoint);
  const auto info = read_checkpoint_info(a.checkpoint);
  const auto vocabs = Vocabs::load(a.checkpoint);
  const auto graph = CoocGraph::load(a.checkpoint + "/graph");
  DuinModel<float> model(cfg.model, info.vocabulary, cfg.seed);
  load_checkpoint(a.checkpoint, model.parameters());
  model.set_graph(&graph);
  const auto ds = encode_samples(read_samples(a.data), vocabs, info.vocabulary.context_fields,
                                 info.vocabulary.profile_fields);
  const auto scores = predict(model, ds, 512);
  std::vector<std::uint8_t> same;
  for (const auto& s : ds.samples) same.push_back(s.same_attribute);
  const auto seg = segment_auc(scores, ds.labels(), same);
  std::cout << std::fixed << std::setprecision(4) << "AUC " << seg.overall << "\n";
  std::cout << "n_pos " << seg.n_pos << "  n_neg " << seg.n_neg << "\n";
  auto show = [](double v) { return std::isnan(v) ? std::string("n/a") : detail::fixed(v, 4); };
  std::cout << "same-attribute AUC " << show(seg.same_attribute) << " (" << seg.same_pairs << " pairs)\n";
  std::cout << "cross-attribute AUC " << show(seg.cross_attribute) << " (" << seg.cross_pairs << " pairs)\n";
  std::cout << "mixed pairs " << seg.mixed_pairs << "\n";
  if (a.base_auc > 0) std::cout << "RelaImpr " << std::setprecision(2) << relaimpr(seg.overall, a.base_auc) << "%\n";
  return kExitOk;
}

struct BenchArgs {
  GenArgs gen;
  std::uint64_t seed = 1;
  std::size_t seeds = 5;
  std::string out = "ablation";
  ConfigFlags config;
};

int cmd_ablate(const BenchArgs& a) {
  ExperimentMatrix m;
  m.config = a.config.resolve();
  m.data = a.gen.spec;
  m.data.seed = a.seed;
  m.seeds = seed_range(a.seed, a.seeds);
  m.variants = ablation_variants();
  m.variants.push_back(trigger_agnostic_variant());
  fs::create_directories(a.out);
  write_snapshot(a.out, m.config);
  const auto result = run_matrix(m, [](const std::string& s) { std::cout << "  " << s << std::endl; });
  write_ablation_csv(a.out + "/ablation.csv", result);
  std::cout << format_ablation(result);
  std::cout << "wrote " << a.out << "/ablation.csv (" << std::fixed << std::setprecision(0) << result.total_seconds
            << " s)\n";
  return kExitOk;
}

struct SweepArgs {
  BenchArgs bench;
  std::string param;
  std::string values;
};

int cmd_sweep(const SweepArgs& a) {
  const auto param = parse_sweep_param(a.param);
  const auto values = parse_list(a.values);
  if (values.empty()) throw UsageError("--values needs at least one value");
  auto cfg = a.bench.config.resolve();
  auto spec = a.bench.gen.spec;
  spec.seed = a.bench.seed;
  fs::create_directories(a.bench.out);
  write_snapshot(a.bench.out, cfg);
  const auto data = prepare_synthetic(spec, cfg);
  const auto points = hyperparam_sweep(param, values, seed_range(a.bench.seed, a.bench.seeds), data, cfg,
                                       [](const std::string& s) { std::cout << "  " << s << std::endl; });
  const std::string path = a.bench.out + "/sweep_" + a.param + ".csv";
  write_sweep_csv(path, a.param, points);
  std::cout << std::left << std::setw(10) << a.param << "AUC\n";
  for (const auto& p : points) {
    std::cout << std::setw(10) << detail::fixed(p.value, 3) << detail::fixed(p.summary.mean, 4);
    if (!std::isnan(p.summary.std)) std::cout << " +- " << detail::fixed(p.summary.std, 4);
    std::cout << "\n";
  }
  std::cout << "wrote " << path << "\n";
  return kExitOk;
}

struct ReportArgs {
  std::string input = "ablation/ablation.csv";
  std::string base = "trigger_agnostic";
  std::string out;
  bool significance = false;
};

int cmd_report(const ReportArgs& a) {
  std::ifstream in(a.input);
  if (!in) throw DataError("cannot read " + a.input);
  std::string line;
  std::getline(in, line);
  const auto header = split_on(line, ',');
  if (header.size() < 14 || header[1] != "variant") throw DataError(a.input + " is not an ablation.csv");
  struct Row {
    std::vector<std::string> cols;
    std::vector<double> aucs;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Row r{split_on(line, ',')};
    if (r.cols.size() != header.size()) throw DataError("malformed row in " + a.input + ": " + line);
    for (const auto& t : split_on(r.cols[13], ';')) {
      if (!t.empty()) r.aucs.push_back(std::stod(t));
    }
    rows.push_back(std::move(r));
  }
  const Row* full = nullptr;
  const Row* base = nullptr;
  for (const auto& r : rows) {
    if (r.cols[1] == "full") full = &r;
    if (r.cols[1] == a.base) base = &r;
  }
  const double base_mean = base && !base->aucs.empty() ? mean_std(base->aucs).mean : NAN;

  std::ostringstream csv;
  csv << "variant,auc_mean,auc_std,relaimpr_pct" << (a.significance ? ",p_full_greater" : "") << "\n";
  std::cout << std::left << std::setw(18) << "variant" << std::setw(20) << "AUC" << std::setw(12) << "RelaImpr"
            << (a.significance ? "p(full > variant)" : "") << "\n";
  for (const auto& r : rows) {
    const auto ms = mean_std(r.aucs);
    std::string auc_text = r.aucs.empty() ? "FAILED" : detail::fixed(ms.mean, 4);
    if (!std::isnan(ms.std)) auc_text += " +- " + detail::fixed(ms.std, 4);
    const double rel = std::isnan(base_mean) || r.aucs.empty() ? NAN : relaimpr(ms.mean, base_mean);
    std::string p_text;
    if (a.significance && full && &r != full && !r.aucs.empty() && !full->aucs.empty()) {
      p_text = detail::fixed(wilcoxon_rank_sum_greater(full->aucs, r.aucs), 4);
    }
    std::cout << std::setw(18) << r.cols[1] << std::setw(20) << auc_text << std::setw(12)
              << (std::isnan(rel) ? "" : detail::fixed(rel, 2) + "%") << p_text << "\n";
    csv << r.cols[1] << ',' << detail::fixed(ms.mean, 6) << ',' << detail::fixed(ms.std, 6) << ','
        << detail::fixed(rel, 2) << (a.significance ? "," + p_text : "") << "\n";
  }
  if (base) std::cout << "RelaImpr base: " << a.base << "\n";
  if (a.significance) std::cout << "one-sided exact Wilcoxon rank-sum over per-seed AUCs\n";
  const std::string out = a.out.empty() ? (fs::path(a.input).parent_path() / "report.csv").string() : a.out;
  std::ofstream o(out, std::ios::binary);
  o << csv.str();
  if (!o) throw DataError("cannot write " + out);
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

void add_spec_options(CLI::App* app, GenArgs& g) {
  app->add_option("--sessions", g.spec.sessions, "number of sessions");
  app->add_option("--users", g.spec.n_users, "number of users");
  app->add_option("--items", g.spec.n_items, "number of items");
  app->add_option("--attributes", g.spec.n_attributes, "number of attributes");
  app->add_option("--noise", g.spec.noise_rate, "click noise rate");
  app->add_option("--distractors", g.spec.distractor_rate, "share of negatives drawn from another intent");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DUIN trigger-induced recommendation toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-synthetic", "generate a synthetic event log with planted intents");
  add_spec_options(g, gen);
  g->add_option("--seed", gen.spec.seed, "generator seed");
  g->add_option("--mixture", gen.mixture, "intent weights similar,trending,complementary");
  g->add_option("--out", gen.out, "output directory");
  gen.config.attach(g);

  PrepareArgs prep;
  auto* p = app.add_subcommand("prepare", "assemble samples, split chronologically, build vocabularies");
  p->add_option("--events", prep.events, "event TSV")->required();
  p->add_option("--profiles", prep.profiles, "user profile sidecar TSV");
  p->add_option("--out", prep.out, "output directory");
  prep.config.attach(p);

  GraphArgs graph;
  auto* bg = app.add_subcommand("build-graph", "build the co-occurrence graph from prepared sequences");
  bg->add_option("--data", graph.data, "prepared directory");
  bg->add_option("--window", graph.window, "co-occurrence window (default: config)");
  bg->add_option("--out", graph.out, "graph directory (default: <data>/graph)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train DUIN and keep the best-validation checkpoint");
  t->add_option("--data", tr.data, "prepared directory");
  t->add_option("--graph", tr.graph, "graph directory (default: <data>/graph)");
  t->add_option("--out", tr.out, "checkpoint directory");
  tr.config.attach(t);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a sample file with a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint directory");
  e->add_option("--data", ev.data, "samples TSV")->required();
  e->add_option("--base-auc", ev.base_auc, "reference AUC for RelaImpr");

  BenchArgs ab;
  auto* a = app.add_subcommand("ablate", "run the ablation matrix on synthetic data");
  add_spec_options(a, ab.gen);
  a->add_option("--seed", ab.seed, "data seed and first model seed");
  a->add_option("--seeds", ab.seeds, "model seeds per variant");
  a->add_option("--out", ab.out, "output directory");
  ab.config.attach(a);

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "train over a grid of tau, gamma or alpha");
  add_spec_options(s, sw.bench.gen);
  s->add_option("--param", sw.param, "tau | gamma | alpha")->required();
  s->add_option("--values", sw.values, "comma-separated values")->required();
  s->add_option("--seed", sw.bench.seed, "data seed and first model seed");
  s->add_option("--seeds", sw.bench.seeds, "model seeds per value");
  s->add_option("--out", sw.bench.out, "output directory");
  sw.bench.config.attach(s);
  sw.bench.seeds = 1;
  sw.bench.out = "sweep";

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "tabulate an ablation.csv");
  r->add_option("--input", rep.input, "ablation.csv path");
  r->add_option("--base", rep.base, "RelaImpr reference variant");
  r->add_option("--out", rep.out, "report CSV path");
  r->add_flag("--significance", rep.significance, "one-sided Wilcoxon rank-sum of full vs each variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*p) return cmd_prepare(prep);
    if (*bg) return cmd_build_graph(graph);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*a) return cmd_ablate(ab);
    if (*s) return cmd_sweep(sw);
    if (*r) return cmd_report(rep);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
