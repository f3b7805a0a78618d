#pragma once

// `key = value` configuration covering model, training and data assembly.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "duin/data.hpp"
#include "duin/model.hpp"
#include "duin/optim.hpp"

namespace duin {

struct TrainConfig {
  ModelConfig model;
  double lr = 0.001;
  std::size_t batch_size = 64;
  std::size_t epochs = 3;
  std::uint64_t seed = 1;
  std::size_t window = 3;  // co-occurrence window W
  double graph_history = 0.25;  // leading share of the training period used only for the graph
  double trigger_window_hours = 4;
  std::int64_t label_window_seconds = 1800;
  EventType positive_event = EventType::kClick;
  NegativeMode negatives = NegativeMode::kImpression;
  std::string explicit_attr = "attribute";  // the attribute column used for explicit matching

  void validate() const {
    if (model.alpha < 0) throw UsageError("alpha must be >= 0");
    if (model.tau <= 0) throw UsageError("tau must be > 0");
    if (model.gamma < 0 || model.gamma > 1) throw UsageError("gamma must lie in [0,1]");
    if (batch_size < 2 && model.ssl_active()) throw UsageError("batch_size must be >= 2 when the contrastive task is on");
    if (batch_size == 0 || epochs == 0) throw UsageError("batch_size and epochs must be positive");
    if (model.dim == 0 || model.item_width() % model.heads != 0) throw UsageError("2*dim must be divisible by heads");
    if (window == 0) throw UsageError("window must be >= 1");
    if (graph_history < 0 || graph_history >= 1) throw UsageError("graph_history must lie in [0,1)");
    if (!(lr > 0)) throw UsageError("lr must be > 0");
    if (explicit_attr != "attribute") throw UsageError("explicit_attr: only 'attribute' is available in the event format");
  }

  AssembleConfig assemble() const {
    AssembleConfig a;
    a.max_behaviors = model.seq_len;
    a.trigger_window_seconds = static_cast<std::int64_t>(trigger_window_hours * 3600.0);
    a.label_window_seconds = label_window_seconds;
    a.positive_event = positive_event;
    a.negatives = negatives;
    a.seed = seed;
    return a;
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw UsageError("bad value for " + key + ": '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError("bad value for " + key + ": '" + text + "' (expected true/false)");
}

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

class ConfigSchema {
 public:
  struct Key {
    std::string name;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
  };

  static const std::vector<Key>& keys() {
    static const std::vector<Key> k = build();
    return k;
  }

  static std::string key_list() {
    std::string s;
    for (const auto& k : keys()) s += (s.empty() ? "" : ", ") + k.name;
    return s;
  }

  static void set(TrainConfig& c, const std::string& key, const std::string& value) {
    for (const auto& k : keys()) {
      if (k.name == key) {
        k.set(c, value);
        return;
      }
    }
    throw UsageError("unknown config key '" + key + "'; valid keys: " + key_list());
  }

  static void apply_text(TrainConfig& c, std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
      set(c, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
  }

  static void apply_file(TrainConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    apply_text(c, in);
  }

  /// Every key with its resolved value, one per line, in schema order.
  static std::string snapshot(const TrainConfig& c) {
    std::string s;
    for (const auto& k : keys()) s += k.name + " = " + k.get(c) + "\n";
    return s;
  }

  static std::uint64_t hash(const TrainConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : snapshot(c)) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static std::vector<Key> build() {
    using detail::fmt_double;
    using detail::parse_bool;
    using detail::parse_number;
    std::vector<Key> k;
    auto size_key = [&](std::string name, auto member) {
      k.push_back({name, [=](TrainConfig& c, const std::string& v) { member(c) = parse_number<std::size_t>(name, v); },
                   [=](const TrainConfig& c) { return std::to_string(member(const_cast<TrainConfig&>(c))); }});
    };
    auto real_key = [&](std::string name, auto member) {
      k.push_back({name, [=](TrainConfig& c, const std::string& v) { member(c) = parse_number<double>(name, v); },
                   [=](const TrainConfig& c) { return fmt_double(member(const_cast<TrainConfig&>(c))); }});
    };
    auto bool_key = [&](std::string name, auto member) {
      k.push_back({name, [=](TrainConfig& c, const std::string& v) { member(c) = parse_bool(name, v); },
                   [=](const TrainConfig& c) { return std::string(member(const_cast<TrainConfig&>(c)) ? "true" : "false"); }});
    };
    real_key("lr", [](TrainConfig& c) -> double& { return c.lr; });
    size_key("batch_size", [](TrainConfig& c) -> std::size_t& { return c.batch_size; });
    size_key("epochs", [](TrainConfig& c) -> std::size_t& { return c.epochs; });
    k.push_back({"seed", [](TrainConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});
    real_key("alpha", [](TrainConfig& c) -> double& { return c.model.alpha; });
    real_key("tau", [](TrainConfig& c) -> double& { return c.model.tau; });
    real_key("gamma", [](TrainConfig& c) -> double& { return c.model.gamma; });
    size_key("seq_len", [](TrainConfig& c) -> std::size_t& { return c.model.seq_len; });
    size_key("explicit_len", [](TrainConfig& c) -> std::size_t& { return c.model.explicit_len; });
    size_key("dim", [](TrainConfig& c) -> std::size_t& { return c.model.dim; });
    size_key("heads", [](TrainConfig& c) -> std::size_t& { return c.model.heads; });
    size_key("window", [](TrainConfig& c) -> std::size_t& { return c.window; });
    real_key("graph_history", [](TrainConfig& c) -> double& { return c.graph_history; });
    bool_key("no_eiem", [](TrainConfig& c) -> bool& { return c.model.flags.no_eiem; });
    bool_key("no_liem", [](TrainConfig& c) -> bool& { return c.model.flags.no_liem; });
    bool_key("no_iumm", [](TrainConfig& c) -> bool& { return c.model.flags.no_iumm; });
    bool_key("no_ssl", [](TrainConfig& c) -> bool& { return c.model.flags.no_ssl; });
    bool_key("sii", [](TrainConfig& c) -> bool& { return c.model.flags.sii; });
    bool_key("trigger_agnostic", [](TrainConfig& c) -> bool& { return c.model.flags.trigger_agnostic; });
    bool_key("sample_at_infer", [](TrainConfig& c) -> bool& { return c.model.sample_at_infer; });
    k.push_back({"gate_squash",
                 [](TrainConfig& c, const std::string& v) {
                   if (v == "sigmoid") c.model.squash = GateSquash::kSigmoid;
                   else if (v == "clamp") c.model.squash = GateSquash::kClamp;
                   else throw UsageError("gate_squash must be sigmoid or clamp");
                 },
                 [](const TrainConfig& c) {
                   return std::string(c.model.squash == GateSquash::kSigmoid ? "sigmoid" : "clamp");
                 }});
    k.push_back({"ssl_negatives",
                 [](TrainConfig& c, const std::string& v) {
                   if (v == "other_samples") c.model.negatives = NegativeSet::kOtherSamples;
                   else if (v == "all_other_views") c.model.negatives = NegativeSet::kAllOtherViews;
                   else throw UsageError("ssl_negatives must be other_samples or all_other_views");
                 },
                 [](const TrainConfig& c) {
                   return std::string(c.model.negatives == NegativeSet::kOtherSamples ? "other_samples"
                                                                                      : "all_other_views");
                 }});
    real_key("trigger_window_hours", [](TrainConfig& c) -> double& { return c.trigger_window_hours; });
    k.push_back({"label_window_seconds",
                 [](TrainConfig& c, const std::string& v) {
                   c.label_window_seconds = parse_number<std::int64_t>("label_window_seconds", v);
                 },
                 [](const TrainConfig& c) { return std::to_string(c.label_window_seconds); }});
    k.push_back({"positive_event",
                 [](TrainConfig& c, const std::string& v) {
                   if (v == "click") c.positive_event = EventType::kClick;
                   else if (v == "purchase") c.positive_event = EventType::kPurchase;
                   else throw UsageError("positive_event must be click or purchase");
                 },
                 [](const TrainConfig& c) { return std::string(event_name(c.positive_event)); }});
    k.push_back({"negatives",
                 [](TrainConfig& c, const std::string& v) {
                   if (v == "impression") c.negatives = NegativeMode::kImpression;
                   else if (v == "random") c.negatives = NegativeMode::kRandom;
                   else throw UsageError("negatives must be impression or random");
                 },
                 [](const TrainConfig& c) {
                   return std::string(c.negatives == NegativeMode::kImpression ? "impression" : "random");
                 }});
    k.push_back({"explicit_attr", [](TrainConfig& c, const std::string& v) { c.explicit_attr = v; },
                 [](const TrainConfig& c) { return c.explicit_attr; }});
    return k;
  }
};

}  // namespace duin
