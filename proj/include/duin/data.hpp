#pragma once

// Behavior logs -> interaction samples.
//
// Event log: TSV with header `user_id item_id attribute_id timestamp event_type`.
// Sample file: one record per line, tab separated, fields in this order:
//   timestamp user label trigger_item trigger_attr trigger_ts target_item target_attr
//   context(comma list) profile(comma list) behaviors(space list of item:attr:ts)
// Tokens may not contain tab, comma, colon or space.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "duin/errors.hpp"

namespace duin {

enum class EventType { kImpression, kClick, kPurchase };

inline std::string_view event_name(EventType t) {
  switch (t) {
    case EventType::kImpression: return "impression";
    case EventType::kClick: return "click";
    case EventType::kPurchase: return "purchase";
  }
  return "?";
}

inline std::optional<EventType> parse_event(std::string_view s) {
  if (s == "impression") return EventType::kImpression;
  if (s == "click") return EventType::kClick;
  if (s == "purchase") return EventType::kPurchase;
  return std::nullopt;
}

struct BehaviorEvent {
  std::string user;
  std::string item;
  std::string attr;
  std::int64_t ts = 0;
  EventType type = EventType::kClick;
};

struct RawItem {
  std::string item;
  std::string attr;
  std::int64_t ts = 0;
  friend bool operator==(const RawItem&, const RawItem&) = default;
};

struct InteractionSample {
  std::int64_t ts = 0;
  std::string user;
  int label = 0;
  RawItem trigger;
  RawItem target;
  std::vector<std::string> context;
  std::vector<std::string> profile;
  std::vector<RawItem> behaviors;  // oldest first, all strictly before ts
  friend bool operator==(const InteractionSample&, const InteractionSample&) = default;
};

inline bool valid_token(std::string_view s) {
  return !s.empty() && s.find_first_of("\t,: \r\n") == std::string_view::npos;
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

struct ReadStats {
  std::size_t rows = 0;
  std::size_t malformed = 0;
  std::vector<std::size_t> malformed_lines;  // first few, 1-based
};

inline void write_events(const std::string& path, const std::vector<BehaviorEvent>& events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "user_id\titem_id\tattribute_id\ttimestamp\tevent_type\n";
  for (const auto& e : events) {
    out << e.user << '\t' << e.item << '\t' << e.attr << '\t' << e.ts << '\t' << event_name(e.type) << '\n';
  }
}

/// Malformed rows are counted and skipped.
inline std::vector<BehaviorEvent> read_events(const std::string& path, ReadStats* stats = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  ReadStats local;
  ReadStats& st = stats ? *stats : local;
  std::vector<BehaviorEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("user_id", 0) == 0) continue;
    if (line.empty()) continue;
    ++st.rows;
    auto cols = split_on(line, '\t');
    BehaviorEvent e;
    bool ok = cols.size() == 5 && valid_token(cols[0]) && valid_token(cols[1]) && valid_token(cols[2]);
    if (ok) {
      e.user = cols[0];
      e.item = cols[1];
      e.attr = cols[2];
      try {
        std::size_t used = 0;
        e.ts = std::stoll(cols[3], &used);
        ok = used == cols[3].size() && e.ts > 0;
      } catch (const std::exception&) {
        ok = false;
      }
      const auto type = ok ? parse_event(cols[4]) : std::nullopt;
      ok = ok && type.has_value();
      if (ok) e.type = *type;
    }
    if (!ok) {
      ++st.malformed;
      if (st.malformed_lines.size() < 10) st.malformed_lines.push_back(line_no);
      continue;
    }
    events.push_back(std::move(e));
  }
  return events;
}

/// Most recent click in (sample_time - window, sample_time].
inline std::optional<RawItem> derive_trigger(const std::vector<BehaviorEvent>& user_events, std::int64_t sample_time,
                                             std::int64_t window_seconds) {
  std::optional<RawItem> best;
  for (const auto& e : user_events) {
    if (e.type != EventType::kClick) continue;
    if (e.ts > sample_time) break;
    if (e.ts > sample_time - window_seconds) best = RawItem{e.item, e.attr, e.ts};
  }
  return best;
}

enum class NegativeMode { kImpression, kRandom };

struct AssembleConfig {
  std::size_t max_behaviors = 20;
  std::int64_t trigger_window_seconds = 4 * 3600;
  std::int64_t label_window_seconds = 1800;
  EventType positive_event = EventType::kClick;
  NegativeMode negatives = NegativeMode::kImpression;
  std::uint64_t seed = 1;  // random-negative mode only
};

struct AssembleStats {
  std::size_t impressions = 0;
  std::size_t dropped_no_trigger = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

inline std::string hour_bucket(std::int64_t ts) { return "hour=" + std::to_string(((ts / 3600) % 24) / 4); }
inline std::string position_bucket(std::size_t pos) { return "pos=" + std::to_string(std::min<std::size_t>(pos, 7)); }

/// Groups events per user, ordered by (timestamp, original order).
inline std::map<std::string, std::vector<BehaviorEvent>> group_by_user(const std::vector<BehaviorEvent>& events) {
  std::map<std::string, std::vector<BehaviorEvent>> by_user;
  for (const auto& e : events) by_user[e.user].push_back(e);
  for (auto& [_, evs] : by_user) {
    std::stable_sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) { return a.ts < b.ts; });
  }
  return by_user;
}

/// One sample per impression with a derivable trigger. Label 1 when the user's
/// positive event on the same item follows within the label window.
/// `profiles` maps user -> extra profile tokens (the user id token is always first).
inline std::vector<InteractionSample> assemble_samples(
    const std::vector<BehaviorEvent>& events, const AssembleConfig& cfg,
    const std::unordered_map<std::string, std::vector<std::string>>& profiles = {}, AssembleStats* stats = nullptr) {
  AssembleStats local;
  AssembleStats& st = stats ? *stats : local;
  std::vector<InteractionSample> samples;
  std::vector<std::string> catalog_items;
  std::unordered_map<std::string, std::string> catalog_attr;
  if (cfg.negatives == NegativeMode::kRandom) {
    for (const auto& e : events) {
      if (catalog_attr.emplace(e.item, e.attr).second) catalog_items.push_back(e.item);
    }
  }
  std::mt19937_64 rng(cfg.seed);
  const auto by_user = group_by_user(events);
  for (const auto& [user, evs] : by_user) {
    std::vector<std::string> profile{"user=" + user};
    if (auto it = profiles.find(user); it != profiles.end()) {
      profile.insert(profile.end(), it->second.begin(), it->second.end());
    }
    std::vector<RawItem> history;    // clicks/purchases seen so far, oldest first
    std::size_t next_history = 0;
    std::int64_t last_impression_ts = -1;
    std::size_t position = 0;
    for (std::size_t idx = 0; idx < evs.size(); ++idx) {
      const auto& e = evs[idx];
      if (e.type != EventType::kImpression) continue;
      ++st.impressions;
      // History = positive-type events strictly before this impression.
      while (next_history < evs.size() && evs[next_history].ts < e.ts) {
        const auto& h = evs[next_history];
        if (h.type != EventType::kImpression) history.push_back({h.item, h.attr, h.ts});
        ++next_history;
      }
      position = e.ts == last_impression_ts ? position + 1 : 0;
      last_impression_ts = e.ts;
      auto trigger = derive_trigger(evs, e.ts, cfg.trigger_window_seconds);
      if (!trigger) {
        ++st.dropped_no_trigger;
        continue;
      }
      int label = 0;
      for (std::size_t j = idx + 1; j < evs.size() && evs[j].ts <= e.ts + cfg.label_window_seconds; ++j) {
        if (evs[j].item == e.item && evs[j].ts > e.ts && evs[j].type == cfg.positive_event) {
          label = 1;
          break;
        }
      }
      InteractionSample s;
      s.ts = e.ts;
      s.user = user;
      s.trigger = *trigger;
      s.context = {hour_bucket(e.ts), position_bucket(position)};
      s.profile = profile;
      const std::size_t keep = std::min(cfg.max_behaviors, history.size());
      s.behaviors.assign(history.end() - static_cast<std::ptrdiff_t>(keep), history.end());
      if (cfg.negatives == NegativeMode::kImpression) {
        s.label = label;
        s.target = RawItem{e.item, e.attr, e.ts};
        (label ? st.positives : st.negatives)++;
        samples.push_back(std::move(s));
      } else if (label == 1) {
        s.label = 1;
        s.target = RawItem{e.item, e.attr, e.ts};
        ++st.positives;
        InteractionSample neg = s;
        std::uniform_int_distribution<std::size_t> pick(0, catalog_items.size() - 1);
        std::string item = catalog_items[pick(rng)];
        for (int tries = 0; tries < 8 && item == e.item; ++tries) item = catalog_items[pick(rng)];
        neg.label = 0;
        neg.target = RawItem{item, catalog_attr[item], e.ts};
        ++st.negatives;
        samples.push_back(std::move(s));
        samples.push_back(std::move(neg));
      }
    }
  }
  return samples;
}

/// Stable chronological order: timestamp, then user, then target item.
inline void chronological_sort(std::vector<InteractionSample>& samples) {
  std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) {
    if (a.ts != b.ts) return a.ts < b.ts;
    if (a.user != b.user) return a.user < b.user;
    return a.target.item < b.target.item;
  });
}

struct Split {
  std::vector<InteractionSample> train;
  std::vector<InteractionSample> val;
  std::vector<InteractionSample> test;
};

/// First 80% / next 10% / last 10% in chronological order.
inline Split split_chronological(std::vector<InteractionSample> samples) {
  if (samples.size() < 10) throw ContractError("split needs at least 10 samples, got " + std::to_string(samples.size()));
  chronological_sort(samples);
  const std::size_t n = samples.size();
  const std::size_t cut_train = n * 8 / 10;
  const std::size_t cut_val = n * 9 / 10;
  Split s;
  s.train.assign(std::make_move_iterator(samples.begin()), std::make_move_iterator(samples.begin() + cut_train));
  s.val.assign(std::make_move_iterator(samples.begin() + cut_train), std::make_move_iterator(samples.begin() + cut_val));
  s.test.assign(std::make_move_iterator(samples.begin() + cut_val), std::make_move_iterator(samples.end()));
  return s;
}

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

inline void write_samples(const std::string& path, const std::vector<InteractionSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& s : samples) {
    out << s.ts << '\t' << s.user << '\t' << s.label << '\t' << s.trigger.item << '\t' << s.trigger.attr << '\t'
        << s.trigger.ts << '\t' << s.target.item << '\t' << s.target.attr << '\t' << join(s.context, ',') << '\t'
        << join(s.profile, ',') << '\t';
    for (std::size_t i = 0; i < s.behaviors.size(); ++i) {
      const auto& b = s.behaviors[i];
      out << (i ? " " : "") << b.item << ':' << b.attr << ':' << b.ts;
    }
    out << '\n';
  }
}

inline std::vector<InteractionSample> read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<InteractionSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return DataError(path + ":" + std::to_string(line_no) + ": " + why);
    };
    auto cols = split_on(line, '\t');
    if (cols.size() != 11) throw fail("expected 11 fields, got " + std::to_string(cols.size()));
    InteractionSample s;
    try {
      s.ts = std::stoll(cols[0]);
      s.user = cols[1];
      s.label = std::stoi(cols[2]);
      s.trigger = {cols[3], cols[4], std::stoll(cols[5])};
      s.target = {cols[6], cols[7], s.ts};
    } catch (const std::exception&) {
      throw fail("bad numeric field");
    }
    if (s.label != 0 && s.label != 1) throw fail("label must be 0 or 1");
    s.context = split_on(cols[8], ',');
    s.profile = split_on(cols[9], ',');
    if (!cols[10].empty()) {
      for (const auto& tok : split_on(cols[10], ' ')) {
        auto parts = split_on(tok, ':');
        if (parts.size() != 3) throw fail("bad behavior token " + tok);
        s.behaviors.push_back({parts[0], parts[1], std::stoll(parts[2])});
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

/// Per-user click/purchase sequences restricted to events at or before `cutoff`.
inline std::vector<std::vector<RawItem>> behavior_sequences(const std::vector<BehaviorEvent>& events,
                                                            std::int64_t cutoff) {
  std::vector<std::vector<RawItem>> out;
  for (const auto& [_, evs] : group_by_user(events)) {
    std::vector<RawItem> seq;
    for (const auto& e : evs) {
      if (e.ts > cutoff) break;
      if (e.type != EventType::kImpression) seq.push_back({e.item, e.attr, e.ts});
    }
    if (!seq.empty()) out.push_back(std::move(seq));
  }
  return out;
}

/// `user<TAB>item:attr:ts item:attr:ts ...`
inline void write_sequences(const std::string& path, const std::vector<std::vector<RawItem>>& seqs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  std::size_t idx = 0;
  for (const auto& seq : seqs) {
    out << idx++ << '\t';
    for (std::size_t i = 0; i < seq.size(); ++i) out << (i ? " " : "") << seq[i].item << ':' << seq[i].attr << ':' << seq[i].ts;
    out << '\n';
  }
}

inline std::vector<std::vector<RawItem>> read_sequences(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::vector<RawItem>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = split_on(line, '\t');
    if (cols.size() != 2) throw DataError("malformed sequence line in " + path);
    std::vector<RawItem> seq;
    for (const auto& tok : split_on(cols[1], ' ')) {
      auto parts = split_on(tok, ':');
      if (parts.size() != 3) throw DataError("bad sequence token " + tok);
      seq.push_back({parts[0], parts[1], std::stoll(parts[2])});
    }
    out.push_back(std::move(seq));
  }
  return out;
}

/// `user_id<TAB>token,token,...` sidecar of extra profile tokens.
inline std::unordered_map<std::string, std::vector<std::string>> read_profiles(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::unordered_map<std::string, std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.rfind("user_id", 0) == 0) continue;
    auto cols = split_on(line, '\t');
    if (cols.size() != 2) throw DataError("malformed profile line in " + path);
    out[cols[0]] = split_on(cols[1], ',');
  }
  return out;
}

}  // namespace duin
