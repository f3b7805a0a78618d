#pragma once

// Synthetic trigger-induced sessions with planted intents.
//
// Items belong to attribute clusters, carry a global Zipf popularity, and every
// attribute has a fixed complementary partner. Each session: the user clicks a
// trigger, then sees a short impression list. One impression follows the
// session's intent (same attribute as the trigger, a trending item, or an item of
// the complementary attribute); the rest are uniform items or distractors that
// match a different intent. The intended item is clicked with probability
// 1 - noise, every other impression with probability noise.
//
// Users belong to one of three segments, drawn with the mixture weights; a
// session takes the user's segment intent with probability `segment_strength`
// and otherwise draws from the mixture, so the marginal intent frequencies
// equal the mixture.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "duin/data.hpp"

namespace duin {

enum class Intent : std::uint8_t { kSimilar = 0, kTrending = 1, kComplementary = 2 };

inline std::string_view intent_name(Intent i) {
  switch (i) {
    case Intent::kSimilar: return "similar";
    case Intent::kTrending: return "trending";
    case Intent::kComplementary: return "complementary";
  }
  return "?";
}

struct SyntheticSpec {
  std::size_t n_users = 1500;
  std::size_t n_items = 2000;
  std::size_t n_attributes = 50;
  std::size_t sessions = 8000;
  std::array<double, 3> mixture{0.469, 0.308, 0.223};  // similar, trending, complementary
  double noise_rate = 0.05;
  double segment_strength = 0.7;
  double distractor_rate = 0.0;  // share of negatives drawn from another intent instead of uniform non-matching
  std::size_t impressions_per_session = 4;
  std::size_t trending_items = 40;
  std::size_t favorite_attributes = 3;
  double purchase_rate = 0.3;
  std::uint64_t seed = 1;

  void validate() const {
    const double total = mixture[0] + mixture[1] + mixture[2];
    if (mixture[0] < 0 || mixture[1] < 0 || mixture[2] < 0 || std::abs(total - 1.0) > 1e-9) {
      throw ContractError("intent mixture weights must be non-negative and sum to 1");
    }
    if (n_users == 0 || n_items < 2 || n_attributes < 2 || n_items < n_attributes || impressions_per_session == 0) {
      throw ContractError("synthetic spec sizes are too small");
    }
    if (trending_items == 0 || trending_items > n_items) throw ContractError("trending_items out of range");
    if (noise_rate < 0 || noise_rate > 1 || segment_strength < 0 || segment_strength > 1) {
      throw ContractError("rates must lie in [0,1]");
    }
  }
};

struct SessionTruth {
  std::size_t session = 0;
  Intent intent = Intent::kSimilar;
  std::string user;
  std::string trigger_item;
  std::string positive_item;
};

struct SyntheticData {
  std::vector<BehaviorEvent> events;
  std::vector<SessionTruth> truth;
  std::vector<std::pair<std::string, std::string>> user_segments;  // user, profile token
  std::vector<std::string> item_attr;                              // attribute token per item index
};

class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(SyntheticSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
    spec_.validate();
    plant_catalog();
  }

  SyntheticData generate() {
    SyntheticData out;
    for (std::size_t i = 0; i < spec_.n_items; ++i) out.item_attr.push_back(attr_token(item_attr_[i]));

    std::discrete_distribution<int> mixture(spec_.mixture.begin(), spec_.mixture.end());
    std::vector<Intent> segment(spec_.n_users);
    std::vector<std::vector<std::size_t>> favorites(spec_.n_users);
    // Segments by quota (largest remainder), so the user population carries the
    // mixture exactly rather than up to sampling noise.
    {
      std::array<std::size_t, 3> quota{};
      std::array<double, 3> rest{};
      std::size_t assigned = 0;
      for (int i = 0; i < 3; ++i) {
        const double want = spec_.mixture[i] * static_cast<double>(spec_.n_users);
        quota[i] = static_cast<std::size_t>(want);
        rest[i] = want - static_cast<double>(quota[i]);
        assigned += quota[i];
      }
      while (assigned < spec_.n_users) {
        const auto i = static_cast<std::size_t>(std::max_element(rest.begin(), rest.end()) - rest.begin());
        ++quota[i];
        rest[i] = -1;
        ++assigned;
      }
      std::size_t u = 0;
      for (int i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < quota[i]; ++k) segment[u++] = static_cast<Intent>(i);
      std::shuffle(segment.begin(), segment.end(), rng_);
    }
    for (std::size_t u = 0; u < spec_.n_users; ++u) {
      for (std::size_t f = 0; f < spec_.favorite_attributes; ++f) favorites[u].push_back(uniform(spec_.n_attributes));
      out.user_segments.emplace_back(user_token(u), "segment=" + std::string(intent_name(segment[u])));
    }

    std::bernoulli_distribution follow_segment(spec_.segment_strength);
    std::bernoulli_distribution noise(spec_.noise_rate);
    std::bernoulli_distribution distractor(spec_.distractor_rate);
    std::bernoulli_distribution purchase(spec_.purchase_rate);
    std::bernoulli_distribution off_favorite(0.2);
    constexpr std::int64_t kStart = 1'700'000'000;
    constexpr std::int64_t kSessionGap = 37;

    for (std::size_t s = 0; s < spec_.sessions; ++s) {
      const std::size_t u = uniform(spec_.n_users);
      const std::int64_t t0 = kStart + static_cast<std::int64_t>(s) * kSessionGap;
      const Intent intent = follow_segment(rng_) ? segment[u] : static_cast<Intent>(mixture(rng_));

      const std::size_t trigger_attr =
          off_favorite(rng_) ? uniform(spec_.n_attributes) : favorites[u][uniform(favorites[u].size())];
      const std::size_t trigger = item_with_attr(trigger_attr);
      out.events.push_back(event(u, trigger, t0, EventType::kClick));

      std::vector<std::size_t> shown;
      const std::size_t positive = item_for_intent(intent, trigger, trigger_attr);
      shown.push_back(positive);
      while (shown.size() < spec_.impressions_per_session) {
        std::size_t item;
        if (distractor(rng_)) {
          const auto other = static_cast<Intent>((static_cast<int>(intent) + 1 + uniform(2)) % 3);
          item = item_for_intent(other, trigger, trigger_attr);
        } else {
          item = uniform_non_matching(trigger_attr);
        }
        shown.push_back(item);
      }
      std::shuffle(shown.begin(), shown.end(), rng_);
      for (auto item : shown) out.events.push_back(event(u, item, t0 + 1, EventType::kImpression));
      std::int64_t click_ts = t0 + 2;
      for (auto item : shown) {
        const bool clicked = item == positive ? !noise(rng_) : noise(rng_);
        if (!clicked) continue;
        out.events.push_back(event(u, item, click_ts++, EventType::kClick));
        if (purchase(rng_)) out.events.push_back(event(u, item, t0 + 20, EventType::kPurchase));
      }
      out.truth.push_back({s, intent, user_token(u), item_token(trigger), item_token(positive)});
    }
    return out;
  }

  /// Writes events.tsv, users.tsv and ground_truth.tsv into `dir`.
  static void write(const SyntheticData& data, const std::string& dir) {
    write_events(dir + "/events.tsv", data.events);
    std::ofstream users(dir + "/users.tsv", std::ios::binary);
    users << "user_id\tprofile\n";
    for (const auto& [u, seg] : data.user_segments) users << u << '\t' << seg << '\n';
    std::ofstream truth(dir + "/ground_truth.tsv", std::ios::binary);
    truth << "session_id\tintent\n";
    for (const auto& t : data.truth) truth << t.session << '\t' << intent_name(t.intent) << '\n';
    if (!users || !truth) throw DataError("cannot write synthetic outputs to " + dir);
  }

  std::size_t complement_of(std::size_t attr) const { return complement_[attr]; }
  std::size_t attr_of(std::size_t item) const { return item_attr_[item]; }
  bool is_trending(std::size_t item) const { return trending_rank_[item] < spec_.trending_items; }

  static std::string item_token(std::size_t i) { return "i" + std::to_string(i); }
  static std::string attr_token(std::size_t a) { return "a" + std::to_string(a); }
  static std::string user_token(std::size_t u) { return "u" + std::to_string(u); }

 private:
  std::size_t uniform(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

  void plant_catalog() {
    item_attr_.resize(spec_.n_items);
    for (std::size_t i = 0; i < spec_.n_items; ++i) item_attr_[i] = i % spec_.n_attributes;
    std::shuffle(item_attr_.begin(), item_attr_.end(), rng_);
    by_attr_.assign(spec_.n_attributes, {});
    for (std::size_t i = 0; i < spec_.n_items; ++i) by_attr_[item_attr_[i]].push_back(i);

    // Popularity ranking: rank r gets Zipf weight 1/(r+1).
    std::vector<std::size_t> order(spec_.n_items);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    trending_rank_.assign(spec_.n_items, 0);
    for (std::size_t r = 0; r < order.size(); ++r) trending_rank_[order[r]] = r;
    trending_.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec_.trending_items));
    std::vector<double> w;
    for (std::size_t r = 0; r < spec_.trending_items; ++r) w.push_back(1.0 / static_cast<double>(r + 1));
    trending_pick_ = std::discrete_distribution<std::size_t>(w.begin(), w.end());

    // Complementary pairs over a shuffled attribute order; an odd leftover maps to the first attribute.
    std::vector<std::size_t> attrs(spec_.n_attributes);
    std::iota(attrs.begin(), attrs.end(), 0);
    std::shuffle(attrs.begin(), attrs.end(), rng_);
    complement_.assign(spec_.n_attributes, 0);
    for (std::size_t i = 0; i + 1 < attrs.size(); i += 2) {
      complement_[attrs[i]] = attrs[i + 1];
      complement_[attrs[i + 1]] = attrs[i];
    }
    if (attrs.size() % 2 == 1) complement_[attrs.back()] = attrs.front();
  }

  std::size_t item_with_attr(std::size_t attr, std::size_t avoid = SIZE_MAX) {
    const auto& pool = by_attr_[attr];
    std::size_t item = pool[uniform(pool.size())];
    for (int tries = 0; tries < 8 && item == avoid && pool.size() > 1; ++tries) item = pool[uniform(pool.size())];
    return item;
  }

  std::size_t item_for_intent(Intent intent, std::size_t trigger, std::size_t trigger_attr) {
    switch (intent) {
      case Intent::kSimilar: return item_with_attr(trigger_attr, trigger);
      case Intent::kTrending: return trending_[trending_pick_(rng_)];
      case Intent::kComplementary: return item_with_attr(complement_[trigger_attr]);
    }
    return trigger;
  }

  std::size_t uniform_non_matching(std::size_t trigger_attr) {
    for (;;) {
      const std::size_t item = uniform(spec_.n_items);
      const std::size_t a = item_attr_[item];
      if (a != trigger_attr && a != complement_[trigger_attr] && !is_trending(item)) return item;
    }
  }

  BehaviorEvent event(std::size_t user, std::size_t item, std::int64_t ts, EventType type) const {
    return {user_token(user), item_token(item), attr_token(item_attr_[item]), ts, type};
  }

  SyntheticSpec spec_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> item_attr_;
  std::vector<std::vector<std::size_t>> by_attr_;
  std::vector<std::size_t> trending_rank_;
  std::vector<std::size_t> trending_;
  std::discrete_distribution<std::size_t> trending_pick_;
  std::vector<std::size_t> complement_;
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) { return SyntheticGenerator(spec).generate(); }

}  // namespace duin
