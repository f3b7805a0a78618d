#pragma once

// Directed co-occurrence graph over items and attributes.
//
// Three count views are kept for ordered pairs inside a sliding window:
//   transition    item -> item
//   complementary attribute -> attribute
//   popularity    attribute -> item

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "duin/embedding.hpp"
#include "duin/nn.hpp"

namespace duin {

struct ItemRef {
  std::uint32_t item = 0;
  std::uint32_t attr = 0;
  friend bool operator==(const ItemRef&, const ItemRef&) = default;
};

using ItemSequence = std::vector<ItemRef>;

struct RelationTriple {
  std::uint64_t transition = 0;
  std::uint64_t complementary = 0;
  std::uint64_t popularity = 0;
  friend bool operator==(const RelationTriple&, const RelationTriple&) = default;
};

inline constexpr std::uint32_t kBucketCount = 32;

/// floor(log2(1 + c)) clamped to [0, 31].
inline std::uint32_t bucketize(std::uint64_t count) {
  if (count >= (std::uint64_t{1} << 32)) return kBucketCount - 1;
  const auto b = static_cast<std::uint32_t>(std::bit_width(count + 1) - 1);
  return std::min(b, kBucketCount - 1);
}

class CoocGraph {
 public:
  using CountMap = std::unordered_map<std::uint64_t, std::uint64_t>;

  static std::uint64_t key(std::uint32_t src, std::uint32_t dst) {
    return (static_cast<std::uint64_t>(src) << 32) | dst;
  }

  /// Counts every ordered pair (p, p+o), o in 1..window, within each sequence.
  static CoocGraph build(const std::vector<ItemSequence>& sequences, std::size_t window) {
    if (window < 1) throw ContractError("co-occurrence window must be >= 1");
    CoocGraph g;
    g.window_ = window;
    for (const auto& seq : sequences) g.add_sequence(seq);
    return g;
  }

  void add_sequence(const ItemSequence& seq) {
    for (std::size_t p = 0; p < seq.size(); ++p) {
      const std::size_t last = std::min(seq.size() - 1, p + window_);
      for (std::size_t q = p + 1; q <= last; ++q) {
        ++transition_[key(seq[p].item, seq[q].item)];
        ++complementary_[key(seq[p].attr, seq[q].attr)];
        ++popularity_[key(seq[p].attr, seq[q].item)];
      }
    }
  }

  /// Count addition; graphs built from disjoint sequence sets merge into the union's graph.
  void merge(const CoocGraph& other) {
    if (other.window_ != window_) throw ContractError("cannot merge graphs with different windows");
    for (const auto& [k, c] : other.transition_) transition_[k] += c;
    for (const auto& [k, c] : other.complementary_) complementary_[k] += c;
    for (const auto& [k, c] : other.popularity_) popularity_[k] += c;
  }

  RelationTriple relation(const ItemRef& from, const ItemRef& to) const {
    return {lookup(transition_, from.item, to.item), lookup(complementary_, from.attr, to.attr),
            lookup(popularity_, from.attr, to.item)};
  }

  std::uint64_t transition_count(std::uint32_t a, std::uint32_t b) const { return lookup(transition_, a, b); }
  std::uint64_t complementary_count(std::uint32_t a, std::uint32_t b) const { return lookup(complementary_, a, b); }
  std::uint64_t popularity_count(std::uint32_t a, std::uint32_t b) const { return lookup(popularity_, a, b); }

  const CountMap& transition() const { return transition_; }
  const CountMap& complementary() const { return complementary_; }
  const CountMap& popularity() const { return popularity_; }
  std::size_t window() const { return window_; }

  std::uint64_t transition_mass() const {
    std::uint64_t m = 0;
    for (const auto& [_, c] : transition_) m += c;
    return m;
  }

  /// Writes transition.tsv, complementary.tsv, popularity.tsv (`src<TAB>dst<TAB>count`, sorted).
  void save(const std::string& dir) const {
    write_view(dir + "/transition.tsv", transition_);
    write_view(dir + "/complementary.tsv", complementary_);
    write_view(dir + "/popularity.tsv", popularity_);
    std::ofstream meta(dir + "/graph.meta", std::ios::binary);
    meta << "window\t" << window_ << '\n';
  }

  static CoocGraph load(const std::string& dir) {
    CoocGraph g;
    std::ifstream meta(dir + "/graph.meta", std::ios::binary);
    std::string name;
    if (meta >> name >> g.window_; !meta || name != "window") throw DataError("bad graph.meta in " + dir);
    g.transition_ = read_view(dir + "/transition.tsv");
    g.complementary_ = read_view(dir + "/complementary.tsv");
    g.popularity_ = read_view(dir + "/popularity.tsv");
    return g;
  }

 private:
  static std::uint64_t lookup(const CountMap& m, std::uint32_t a, std::uint32_t b) {
    auto it = m.find(key(a, b));
    return it == m.end() ? 0 : it->second;
  }

  static void write_view(const std::string& path, const CountMap& m) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> rows(m.begin(), m.end());
    std::sort(rows.begin(), rows.end());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& [k, c] : rows) out << (k >> 32) << '\t' << (k & 0xffffffffu) << '\t' << c << '\n';
  }

  static CountMap read_view(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    CountMap m;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::uint64_t src = 0, dst = 0, count = 0;
      if (!(row >> src >> dst >> count)) throw DataError("malformed graph row in " + path + ": " + line);
      m[key(static_cast<std::uint32_t>(src), static_cast<std::uint32_t>(dst))] = count;
    }
    return m;
  }

  std::size_t window_ = 1;
  CountMap transition_;
  CountMap complementary_;
  CountMap popularity_;
};

/// Relevance score: sigmoid(MLP(E(bucket(r_t)), E(bucket(r_p)), E(bucket(r_c)))).
/// Identical bucket triples are evaluated once per call and shared.
template <class Real>
class RelevanceScorer {
 public:
  RelevanceScorer() = default;
  RelevanceScorer(ParameterStore<Real>& store, const std::string& name, std::size_t dim, std::size_t hidden,
                  Rng& rng)
      : transition_(store, name + ".transition_emb", kBucketCount, dim, rng, false),
        popularity_(store, name + ".popularity_emb", kBucketCount, dim, rng, false),
        complementary_(store, name + ".complementary_emb", kBucketCount, dim, rng, false),
        mlp_(store, name + ".mlp", {3 * dim, hidden, 1}, rng) {}

  /// One Pi in (0,1) per triple; shape [n].
  Tensor<Real> operator()(const std::vector<RelationTriple>& triples) const {
    if (triples.empty()) throw ContractError("relevance score over zero relations");
    std::vector<std::uint32_t> slot(triples.size());
    std::unordered_map<std::uint32_t, std::uint32_t> seen;
    std::vector<std::uint32_t> bt, bp, bc;
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const auto t = bucketize(triples[i].transition);
      const auto p = bucketize(triples[i].popularity);
      const auto c = bucketize(triples[i].complementary);
      const std::uint32_t code = (t * kBucketCount + p) * kBucketCount + c;
      auto [it, inserted] = seen.try_emplace(code, static_cast<std::uint32_t>(bt.size()));
      if (inserted) {
        bt.push_back(t);
        bp.push_back(p);
        bc.push_back(c);
      }
      slot[i] = it->second;
    }
    auto features = concat<Real>({transition_.lookup(bt), popularity_.lookup(bp), complementary_.lookup(bc)}, 1);
    auto unique_scores = sigmoid(mlp_(features));  // [U, 1]
    return reshape(gather_rows(unique_scores, slot), {triples.size()});
  }

  const Mlp<Real>& mlp() const { return mlp_; }

 private:
  EmbeddingTable<Real> transition_;
  EmbeddingTable<Real> popularity_;
  EmbeddingTable<Real> complementary_;
  Mlp<Real> mlp_;
};

}  // namespace duin
