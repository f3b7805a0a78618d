#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "duin/nn.hpp"

namespace duin {

inline constexpr std::uint32_t kPaddingId = 0;
inline constexpr std::uint32_t kUnknownId = 1;
inline constexpr std::uint32_t kFirstTokenId = 2;

/// Raw token -> dense id. Id 0 is padding, id 1 stands for every unknown token.
class FeatureVocab {
 public:
  std::uint32_t add(const std::string& token) {
    auto [it, inserted] = ids_.try_emplace(token, static_cast<std::uint32_t>(tokens_.size() + kFirstTokenId));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  std::uint32_t id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnknownId : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  /// Token for a real id (>= 2).
  const std::string& token(std::uint32_t id) const {
    if (id < kFirstTokenId || id - kFirstTokenId >= tokens_.size()) {
      throw IndexError("vocab id " + std::to_string(id) + " has no token");
    }
    return tokens_[id - kFirstTokenId];
  }

  /// Number of rows an embedding table over this vocab needs (includes ids 0 and 1).
  std::size_t table_size() const { return tokens_.size() + kFirstTokenId; }
  std::size_t token_count() const { return tokens_.size(); }

  /// `token<TAB>id` per line, ascending id.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocab " + path);
    for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << (i + kFirstTokenId) << '\n';
  }

  static FeatureVocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocab " + path);
    FeatureVocab vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw DataError(path + ":" + std::to_string(line_no) + ": missing tab");
      const auto token = line.substr(0, tab);
      const auto expected = std::stoul(line.substr(tab + 1));
      if (vocab.add(token) != expected) {
        throw DataError(path + ":" + std::to_string(line_no) + ": ids must be dense and ascending from 2");
      }
    }
    return vocab;
  }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> tokens_;
};

/// Trainable [vocab_size, dim] table. Row 0 is padding: always zero, never updated.
template <class Real>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(ParameterStore<Real>& store, const std::string& name, std::size_t vocab_size, std::size_t dim,
                 Rng& rng, bool padding = true)
      : dim_(dim), padding_(padding) {
    if (vocab_size == 0 || dim == 0) throw ContractError("embedding table needs positive vocab and dim");
    weights_ = store.uniform(name, {vocab_size, dim}, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
    if (padding_) std::fill_n(weights_.data().begin(), dim, Real(0));
  }

  Tensor<Real> lookup(std::span<const std::uint32_t> ids) const {
    return gather_rows(weights_, ids, padding_ ? std::optional<std::uint32_t>(kPaddingId) : std::nullopt);
  }

  /// Newest `length` ids right-padded with 0. Returns [length, dim] plus a real-position mask.
  std::pair<Tensor<Real>, std::vector<std::uint8_t>> embed_sequence(std::span<const std::uint32_t> sequence,
                                                                   std::size_t length) const {
    auto [ids, mask] = pad_sequence(sequence, length);
    return {lookup(ids), std::move(mask)};
  }

  static std::pair<std::vector<std::uint32_t>, std::vector<std::uint8_t>> pad_sequence(
      std::span<const std::uint32_t> sequence, std::size_t length) {
    std::vector<std::uint32_t> ids(length, kPaddingId);
    std::vector<std::uint8_t> mask(length, 0);
    const std::size_t keep = std::min(length, sequence.size());
    const std::size_t start = sequence.size() - keep;
    for (std::size_t i = 0; i < keep; ++i) {
      ids[i] = sequence[start + i];
      mask[i] = ids[i] != kPaddingId;
    }
    return {std::move(ids), std::move(mask)};
  }

  std::size_t vocab_size() const { return weights_.dim(0); }
  std::size_t dim() const { return dim_; }
  const Tensor<Real>& weights() const { return weights_; }

 private:
  std::size_t dim_ = 0;
  bool padding_ = true;
  Tensor<Real> weights_;
};

}  // namespace duin
