#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "duin/attention.hpp"
#include "duin/tensor.hpp"

namespace duin {

using Rng = std::mt19937_64;

/// Named trainable tensors. Names are unique; the text before the first '.'
/// is the parameter group.
template <class Real>
class ParameterStore {
 public:
  Tensor<Real> add(const std::string& name, Tensor<Real> t) {
    for (const auto& [n, _] : entries_) {
      if (n == name) throw ContractError("duplicate parameter name " + name);
    }
    t.set_requires_grad(true);
    entries_.emplace_back(name, t);
    return t;
  }

  Tensor<Real> uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<Real> v(numel(shape));
    for (auto& x : v) x = static_cast<Real>(dist(rng));
    return add(name, Tensor<Real>(std::move(shape), std::move(v)));
  }

  Tensor<Real> zeros(const std::string& name, Shape shape) { return add(name, Tensor<Real>::zeros(std::move(shape))); }

  const std::vector<std::pair<std::string, Tensor<Real>>>& entries() const { return entries_; }

  Tensor<Real> get(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
      if (n == name) return t;
    }
    throw ContractError("no parameter named " + name);
  }

  void zero_grad() {
    for (auto& [_, t] : entries_) {
      if (t.has_grad()) t.zero_grad();
    }
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : entries_) n += t.size();
    return n;
  }

  static std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }

 private:
  std::vector<std::pair<std::string, Tensor<Real>>> entries_;
};

/// y = x W + b over the last axis; accepts rank-2 or rank-3 input.
template <class Real>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore<Real>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
         bool bias = true)
      : in_(in), out_(out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight_ = store.uniform(name + ".weight", {in, out}, bound, rng);
    if (bias) bias_ = store.uniform(name + ".bias", {out}, bound, rng);
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const {
    if (x.shape().back() != in_) {
      throw DimensionError("linear expects last dim " + std::to_string(in_) + ", got " + shape_str(x.shape()));
    }
    if (x.rank() == 2) return apply2d(x);
    Shape out_shape = x.shape();
    out_shape.back() = out_;
    auto flat = reshape(x, {x.size() / in_, in_});
    return reshape(apply2d(flat), std::move(out_shape));
  }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  const Tensor<Real>& weight() const { return weight_; }
  const Tensor<Real>& bias() const { return bias_; }

 private:
  Tensor<Real> apply2d(const Tensor<Real>& x) const {
    auto y = matmul(x, weight_);
    return bias_.defined() ? add(y, bias_) : y;
  }

  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Tensor<Real> weight_;
  Tensor<Real> bias_;
};

/// Stack of Linear layers with relu between them. `widths` = {in, h1, ..., out}.
template <class Real>
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore<Real>& store, const std::string& name, const std::vector<std::size_t>& widths, Rng& rng,
      bool relu_last = false)
      : relu_last_(relu_last) {
    if (widths.size() < 2) throw ContractError("mlp needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      layers_.emplace_back(store, name + ".l" + std::to_string(i), widths[i], widths[i + 1], rng);
    }
  }

  Tensor<Real> operator()(Tensor<Real> x) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i](x);
      if (i + 1 < layers_.size() || relu_last_) x = relu(x);
    }
    return x;
  }

  const std::vector<Linear<Real>>& layers() const { return layers_; }
  std::size_t out_features() const { return layers_.back().out_features(); }

 private:
  std::vector<Linear<Real>> layers_;
  bool relu_last_ = false;
};

/// Multi-head attention with bias-free query/key/value/output projections, so a
/// zero value input gives an exactly zero output.
template <class Real>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<Real>& store, const std::string& name, std::size_t width, std::size_t heads,
                     Rng& rng)
      : heads_(heads),
        wq_(store, name + ".wq", width, width, rng, false),
        wk_(store, name + ".wk", width, width, rng, false),
        wv_(store, name + ".wv", width, width, rng, false),
        wo_(store, name + ".wo", width, width, rng, false) {
    if (width % heads != 0) throw DimensionError("attention width must be divisible by heads");
  }

  /// query [B,Tq,D]; keys/values [B,Tk,D]; mask B*Tk.
  Tensor<Real> operator()(const Tensor<Real>& query, const Tensor<Real>& keys, const Tensor<Real>& values,
                          std::span<const std::uint8_t> mask) const {
    auto q = wq_(query);
    auto k = wk_(keys);
    auto v = wv_(values);
    return wo_(masked_attention(q, k, v, mask, heads_));
  }

  std::size_t heads() const { return heads_; }
  const Linear<Real>& value_projection() const { return wv_; }
  const Linear<Real>& output_projection() const { return wo_; }

 private:
  std::size_t heads_ = 1;
  Linear<Real> wq_, wk_, wv_, wo_;
};

}  // namespace duin
