#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "duin/nn.hpp"

namespace duin {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over every parameter of a store. Parameters that received no gradient
/// in a step (an ablated branch) are left untouched.
template <class Real>
class Adam {
 public:
  struct Moments {
    std::vector<Real> m;
    std::vector<Real> v;
  };

  explicit Adam(ParameterStore<Real>& store, AdamOptions opt = {}) : store_(&store), opt_(opt) {
    for (const auto& [name, t] : store.entries()) state_[name] = {std::vector<Real>(t.size()), std::vector<Real>(t.size())};
  }

  void step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(steps_));
    for (const auto& [name, param] : store_->entries()) {
      Tensor<Real> t = param;
      if (!t.has_grad()) continue;
      auto& s = state_.at(name);
      auto w = t.data();
      auto g = t.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        const double m = opt_.beta1 * s.m[i] + (1 - opt_.beta1) * gi;
        const double v = opt_.beta2 * s.v[i] + (1 - opt_.beta2) * gi * gi;
        s.m[i] = static_cast<Real>(m);
        s.v[i] = static_cast<Real>(v);
        w[i] = static_cast<Real>(w[i] - opt_.lr * (m / c1) / (std::sqrt(v / c2) + opt_.eps));
      }
    }
  }

  void zero_grad() { store_->zero_grad(); }

  std::uint64_t steps() const { return steps_; }
  void set_steps(std::uint64_t s) { steps_ = s; }
  Moments& moments(const std::string& name) { return state_.at(name); }
  const Moments& moments(const std::string& name) const { return state_.at(name); }
  const AdamOptions& options() const { return opt_; }

 private:
  ParameterStore<Real>* store_;
  AdamOptions opt_;
  std::unordered_map<std::string, Moments> state_;
  std::uint64_t steps_ = 0;
};

}  // namespace duin
