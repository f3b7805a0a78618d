#pragma once

// Masked multi-head scaled dot-product attention as a single differentiable op.
//
// Inputs are already projected: q [B,Tq,D], k/v [B,Tk,D]. Heads split D into
// equal slices of D/heads. key_mask has B*Tk entries; 0 excludes a key from
// the softmax. A query with no valid key yields a zero output row.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "duin/tensor.hpp"

namespace duin {

template <class Real>
Tensor<Real> masked_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                              std::span<const std::uint8_t> key_mask, std::size_t heads) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 || k.shape() != v.shape() || q.dim(0) != k.dim(0) ||
      q.dim(2) != k.dim(2)) {
    throw DimensionError("attention shape mismatch: q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) + " v" +
                         shape_str(v.shape()));
  }
  const std::size_t batch = q.dim(0), tq = q.dim(1), tk = k.dim(1), width = q.dim(2);
  if (heads == 0 || width % heads != 0) {
    throw DimensionError("width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
  }
  if (key_mask.size() != batch * tk) {
    throw DimensionError("key mask has " + std::to_string(key_mask.size()) + " entries, expected " +
                         std::to_string(batch * tk));
  }
  const std::size_t hd = width / heads;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));

  auto mask = std::make_shared<std::vector<std::uint8_t>>(key_mask.begin(), key_mask.end());
  // probs[((b*heads + h)*tq + i)*tk + j]
  auto probs = std::make_shared<std::vector<Real>>(batch * heads * tq * tk, Real(0));
  std::vector<Real> out(batch * tq * width, Real(0));
  const Real* Q = q.data().data();
  const Real* K = k.data().data();
  const Real* V = v.data().data();
  std::vector<double> scores(tk);

  for (std::size_t b = 0; b < batch; ++b) {
    const std::uint8_t* m = mask->data() + b * tk;
    bool any = false;
    for (std::size_t j = 0; j < tk; ++j) any = any || m[j];
    if (!any) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < tq; ++i) {
        const Real* qi = Q + (b * tq + i) * width + h * hd;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < tk; ++j) {
          if (!m[j]) continue;
          const Real* kj = K + (b * tk + j) * width + h * hd;
          Real dot = 0;
          for (std::size_t c = 0; c < hd; ++c) dot += qi[c] * kj[c];
          scores[j] = static_cast<double>(dot * scale);
          mx = std::max(mx, scores[j]);
        }
        double z = 0;
        for (std::size_t j = 0; j < tk; ++j) {
          if (m[j]) z += std::exp(scores[j] - mx);
        }
        Real* p = probs->data() + ((b * heads + h) * tq + i) * tk;
        Real* oi = out.data() + (b * tq + i) * width + h * hd;
        for (std::size_t j = 0; j < tk; ++j) {
          if (!m[j]) continue;
          p[j] = static_cast<Real>(std::exp(scores[j] - mx) / z);
          const Real* vj = V + (b * tk + j) * width + h * hd;
          for (std::size_t c = 0; c < hd; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }

  const bool track = detail::should_track<Real>({&q, &k, &v});
  auto qn = q.node();
  auto kn = k.node();
  auto vn = v.node();
  return detail::finish<Real>({batch, tq, width}, std::move(out), track, [=](detail::Node<Real>* self) {
    return [=] {
      if (qn->requires_grad) qn->ensure_grad();
      if (kn->requires_grad) kn->ensure_grad();
      if (vn->requires_grad) vn->ensure_grad();
      std::vector<Real> dp(tk);
      for (std::size_t b = 0; b < batch; ++b) {
        const std::uint8_t* m = mask->data() + b * tk;
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < tq; ++i) {
            const Real* p = probs->data() + ((b * heads + h) * tq + i) * tk;
            const Real* go = self->grad.data() + (b * tq + i) * width + h * hd;
            double weighted = 0;
            for (std::size_t j = 0; j < tk; ++j) {
              if (!m[j]) continue;
              const Real* vj = vn->value.data() + (b * tk + j) * width + h * hd;
              Real acc = 0;
              for (std::size_t c = 0; c < hd; ++c) acc += go[c] * vj[c];
              dp[j] = acc;
              weighted += static_cast<double>(p[j]) * acc;
              if (vn->requires_grad) {
                Real* dv = vn->grad.data() + (b * tk + j) * width + h * hd;
                for (std::size_t c = 0; c < hd; ++c) dv[c] += p[j] * go[c];
              }
            }
            const Real* qi = qn->value.data() + (b * tq + i) * width + h * hd;
            for (std::size_t j = 0; j < tk; ++j) {
              if (!m[j]) continue;
              const Real ds = p[j] * static_cast<Real>(dp[j] - weighted) * scale;
              const Real* kj = kn->value.data() + (b * tk + j) * width + h * hd;
              if (qn->requires_grad) {
                Real* dq = qn->grad.data() + (b * tq + i) * width + h * hd;
                for (std::size_t c = 0; c < hd; ++c) dq[c] += ds * kj[c];
              }
              if (kn->requires_grad) {
                Real* dk = kn->grad.data() + (b * tk + j) * width + h * hd;
                for (std::size_t c = 0; c < hd; ++c) dk[c] += ds * qi[c];
              }
            }
          }
        }
      }
    };
  });
}

}  // namespace duin
