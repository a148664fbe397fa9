#pragma once

// Test-only reference implementations. Nothing here calls into the code it
// checks except for reading parameters and, for finite differences, the
// forward pass (which is what the analytic gradient is compared against).

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "ferfusion/fusion.hpp"
#include "ferfusion/train.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Mat to_mat(const ferfusion::Tensor& t) {
  Mat m(t.dim(0), Vec(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t(i, j);
  return m;
}

// Step by step: raw scores, scale, exponentiate, normalise, weighted sum.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v) {
  const double dk = static_cast<double>(q[0].size());
  Mat out(q.size(), Vec(v[0].size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    Vec scores(k.size());
    for (std::size_t j = 0; j < k.size(); ++j) {
      double s = 0;
      for (std::size_t t = 0; t < dk; ++t) s += q[i][t] * k[j][t];
      scores[j] = s / std::sqrt(dk);
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0;
    for (auto& s : scores) z += (s = std::exp(s - mx));
    for (std::size_t j = 0; j < k.size(); ++j)
      for (std::size_t t = 0; t < v[0].size(); ++t) out[i][t] += scores[j] / z * v[j][t];
  }
  return out;
}

inline Vec affine(const ferfusion::DenseLayer& layer, const Vec& x) {
  Vec y(layer.out_dim());
  for (std::size_t o = 0; o < y.size(); ++o) {
    y[o] = layer.bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += layer.weight(o, i) * x[i];
  }
  return y;
}

inline Vec relu(Vec x) {
  for (auto& v : x) v = std::max(v, 0.0);
  return x;
}

// Layer-by-layer recomputation of the fusion network for one sample.
inline Vec forward(const ferfusion::FusionModel& m, const Vec& main, const Vec& aux) {
  using ferfusion::KeyStrategy;
  const std::size_t d = main.size();
  const auto s = m.keygen.strategy();
  Vec x;
  if (s == KeyStrategy::Concat || s == KeyStrategy::UpDownConcat) {
    x = main;
    x.insert(x.end(), aux.begin(), aux.end());
  } else {
    for (std::size_t i = 0; i < d; ++i) x.push_back((main[i] + aux[i]) / 2.0);
  }
  const auto& layers = m.keygen.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = affine(layers[l], x);
    if (l + 1 < layers.size()) x = relu(x);
  }
  const Vec q = affine(m.q_proj, main), k = affine(m.k_proj, x), v = affine(m.v_proj, x);
  const std::size_t h = m.attn.n_heads, dk = d / h;
  Mat qt(h), kt(h), vt(h);
  for (std::size_t i = 0; i < h; ++i) {
    qt[i].assign(q.begin() + i * dk, q.begin() + (i + 1) * dk);
    kt[i].assign(k.begin() + i * dk, k.begin() + (i + 1) * dk);
    vt[i].assign(v.begin() + i * dk, v.begin() + (i + 1) * dk);
  }
  const Mat a = attention(qt, kt, vt);
  Vec flat;
  for (const auto& row : a) flat.insert(flat.end(), row.begin(), row.end());
  const Vec proj = affine(m.out_proj, flat);
  Vec padded(d + 2, 0.0);
  std::copy(proj.begin(), proj.end(), padded.begin() + 1);
  Vec block(d);
  for (std::size_t i = 0; i < d; ++i) {
    double conv = 0;
    for (std::size_t j = 0; j < 3; ++j) conv += m.local_kernel[j] * padded[i + j];
    block[i] = conv + main[i];
  }
  return affine(m.classifier_out, relu(affine(m.classifier_hidden, block)));
}

inline double loss(const ferfusion::FusionModel& m, const ferfusion::Tensor& main, const ferfusion::Tensor& aux,
                   const std::vector<int>& labels) {
  return ferfusion::cross_entropy(ferfusion::predict_logits(m, main, aux), labels);
}

// Central differences over every parameter element.
inline ferfusion::Gradients finite_differences(ferfusion::FusionModel m, const ferfusion::Tensor& main,
                                               const ferfusion::Tensor& aux, const std::vector<int>& labels,
                                               double step = 1e-5) {
  ferfusion::Gradients out;
  for (auto& p : m.parameters()) {
    ferfusion::Tensor g(p.tensor->shape());
    for (std::size_t i = 0; i < p.tensor->size(); ++i) {
      const double saved = (*p.tensor)[i];
      (*p.tensor)[i] = saved + step;
      const double up = loss(m, main, aux, labels);
      (*p.tensor)[i] = saved - step;
      const double down = loss(m, main, aux, labels);
      (*p.tensor)[i] = saved;
      g[i] = (up - down) / (2 * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Gradient agreement rule: relative error <= rel, except that gradients
// smaller than 1e-6 in magnitude only need absolute error <= abs_small.
inline bool gradient_close(double analytic, double numeric, double rel = 1e-4, double abs_small = 1e-7) {
  const double mag = std::max(std::abs(analytic), std::abs(numeric));
  const double err = std::abs(analytic - numeric);
  if (mag < 1e-6) return err <= abs_small;
  return err / mag <= rel;
}

// Per-index windowed majority with the documented tie rule.
inline std::vector<int> windowed_majority(const std::vector<int>& labels, std::size_t k) {
  const std::size_t n = labels.size();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long lo = std::max<long>(0, static_cast<long>(i) - static_cast<long>(k / 2));
    const long hi = std::min<long>(static_cast<long>(n) - 1,
                                   static_cast<long>(i) + static_cast<long>((k + 1) / 2) - 1);
    std::array<int, 8> count{};
    for (long j = lo; j <= hi; ++j) ++count[labels[j]];
    int best = 0;
    for (int c = 0; c < 8; ++c) best = std::max(best, count[c]);
    if (count[labels[i]] == best) {
      out[i] = labels[i];
    } else {
      for (int c = 0; c < 8; ++c) {
        if (count[c] == best) {
          out[i] = c;
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace oracle
