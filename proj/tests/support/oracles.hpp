// SPDX-License-Identifier: Apache-2.0
//
// Plain scalar-loop reference implementations used as independent oracles.
// Nothing here touches the tensor engine.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major rows

inline Vec random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vec v(n);
  for (double& x : v) x = d(rng);
  return v;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec matvec(const Vec& w, std::size_t rows, std::size_t cols, const Vec& x) {
  Vec y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) y[r] += w[r * cols + c] * x[c];
  }
  return y;
}

/// Direct-summation valid convolution: x [B][Cin][T], w [Cout][Cin][K].
inline Vec conv1d(const Vec& x, std::size_t batch, std::size_t cin, std::size_t time,
                  const Vec& w, std::size_t cout, std::size_t kernel) {
  const std::size_t tout = time - kernel + 1;
  Vec y(batch * cout * tout, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t t = 0; t < tout; ++t) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t k = 0; k < kernel; ++k)
            acc += w[(o * cin + c) * kernel + k] * x[(b * cin + c) * time + t + k];
        y[(b * cout + o) * tout + t] = acc;
      }
  return y;
}

/// One GRU cell step with gate blocks stacked [r; z; n].
inline Vec gru_cell(const Vec& x, const Vec& h, std::size_t in, std::size_t hidden,
                    const Vec& w_ih, const Vec& w_hh, const Vec& b_ih, const Vec& b_hh) {
  const Vec gx = matvec(w_ih, 3 * hidden, in, x);
  const Vec gh = matvec(w_hh, 3 * hidden, hidden, h);
  Vec out(hidden);
  for (std::size_t i = 0; i < hidden; ++i) {
    const double r = sigmoid(gx[i] + b_ih[i] + gh[i] + b_hh[i]);
    const double z = sigmoid(gx[hidden + i] + b_ih[hidden + i] + gh[hidden + i] + b_hh[hidden + i]);
    const double n = std::tanh(gx[2 * hidden + i] + b_ih[2 * hidden + i] +
                               r * (gh[2 * hidden + i] + b_hh[2 * hidden + i]));
    out[i] = (1.0 - z) * n + z * h[i];
  }
  return out;
}

/// Single-head attention softmax(Q Kᵀ / sqrt(d)) V for one batch element.
/// rows: J x d each.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v) {
  const std::size_t J = q.size(), d = q[0].size();
  Mat out(J, Vec(v[0].size(), 0.0));
  for (std::size_t i = 0; i < J; ++i) {
    Vec s(J);
    for (std::size_t j = 0; j < J; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
      s[j] = dot / std::sqrt(static_cast<double>(d));
    }
    const double m = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double& e : s) z += e = std::exp(e - m);
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t c = 0; c < v[0].size(); ++c) out[i][c] += s[j] / z * v[j][c];
  }
  return out;
}

inline double cosine(const Vec& a, const Vec& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

/// Contrastive loss for one sample by direct enumeration of ordered pairs.
inline double contrastive(const std::vector<Vec>& g, const std::vector<Vec>& l, double tau) {
  const std::size_t J = g.size();
  double s_gl = 0.0, s_ll = 0.0;
  for (std::size_t j = 0; j < J; ++j) s_gl += std::exp(cosine(g[j], l[j]) / tau);
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j < J; ++j)
      if (i != j) s_ll += std::exp(cosine(l[i], l[j]) / tau);
  double total = 0.0;
  for (std::size_t i = 0; i < J; ++i)
    for (std::size_t j = 0; j < J; ++j) {
      if (i == j) continue;
      const double s = std::exp(cosine(g[i], g[j]) / tau);
      total += -std::log(s / (s + s_gl + s_ll));
    }
  return total;
}

inline double orthogonality(const std::vector<Vec>& g, const std::vector<Vec>& l) {
  double total = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i)
    for (std::size_t j = 0; j < l.size(); ++j)
      if (i != j) total += cosine(l[i], l[j]);
  for (std::size_t j = 0; j < l.size(); ++j) total += cosine(g[j], l[j]);
  return total;
}

}  // namespace oracle
