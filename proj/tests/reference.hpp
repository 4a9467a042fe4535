#pragma once

// Double-precision reference kernels written as direct loops over the
// mathematical definitions. They share nothing with the library code and are
// used as the oracle for forward results and finite differences.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "dshift/tensor.hpp"

namespace ref {

struct Array {
  std::size_t n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Array() = default;
  Array(std::size_t n_, std::size_t c_, std::size_t h_, std::size_t w_)
      : n(n_), c(c_), h(h_), w(w_), v(n_ * c_ * h_ * w_, 0.0) {}

  double& at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) {
    return v[((a * c + b) * h + y) * w + x];
  }
  double at(std::size_t a, std::size_t b, std::size_t y, std::size_t x) const {
    return v[((a * c + b) * h + y) * w + x];
  }
  std::size_t size() const { return v.size(); }
};

inline Array from(const dshift::Tensor& t) {
  Array a(t.n(), t.c(), t.h(), t.w());
  for (std::size_t i = 0; i < t.size(); ++i) a.v[i] = t[i];
  return a;
}

inline dshift::Tensor to_tensor(const Array& a) {
  dshift::Tensor t(a.n, a.c, a.h, a.w);
  for (std::size_t i = 0; i < a.size(); ++i) t[i] = static_cast<float>(a.v[i]);
  return t;
}

// y[n,o,i,j] = b[o] + sum_{c,ki,kj} w[o,c,ki,kj] * x[n,c,i*s-p+ki,j*s-p+kj]
inline Array conv2d(const Array& x, const Array& w, const std::vector<double>& b,
                    std::size_t stride, std::size_t pad) {
  const std::size_t k = w.h;
  const std::size_t oh = (x.h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (x.w + 2 * pad - k) / stride + 1;
  Array y(x.n, w.n, oh, ow);
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t o = 0; o < w.n; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < x.c; ++c)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long yy = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(x.h) || xx >= static_cast<long>(x.w))
                  continue;
                acc += w.at(o, c, ki, kj) * x.at(n, c, static_cast<std::size_t>(yy),
                                                 static_cast<std::size_t>(xx));
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

// Scatter form: every input pixel spreads w[c,o,:,:] onto the output grid at
// stride s, cropped by p on each side. Weight layout [in, out, k, k].
inline Array conv_transpose2d(const Array& x, const Array& w, const std::vector<double>& b,
                              std::size_t stride, std::size_t pad) {
  const std::size_t k = w.h;
  const std::size_t oh = (x.h - 1) * stride + k - 2 * pad;
  const std::size_t ow = (x.w - 1) * stride + k - 2 * pad;
  Array y(x.n, w.c, oh, ow);
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t o = 0; o < w.c; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) y.at(n, o, i, j) = b[o];
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t c = 0; c < x.c; ++c)
      for (std::size_t i = 0; i < x.h; ++i)
        for (std::size_t j = 0; j < x.w; ++j)
          for (std::size_t o = 0; o < w.c; ++o)
            for (std::size_t ki = 0; ki < k; ++ki)
              for (std::size_t kj = 0; kj < k; ++kj) {
                const long yy = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(oh) || xx >= static_cast<long>(ow))
                  continue;
                y.at(n, o, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)) +=
                    x.at(n, c, i, j) * w.at(c, o, ki, kj);
              }
  return y;
}

inline Array relu(Array x) {
  for (double& v : x.v) v = std::max(v, 0.0);
  return x;
}

inline Array sigmoid(Array x) {
  for (double& v : x.v) v = 1.0 / (1.0 + std::exp(-v));
  return x;
}

inline double mse(const Array& p, const Array& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p.v[i] - t.v[i]) * (p.v[i] - t.v[i]);
  return s / static_cast<double>(p.size());
}

// Mean over the batch of -log softmax(logits)[label].
inline double softmax_xent(const Array& logits, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t n = 0; n < logits.n; ++n) {
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.c; ++k) sum += std::exp(logits.at(n, k, 0, 0));
    total += std::log(sum) - logits.at(n, static_cast<std::size_t>(labels[n]), 0, 0);
  }
  return total / static_cast<double>(logits.n);
}

inline Array gap(const Array& x) {
  Array y(x.n, x.c, 1, 1);
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t c = 0; c < x.c; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.h; ++i)
        for (std::size_t j = 0; j < x.w; ++j) s += x.at(n, c, i, j);
      y.at(n, c, 0, 0) = s / static_cast<double>(x.h * x.w);
    }
  return y;
}

// x [N,C,1,1], w [K,C,1,1] -> [N,K,1,1]
inline Array dense(const Array& x, const Array& w, const std::vector<double>& b) {
  Array y(x.n, w.n, 1, 1);
  for (std::size_t n = 0; n < x.n; ++n)
    for (std::size_t k = 0; k < w.n; ++k) {
      double s = b[k];
      for (std::size_t c = 0; c < x.c; ++c) s += w.at(k, c, 0, 0) * x.at(n, c, 0, 0);
      y.at(n, k, 0, 0) = s;
    }
  return y;
}

inline double dot(const Array& a, const Array& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

// Central differences of a scalar function of `values`.
inline std::vector<double> numeric_gradient(std::vector<double>& values,
                                            const std::function<double()>& f,
                                            double step = 1e-3) {
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + step;
    const double up = f();
    values[i] = keep - step;
    const double down = f();
    values[i] = keep;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor). The floor keeps entries that
// are zero up to float rounding from dominating the ratio.
template <class A, class N>
double max_relative_error(const A& analytic, const N& numeric, double floor = 1e-3) {
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic[i];
    const double n = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

inline dshift::Tensor random_tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
                                    std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  dshift::Tensor t(n, c, h, w);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

inline std::vector<float> random_vector(std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(size);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<double> widen(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace ref
