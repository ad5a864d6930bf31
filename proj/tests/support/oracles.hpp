// SPDX-License-Identifier: Apache-2.0
//
// Reference implementations used as test oracles. They are written for
// clarity and share no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace wsed::oracle {

/// Direct 7-loop cross-correlation; x [N,Cin,H,W], k [Cout,Cin,kh,kw].
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t n, std::size_t cin, std::size_t h,
                                  std::size_t w, const std::vector<double>& k, std::size_t cout, std::size_t kh,
                                  std::size_t kw, const std::vector<double>& bias, std::size_t ph, std::size_t pw) {
  const std::size_t oh = h + 2 * ph - kh + 1, ow = w + 2 * pw - kw + 1;
  std::vector<double> y(n * cout * oh * ow);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          long double acc = bias[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i + u) - static_cast<long>(ph);
                const long s = static_cast<long>(j + v) - static_cast<long>(pw);
                if (r < 0 || s < 0 || r >= static_cast<long>(h) || s >= static_cast<long>(w)) continue;
                acc += static_cast<long double>(x[((b * cin + c) * h + r) * w + s]) *
                       k[((o * cin + c) * kh + u) * kw + v];
              }
          y[((b * cout + o) * oh + i) * ow + j] = static_cast<double>(acc);
        }
  return y;
}

/// AUC as the fraction of (positive, negative) pairs ranked correctly, ties
/// counting one half. Returns NaN when either class is absent.
inline double pair_count_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return pairs > 0.0 ? good / pairs : std::nan("");
}

/// O(n^2) DFT power spectrum of one frame, bins 0..n/2.
inline std::vector<double> dft_power(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<long double> acc = 0.0L;
    for (std::size_t t = 0; t < n; ++t) {
      const long double ang = -2.0L * std::numbers::pi_v<long double> * static_cast<long double>(k * t % n) / n;
      acc += static_cast<long double>(frame[t]) * std::complex<long double>(std::cos(ang), std::sin(ang));
    }
    out[k] = static_cast<double>(std::norm(acc));
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> normal_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

inline std::vector<double> uniform_values(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

}  // namespace wsed::oracle
