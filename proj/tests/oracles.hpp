#pragma once

// Deliberately naive reference implementations used as test oracles. None
// of these share code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <vector>

namespace oracle {

using Weights = std::array<std::array<double, 5>, 5>;

// Weighted Fleiss kappa by explicit enumeration of annotator pairs.
inline double fleiss_by_pairs(const std::vector<std::vector<int>>& items, const Weights& d) {
  double observed = 0.0;
  std::array<double, 5> pooled{};
  double total = 0.0;
  int used = 0;
  for (const auto& labels : items) {
    if (labels.size() < 2) continue;
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t a = 0; a < labels.size(); ++a) {
      for (std::size_t b = a + 1; b < labels.size(); ++b) {
        sum += d[labels[a]][labels[b]];
        ++pairs;
      }
    }
    observed += sum / pairs;
    ++used;
    for (int l : labels) {
      pooled[l] += 1.0;
      total += 1.0;
    }
  }
  observed /= used;
  double expected = 0.0;
  for (int j = 0; j < 5; ++j) {
    for (int k = 0; k < 5; ++k) expected += pooled[j] / total * pooled[k] / total * d[j][k];
  }
  return 1.0 - observed / expected;
}

// Textbook unweighted Fleiss kappa for items with varying rater counts:
// P_i = sum_j n_ij (n_ij - 1) / (n_i (n_i - 1)), P_e = sum_j p_j^2.
inline double fleiss_classic(const std::vector<std::vector<int>>& items) {
  double pbar = 0.0;
  std::array<double, 5> pooled{};
  double total = 0.0;
  int used = 0;
  for (const auto& labels : items) {
    if (labels.size() < 2) continue;
    std::array<double, 5> n{};
    for (int l : labels) n[l] += 1.0;
    const double ni = static_cast<double>(labels.size());
    double agree = 0.0;
    for (double c : n) agree += c * (c - 1.0);
    pbar += agree / (ni * (ni - 1.0));
    ++used;
    for (int j = 0; j < 5; ++j) pooled[j] += n[j];
    total += ni;
  }
  pbar /= used;
  double pe = 0.0;
  for (double c : pooled) pe += (c / total) * (c / total);
  return (pbar - pe) / (1.0 - pe);
}

// Weighted Cohen kappa from a contingency table tabulated directly.
inline double cohen_by_table(const std::vector<std::pair<int, int>>& pairs, const Weights& d) {
  double table[5][5] = {};
  for (auto [a, b] : pairs) table[a][b] += 1.0;
  const double n = static_cast<double>(pairs.size());
  double row[5] = {}, col[5] = {};
  for (int j = 0; j < 5; ++j) {
    for (int k = 0; k < 5; ++k) {
      row[j] += table[j][k] / n;
      col[k] += table[j][k] / n;
    }
  }
  double obs = 0.0, exp = 0.0;
  for (int j = 0; j < 5; ++j) {
    for (int k = 0; k < 5; ++k) {
      obs += table[j][k] / n * d[j][k];
      exp += row[j] * col[k] * d[j][k];
    }
  }
  return 1.0 - obs / exp;
}

// Mann-Whitney AUC by counting every positive/negative pair.
inline double auc_by_pairs(const std::vector<std::pair<double, bool>>& scored) {
  double credit = 0.0;
  double pairs = 0.0;
  for (const auto& [sp, pos] : scored) {
    if (!pos) continue;
    for (const auto& [sn, neg_pos] : scored) {
      if (neg_pos) continue;
      pairs += 1.0;
      if (sp > sn) credit += 1.0;
      else if (sp == sn) credit += 0.5;
    }
  }
  return credit / pairs;
}

// Direct O(N^2) DFT magnitude of a real signal, bins 0..N/2.
inline std::vector<double> dft_magnitude(const std::vector<double>& x, std::size_t n_fft) {
  std::vector<double> mag(n_fft / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t t = 0; t < x.size() && t < n_fft; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t % n_fft) / static_cast<double>(n_fft);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    mag[k] = std::abs(acc);
  }
  return mag;
}

// Mean cross-entropy of a 5-way softmax network written out longhand.
// w1 is D x H row-major (input-major), w2 is H x 5 (or D x 5 without hidden).
inline double network_loss(const std::vector<double>& w1, const std::vector<double>& b1, const std::vector<double>& w2,
                           const std::vector<double>& b2, std::size_t d, std::size_t h,
                           const std::vector<std::vector<double>>& xs, const std::vector<int>& ys) {
  double loss = 0.0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    std::vector<double> a = xs[s];
    if (h > 0) {
      std::vector<double> z(h, 0.0);
      for (std::size_t j = 0; j < h; ++j) {
        z[j] = b1[j];
        for (std::size_t i = 0; i < d; ++i) z[j] += xs[s][i] * w1[i * h + j];
        z[j] = z[j] > 0.0 ? z[j] : 0.0;
      }
      a = z;
    }
    double logits[5];
    for (int c = 0; c < 5; ++c) {
      logits[c] = b2[c];
      for (std::size_t i = 0; i < a.size(); ++i) logits[c] += a[i] * w2[i * 5 + c];
    }
    double m = *std::max_element(logits, logits + 5);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    loss += -(logits[ys[s]] - m - std::log(z));
  }
  return loss / static_cast<double>(xs.size());
}

}  // namespace oracle
