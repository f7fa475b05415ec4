#pragma once
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seqstn/dataset.hpp"
#include "seqstn/rng.hpp"
#include "seqstn/tensor.hpp"

namespace testutil {

inline seqstn::Tensor random_tensor(seqstn::Rng& rng, std::vector<int64_t> shape, double lo = -1.0,
                                    double hi = 1.0) {
  seqstn::Tensor t{std::move(shape)};
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(const seqstn::Tensor& a, const seqstn::Tensor& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double dot_with(const seqstn::Tensor& out, const seqstn::Tensor& proj) {
  double s = 0.0;
  for (int64_t i = 0; i < out.size(); ++i) s += out[i] * proj[i];
  return s;
}

// Central finite differences against an analytic gradient. Relative tolerance
// is the headline criterion; the absolute floor absorbs FD roundoff on
// components whose true gradient is (near) zero.
struct GradCheck {
  double max_rel = 0.0;
  int64_t checked = 0;
  int64_t failures = 0;
  std::string worst;

  bool ok() const { return failures == 0; }
};

inline void check_grad(seqstn::Tensor& param, const seqstn::Tensor& analytic,
                       const std::function<double()>& loss, GradCheck& gc,
                       const std::string& label = "", double h = 1e-5, double rtol = 1e-4,
                       double atol = 1e-6) {
  for (int64_t i = 0; i < param.size(); ++i) {
    const double save = param[i];
    param[i] = save + h;
    const double lp = loss();
    param[i] = save - h;
    const double lm = loss();
    param[i] = save;
    const double fd = (lp - lm) / (2.0 * h);
    const double a = analytic[i];
    const double abs_err = std::abs(a - fd);
    const double rel = abs_err / std::max(std::abs(a), std::abs(fd));
    ++gc.checked;
    if (abs_err > atol && rel > rtol) {
      ++gc.failures;
      if (rel > gc.max_rel)
        gc.worst = label + " elem " + std::to_string(i) + ": analytic " + std::to_string(a) +
                   " vs fd " + std::to_string(fd);
    }
    if (abs_err > atol) gc.max_rel = std::max(gc.max_rel, rel);
  }
}

// Finite differences need kink-free surroundings. Zero-initialized conv
// biases leave units with all-zero receptive fields sitting exactly on the
// relu kink, so FD tests move every conv bias off zero first.
inline void randomize_bias(seqstn::Tensor& bias, seqstn::Rng& rng) {
  for (int64_t i = 0; i < bias.size(); ++i) {
    const double mag = rng.uniform(0.05, 0.2);
    bias[i] = rng.next_unit() < 0.5 ? -mag : mag;
  }
}

// Class-informative synthetic digits: each class is a fixed coarse 4x4 cell
// pattern rendered into the MNIST-like 20x20-in-28x28 frame with per-digit
// jitter. Enough structure to classify and to act as rotation/mask fodder.
inline std::vector<seqstn::MnistDigit> fake_pool(seqstn::Rng& rng, int count) {
  std::vector<seqstn::MnistDigit> pool;
  pool.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int label = i % 10;
    seqstn::Rng pattern(0xFACE0000ull + static_cast<uint64_t>(label));
    bool cells[16];
    int lit = 0;
    for (bool& c : cells) {
      c = pattern.next_unit() < 0.45;
      lit += c;
    }
    if (lit == 0) cells[static_cast<size_t>(label) % 16] = true;
    seqstn::Tensor img({28, 28});
    for (int cy = 0; cy < 4; ++cy)
      for (int cx = 0; cx < 4; ++cx) {
        if (!cells[cy * 4 + cx]) continue;
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 5; ++x)
            img(4 + cy * 5 + y, 4 + cx * 5 + x) = rng.uniform(0.55, 1.0);
      }
    pool.push_back({std::move(img), label});
  }
  return pool;
}

}  // namespace testutil
