#pragma once

// Independent oracles and helpers shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <unistd.h>
#include <string>
#include <vector>

#include "slgan/autograd.hpp"
#include "slgan/dataset.hpp"
#include "slgan/networks.hpp"
#include "slgan/random.hpp"
#include "slgan/training.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(SLGAN_FIXTURE_DIR) / name;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const auto p = std::filesystem::temp_directory_path() / ("slgan_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Small enough for finite differences and multi-step runs in a unit test.
inline slgan::ArchConfig micro_arch(int resolution = 16) {
  slgan::ArchConfig a;
  a.resolution = resolution;
  a.style_dim = 8;
  a.base_channels = 4;
  a.max_channels = 8;
  a.num_down = 1;
  a.num_res_blocks = 1;
  a.trunk_down = 2;
  a.mapping_hidden = 16;
  a.mapping_layers = 6;
  return a;
}

inline slgan::TrainConfig micro_config(int resolution = 16) {
  slgan::TrainConfig c;
  c.arch = micro_arch(resolution);
  c.batch_size = 2;
  c.total_steps = 3;
  c.seed = 5;
  c.checkpoint_every = 2;
  return c;
}

inline slgan::Tensor random_tensor(slgan::Rng& rng, slgan::Shape shape, double lo = -1.0, double hi = 1.0) {
  slgan::Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = lo + (hi - lo) * slgan::uniform01(rng);
  return t;
}

inline slgan::Tensor random_mask(slgan::Rng& rng, slgan::Shape shape, double p_one = 0.5) {
  slgan::Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = slgan::uniform01(rng) < p_one ? 1.0 : 0.0;
  return t;
}

/// Brute-force histogram matching: quadratic rank counting, insertion sort of
/// the target, and linear interpolation at r·(m−1)/(n−1).
inline std::vector<double> hm_oracle(const std::vector<double>& src, const std::vector<double>& tgt) {
  const std::size_t n = src.size(), m = tgt.size();
  std::vector<double> sorted;
  for (double v : tgt) {
    auto it = sorted.begin();
    while (it != sorted.end() && *it <= v) ++it;
    sorted.insert(it, v);
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (src[j] < src[i] || (src[j] == src[i] && j < i)) ++rank;
    const double pos = n == 1 ? (m - 1) / 2.0 : static_cast<double>(rank) * (m - 1) / (n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, m - 1);
    const double f = pos - lo;
    out[i] = sorted[lo] + f * (sorted[hi] - sorted[lo]);
  }
  return out;
}

struct GradCheck {
  double max_rel_error = 0.0;  // worst per-input ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)
  double max_abs_error = 0.0;
  std::size_t evaluations = 0;
};

/// Central differences of a scalar function of several tensors against
/// reverse-mode gradients. Norm-wise relative error per input; inputs whose
/// both gradients are below `floor` in norm are compared absolutely.
inline GradCheck finite_difference_check(const std::function<slgan::ag::Var(const std::vector<slgan::ag::Var>&)>& f,
                                         const std::vector<slgan::Tensor>& inputs, double h = 1e-5,
                                         double floor = 1e-10) {
  using namespace slgan;
  std::vector<ag::Var> leaves;
  for (const auto& t : inputs) leaves.push_back(ag::leaf(t, true));
  const ag::Var out = f(leaves);
  ag::backward(out);

  GradCheck r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = leaves[k].has_grad() ? leaves[k].grad() : Tensor::zeros_like(inputs[k]);
    Tensor numeric = Tensor::zeros_like(inputs[k]);
    for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
      auto eval = [&](double delta) {
        ag::NoGradGuard guard;
        std::vector<ag::Var> args;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Tensor t = inputs[j];
          if (j == k) t[i] += delta;
          args.push_back(ag::constant(std::move(t)));
        }
        ++r.evaluations;
        return f(args).item();
      };
      numeric[i] = (eval(h) - eval(-h)) / (2 * h);
    }
    double diff = 0, na = 0, nn = 0;
    for (std::int64_t i = 0; i < numeric.numel(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    diff = std::sqrt(diff);
    const double scale = std::max(std::sqrt(na), std::sqrt(nn));
    r.max_abs_error = std::max(r.max_abs_error, diff);
    if (scale > floor) r.max_rel_error = std::max(r.max_rel_error, diff / scale);
  }
  return r;
}

/// Population mean and standard deviation of channel c of sample n.
inline std::pair<double, double> channel_stats(const slgan::Tensor& x, std::int64_t n, std::int64_t c) {
  const std::int64_t hw = x.dim(2) * x.dim(3);
  double mean = 0;
  for (std::int64_t h = 0; h < x.dim(2); ++h)
    for (std::int64_t w = 0; w < x.dim(3); ++w) mean += x.at4(n, c, h, w);
  mean /= hw;
  double var = 0;
  for (std::int64_t h = 0; h < x.dim(2); ++h)
    for (std::int64_t w = 0; w < x.dim(3); ++w) var += (x.at4(n, c, h, w) - mean) * (x.at4(n, c, h, w) - mean);
  return {mean, std::sqrt(var / hw)};
}

/// Least-squares slope of y against 0..n−1.
inline double ls_slope(const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sy += y[i];
    sxx += x * x;
    sxy += x * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline double mean_of(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  double s = 0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return s / static_cast<double>(end - begin);
}

}  // namespace testing
