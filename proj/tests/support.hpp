// Copyright (c) 2026 The xvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Shared helpers for the unit and acceptance tests. The finite-difference
// and brute-force metric routines here are written independently of the
// library so that they can serve as oracles.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "xvec/matrix.hpp"

namespace xvec::testing {

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = normal(rng);
  return m;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

inline double dot(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.flat()[i] * b.flat()[i];
  return s;
}

// Central differences with step h of f with respect to every entry of x.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> x,
                                            double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

inline double max_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) worst = std::max(worst, rel_error(analytic[i], numeric[i]));
  return worst;
}

// Exhaustive threshold oracle. For every threshold in {all scores, +inf},
// trials scoring >= threshold are accepted.
struct BruteForcePoint {
  double threshold;
  double p_miss;
  double p_fa;
};

inline std::vector<BruteForcePoint> brute_force_points(const std::vector<double>& scores,
                                                       const std::vector<bool>& target) {
  std::vector<double> thresholds = scores;
  thresholds.push_back(std::numeric_limits<double>::infinity());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double nt = 0, nn = 0;
  for (bool t : target) (t ? nt : nn) += 1;
  std::vector<BruteForcePoint> points;
  for (double thr : thresholds) {
    double miss = 0, fa = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (target[i] && scores[i] < thr) miss += 1;
      if (!target[i] && scores[i] >= thr) fa += 1;
    }
    points.push_back({thr, miss / nt, fa / nn});
  }
  return points;
}

inline double brute_force_eer(const std::vector<double>& scores, const std::vector<bool>& target) {
  const auto pts = brute_force_points(scores, target);
  // Walk the ROC in threshold order; pmiss rises, pfa falls. The crossing
  // lies on the segment where pmiss - pfa changes sign.
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = pts[i].p_miss - pts[i].p_fa;
    if (d == 0.0) return pts[i].p_miss;
    if (d > 0.0) {
      if (i == 0) return pts[0].p_fa;  // unreachable: the lowest threshold misses nothing
      const auto& a = pts[i - 1];
      const auto& b = pts[i];
      const double da = a.p_miss - a.p_fa;
      const double w = da / (da - d);
      return a.p_miss + w * (b.p_miss - a.p_miss);
    }
  }
  return 0.5;
}

inline double brute_force_min_dcf(const std::vector<double>& scores, const std::vector<bool>& target,
                                  double p_target, double c_miss, double c_fa) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : brute_force_points(scores, target)) {
    best = std::min(best, c_miss * p.p_miss * p_target + c_fa * p.p_fa * (1.0 - p_target));
  }
  // Rejecting nothing, i.e. a threshold below every score.
  best = std::min(best, c_fa * (1.0 - p_target));
  return best / std::min(c_miss * p_target, c_fa * (1.0 - p_target));
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("xvec-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace xvec::testing
