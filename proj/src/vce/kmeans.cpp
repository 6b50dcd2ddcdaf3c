#include <algorithm>
#include <cmath>
#include <limits>

#include "vrx/kernels/kernels.hpp"
#include "vrx/vce/vce.hpp"

namespace vrx::vce {

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iters, double rel_tol) {
  if (points.empty()) throw Error("kmeans: no points");
  if (k == 0) throw Error("kmeans: k must be positive");
  k = std::min(k, points.size());
  const std::size_t dim = points[0].size();
  for (const auto& p : points)
    if (p.size() != dim) throw ShapeError("kmeans: inconsistent point dimensions");

  const auto& kt = kern::active();
  Rng rng(derive_seed(seed, 0x6b6d));

  // k-means++ seeding.
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  centroids.push_back(points[rng.uniform_index(points.size())]);
  std::vector<double> d2(points.size());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centroids)
        best = std::min(best, kt.sqdist(points[i].data(), c.data(), dim));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // All remaining points coincide with chosen centroids.
      centroids.push_back(points[rng.uniform_index(points.size())]);
      continue;
    }
    double target = rng.uniform() * total;
    std::size_t chosen = points.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (acc >= target) {
        chosen = i;
        break;
      }
    }
    centroids.push_back(points[chosen]);
  }

  KMeansResult res;
  res.assignment.assign(points.size(), 0);
  res.counts.assign(k, 0);
  double prev_inertia = std::numeric_limits<double>::max();

  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Assign (ties go to the lowest cluster id).
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::max();
      std::size_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = kt.sqdist(points[i].data(), centroids[c].data(), dim);
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      res.assignment[i] = arg;
      inertia += best;
    }
    // Update.
    std::fill(res.counts.begin(), res.counts.end(), 0u);
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = res.assignment[i];
      kt.axpy(1.0, points[i].data(), sums[c].data(), dim);
      ++res.counts[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (res.counts[c] == 0) {
        // Re-seed an empty cluster on the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double d = kt.sqdist(points[i].data(), centroids[res.assignment[i]].data(), dim);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids[c] = points[far];
        continue;
      }
      kt.scale(1.0 / static_cast<double>(res.counts[c]), sums[c].data(), centroids[c].data(), dim);
    }
    res.iterations = iter + 1;
    res.inertia = inertia;
    if (prev_inertia < std::numeric_limits<double>::max()) {
      const double denom = std::max(prev_inertia, 1e-300);
      if (std::abs(prev_inertia - inertia) / denom < rel_tol) break;
    }
    prev_inertia = inertia;
  }

  // Final assignment against final centroids.
  std::fill(res.counts.begin(), res.counts.end(), 0u);
  res.inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::max();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d = kt.sqdist(points[i].data(), centroids[c].data(), dim);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    res.assignment[i] = arg;
    res.inertia += best;
    ++res.counts[arg];
  }
  res.centroids = std::move(centroids);
  return res;
}

}  // namespace vrx::vce
