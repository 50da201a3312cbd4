#include "megpf/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace megpf {
namespace {

constexpr int kMaxAssignmentSize = 20;
constexpr double kPi = 3.14159265358979323846;

// Minimum total matched distance over all injections of `small` into
// `large`, via subset dynamic programming over the larger set.
double min_injection_cost(const std::vector<Eigen::Vector3d>& small,
                          const std::vector<Eigen::Vector3d>& large) {
  const int ns = static_cast<int>(small.size());
  const int nl = static_cast<int>(large.size());
  Eigen::MatrixXd dist(ns, nl);
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < nl; ++j) dist(i, j) = (small[i] - large[j]).norm();
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(std::size_t(1) << nl, inf);
  dp[0] = 0.0;
  double best = inf;
  for (std::size_t mask = 1; mask < dp.size(); ++mask) {
    const int k = __builtin_popcountll(mask);
    if (k > ns) continue;
    double v = inf;
    for (int j = 0; j < nl; ++j) {
      if (!(mask >> j & 1)) continue;
      const double prev = dp[mask ^ (std::size_t(1) << j)];
      if (prev + dist(k - 1, j) < v) v = prev + dist(k - 1, j);
    }
    dp[mask] = v;
    if (k == ns && v < best) best = v;
  }
  return best;
}

}  // namespace

double metric_missing() { return std::numeric_limits<double>::quiet_NaN(); }

bool is_metric_missing(double v) { return std::isnan(v); }

double adct(const DipolePointSet& est, const DipolePointSet& tgt) {
  if (est.count() == 0 || tgt.count() == 0) return metric_missing();
  double total = 0.0;
  for (const Eigen::Vector3d& r : est.locations) {
    double best = std::numeric_limits<double>::infinity();
    for (const Eigen::Vector3d& s : tgt.locations) {
      best = std::min(best, (r - s).norm());
    }
    total += best;
  }
  return total / est.count();
}

double sd(const DipolePointSet& est, const DipolePointSet& tgt) {
  if (est.count() == 0 || tgt.count() == 0) return metric_missing();
  return adct(est, tgt) + adct(tgt, est);
}

double ospa(const DipolePointSet& est, const DipolePointSet& tgt) {
  if (est.count() == 0 || tgt.count() == 0) return metric_missing();
  const bool est_smaller = est.count() <= tgt.count();
  const std::vector<Eigen::Vector3d>& small =
      est_smaller ? est.locations : tgt.locations;
  const std::vector<Eigen::Vector3d>& large =
      est_smaller ? tgt.locations : est.locations;
  if (static_cast<int>(large.size()) > kMaxAssignmentSize) {
    throw std::invalid_argument("ospa: set too large for exact assignment");
  }
  return min_injection_cost(small, large) / static_cast<double>(small.size());
}

double wm(const DipolePointSet& est, const DipolePointSet& tgt,
          double sigma_m, const SourceGrid& grid) {
  if (sigma_m <= 0.0) throw std::invalid_argument("wm: sigma must be positive");
  if (grid.size() == 0) throw std::invalid_argument("wm: empty grid");
  const double inv_two_var = 1.0 / (2.0 * sigma_m * sigma_m);
  const double norm_const =
      std::pow(2.0 * kPi * sigma_m * sigma_m, -1.5);
  double mean_radius = 0.0;
  for (const Eigen::Vector3d& p : grid.points) mean_radius += p.norm();
  mean_radius /= grid.size();
  const double quad_weight =
      4.0 * kPi * mean_radius * mean_radius / grid.size();

  auto field_at = [&](const DipolePointSet& set, const Eigen::Vector3d& r) {
    double f = 0.0;
    for (int k = 0; k < set.count(); ++k) {
      const double d2 = (r - set.locations[k]).squaredNorm();
      f += set.moments[k].norm() * norm_const * std::exp(-d2 * inv_two_var);
    }
    return f;
  };

  double total = 0.0;
  for (const Eigen::Vector3d& r : grid.points) {
    total += std::abs(field_at(est, r) - field_at(tgt, r));
  }
  return total * quad_weight;
}

}  // namespace megpf
