#ifndef MEGPF_NUMERIC_HPP
#define MEGPF_NUMERIC_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

namespace megpf {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(v))) with max-subtraction; -inf for empty or all -inf input.
inline double logsumexp(const double* v, std::size_t n) {
  double m = kNegInf;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (!std::isfinite(m)) return m;  // empty, all -inf, or a stray +inf/nan
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

inline double logsumexp(const std::vector<double>& v) {
  return logsumexp(v.data(), v.size());
}

inline double logsumexp(const Eigen::VectorXd& v) {
  return logsumexp(v.data(), static_cast<std::size_t>(v.size()));
}

/// log(exp(a) + exp(b))
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace megpf

#endif  // MEGPF_NUMERIC_HPP
