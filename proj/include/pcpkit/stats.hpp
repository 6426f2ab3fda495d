#ifndef PCPKIT_STATS_HPP_
#define PCPKIT_STATS_HPP_

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

namespace pcpkit {

struct BinomialCi {
  double rate = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
  double confidence = 0.0;
};

// Clopper-Pearson two-sided interval for a binomial proportion.
inline BinomialCi clopper_pearson(std::uint64_t successes, std::uint64_t trials,
                                  double confidence = 0.99) {
  BinomialCi ci;
  ci.successes = successes;
  ci.trials = trials;
  ci.confidence = confidence;
  if (trials == 0) return ci;
  const double x = static_cast<double>(successes);
  const double n = static_cast<double>(trials);
  ci.rate = x / n;
  const double alpha = 1.0 - confidence;
  if (successes == 0) {
    ci.lo = 0.0;
  } else {
    boost::math::beta_distribution<double> lo_dist(x, n - x + 1.0);
    ci.lo = boost::math::quantile(lo_dist, alpha / 2.0);
  }
  if (successes == trials) {
    ci.hi = 1.0;
  } else {
    boost::math::beta_distribution<double> hi_dist(x + 1.0, n - x);
    ci.hi = boost::math::quantile(hi_dist, 1.0 - alpha / 2.0);
  }
  return ci;
}

// Upper tail p-value of a chi-squared statistic.
inline double chi_squared_pvalue(double statistic, double dof) {
  if (statistic <= 0.0) return 1.0;
  boost::math::chi_squared dist(dof);
  return 1.0 - boost::math::cdf(dist, statistic);
}

// Pearson statistic for observed counts against uniform cell probabilities.
inline double chi_squared_uniform_stat(const std::vector<std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  const double expected =
      static_cast<double>(total) / static_cast<double>(counts.size());
  double stat = 0.0;
  for (auto c : counts) {
    const double d = static_cast<double>(c) - expected;
    stat += d * d / expected;
  }
  return stat;
}

// One-sided deviation bound for an empirical distribution over `cells` cells
// estimated from `n` samples: with probability at least 1 - alpha,
//   TV(empirical, truth) <= sqrt(cells / (4 n)) + sqrt(ln(1/alpha) / (2 n)).
// The first term bounds the expectation (Cauchy-Schwarz over cells), the
// second is McDiarmid concentration; both are standard and documented here
// because the covering experiments lean on this bound.
inline double tv_deviation_bound(std::size_t cells, std::uint64_t n,
                                 double alpha) {
  if (n == 0) return 1.0;
  const double nn = static_cast<double>(n);
  return std::sqrt(static_cast<double>(cells) / (4.0 * nn)) +
         std::sqrt(std::log(1.0 / alpha) / (2.0 * nn));
}

}  // namespace pcpkit

#endif
