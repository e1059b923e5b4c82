#include "tradeclust/ewens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

namespace tradeclust {

std::size_t PartitionVector::clusters() const {
  std::size_t k = 0;
  for (auto c : counts) k += c;
  return k;
}

void PartitionVector::validate() const {
  std::size_t total = 0;
  for (std::size_t j = 1; j <= counts.size(); ++j) total += j * counts[j - 1];
  if (total != n) {
    throw DomainError("partition vector sums to " + std::to_string(total) + " elements, expected " +
                      std::to_string(n));
  }
}

PartitionVector PartitionVector::from_sizes(std::span<const std::size_t> sizes) {
  PartitionVector c;
  for (auto s : sizes) {
    if (s == 0) throw DomainError("cluster sizes must be positive");
    c.n += s;
  }
  c.counts.assign(c.n, 0);
  for (auto s : sizes) ++c.counts[s - 1];
  return c;
}

PartitionVector partition_vector(const Partition& p) {
  if (p.assignment.empty()) throw DomainError("partition_vector: empty partition");
  const auto sizes = p.sizes();
  return PartitionVector::from_sizes(sizes);
}

double log_rising_factorial(double theta, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::log(theta + static_cast<double>(i));
  return s;
}

namespace {

void check_theta(double theta) {
  if (!(theta > 0.0) || !std::isfinite(theta)) throw DomainError("theta must be finite and positive");
}

double log_factorial(std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 2; i <= n; ++i) s += std::log(static_cast<double>(i));
  return s;
}

}  // namespace

double ewens_log_pmf(const PartitionVector& c, double theta) {
  check_theta(theta);
  c.validate();
  if (c.n == 0) return 0.0;
  double s = log_factorial(c.n) - log_rising_factorial(theta, c.n);
  const double log_theta = std::log(theta);
  for (std::size_t j = 1; j <= c.counts.size(); ++j) {
    const auto cj = c.counts[j - 1];
    if (cj == 0) continue;
    s += static_cast<double>(cj) * (log_theta - std::log(static_cast<double>(j))) - log_factorial(cj);
  }
  return s;
}

double ewens_pmf(const PartitionVector& c, double theta) { return std::exp(ewens_log_pmf(c, theta)); }

boost::multiprecision::cpp_int derangement_count(long n, long k) {
  using boost::multiprecision::cpp_int;
  if (n < 0 || k < 0) throw DomainError("derangement_count: arguments must be nonnegative");
  if (k > n) return 0;
  // rows[m][j] = D(m, j); only the last two rows are needed.
  std::vector<cpp_int> older(static_cast<std::size_t>(k) + 1, 0), old(older), cur(older);
  older[0] = 1;  // D(0, 0)
  if (n == 0) return older[static_cast<std::size_t>(k)];
  // D(1, j) = 0 for all j.
  if (n == 1) return 0;
  for (long m = 2; m <= n; ++m) {
    for (long j = 0; j <= k; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      cpp_int v = old[uj];
      if (j >= 1) v += older[uj - 1];
      cur[uj] = v * (m - 1);
    }
    std::swap(older, old);
    std::swap(old, cur);
  }
  return old[static_cast<std::size_t>(k)];
}

std::vector<double> log_lambda_table(double theta, std::size_t n) {
  check_theta(theta);
  std::vector<double> out(n + 1);
  out[0] = 0.0;
  if (n == 0) return out;
  out[1] = -std::numeric_limits<double>::infinity();
  double prev = 1.0, cur = 0.0, offset = 0.0;  // lambda_{m-1}, lambda_m scaled by e^{-offset}
  for (std::size_t m = 1; m < n; ++m) {
    const double md = static_cast<double>(m);
    const double next = md / (md + theta) * (cur + theta / (md + theta - 1.0) * prev);
    prev = cur;
    cur = next;
    if (cur < 1e-200) {
      prev *= 1e200;
      cur *= 1e200;
      offset -= 200.0 * std::log(10.0);
    }
    out[m + 1] = std::log(cur) + offset;
  }
  return out;
}

double lambda_n(double theta, std::size_t n) { return std::exp(log_lambda_table(theta, n).back()); }

double conditional_ewens_pmf(const PartitionVector& c, double theta) {
  check_theta(theta);
  c.validate();
  if (c.count(1) > 0) return 0.0;
  return std::exp(ewens_log_pmf(c, theta) - log_lambda_table(theta, c.n).back());
}

ExpectedStats expected_stats(std::size_t n, double theta, bool conditional) {
  check_theta(theta);
  if (n == 0) throw DomainError("expected_stats: n must be positive");
  if (conditional && n < 2) throw DomainError("expected_stats: conditional model needs n >= 2");
  // Prefix sums: log m! and log theta_(m) for m = 0..n.
  std::vector<double> log_fact(n + 1, 0.0), log_rise(n + 1, 0.0);
  for (std::size_t m = 1; m <= n; ++m) {
    log_fact[m] = log_fact[m - 1] + std::log(static_cast<double>(m));
    log_rise[m] = log_rise[m - 1] + std::log(theta + static_cast<double>(m - 1));
  }
  std::vector<double> log_lambda;
  if (conditional) log_lambda = log_lambda_table(theta, n);
  ExpectedStats s;
  s.cycle_counts.assign(n, 0.0);
  const double log_theta = std::log(theta);
  for (std::size_t j = 1; j <= n; ++j) {
    if (conditional && j == 1) continue;
    double lg = (log_fact[n] - log_fact[n - j]) - (log_rise[n] - log_rise[n - j]) + log_theta -
                std::log(static_cast<double>(j));
    if (conditional) lg += log_lambda[n - j] - log_lambda[n];
    s.cycle_counts[j - 1] = std::exp(lg);
  }
  if (conditional) {
    for (double v : s.cycle_counts) s.clusters += v;
  } else {
    for (std::size_t i = 0; i < n; ++i) s.clusters += theta / (theta + static_cast<double>(i));
  }
  return s;
}

double expected_clusters(std::size_t n, double theta, bool conditional) {
  if (!conditional) {
    check_theta(theta);
    if (n == 0) throw DomainError("expected_clusters: n must be positive");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += theta / (theta + static_cast<double>(i));
    return s;
  }
  return expected_stats(n, theta, true).clusters;
}

double estimate_theta(double observed_k, std::size_t n, bool conditional, const ThetaSearch& search) {
  if (n == 0) throw DomainError("estimate_theta: n must be positive");
  if (conditional && n < 2) throw DomainError("estimate_theta: conditional model needs n >= 2");
  const double max_k = conditional ? static_cast<double>(n / 2) : static_cast<double>(n);
  const double target = observed_k;
  if (!(target >= 1.0 && target <= max_k)) {
    throw DomainError("estimate_theta: cluster count " + format_double(observed_k) +
                      " outside the attainable interval [1, " + format_double(max_k) + "]");
  }
  // The limits are approached only as theta tends to 0 or infinity.
  if (target == 1.0) return search.lower;
  if (target == max_k) return search.upper;

  double lo = search.lower, hi = search.upper;
  const double k_lo = expected_clusters(n, lo, conditional);
  const double k_hi = expected_clusters(n, hi, conditional);
  if (target < k_lo || target > k_hi) {
    throw DomainError("estimate_theta: target " + format_double(target) + " not bracketed by [" +
                      format_double(lo) + ", " + format_double(hi) + "] (expected counts " +
                      format_double(k_lo) + " .. " + format_double(k_hi) + ")");
  }
  while (true) {
    const double mid = std::sqrt(lo * hi);
    const double k = expected_clusters(n, mid, conditional);
    if (std::abs(k - target) <= search.value_tolerance) return mid;
    (k < target ? lo : hi) = mid;
    if (hi / lo - 1.0 <= search.width_tolerance) return std::sqrt(lo * hi);
  }
}

PartitionVector sample_ewens(std::size_t n, double theta, Rng& rng) {
  check_theta(theta);
  if (n == 0) throw DomainError("sample_ewens: n must be positive");
  std::vector<std::size_t> cluster_of;
  std::vector<std::size_t> sizes;
  cluster_of.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double td = static_cast<double>(t);
    if (t == 0 || rng.uniform() * (theta + td) < theta) {
      cluster_of.push_back(sizes.size());
      sizes.push_back(1);
    } else {
      const auto c = cluster_of[rng.below(t)];
      cluster_of.push_back(c);
      ++sizes[c];
    }
  }
  return PartitionVector::from_sizes(sizes);
}

PartitionVector sample_conditional_ewens(std::size_t n, double theta, Rng& rng, std::size_t max_trials,
                                         std::size_t* trials_used) {
  if (n < 2) throw DomainError("sample_conditional_ewens: n must be at least 2");
  for (std::size_t trial = 1; trial <= max_trials; ++trial) {
    auto c = sample_ewens(n, theta, rng);
    if (c.count(1) == 0) {
      if (trials_used) *trials_used = trial;
      return c;
    }
  }
  throw Error("sample_conditional_ewens: no singleton-free draw in " + std::to_string(max_trials) +
              " trials (acceptance probability lambda_n = " + format_double(lambda_n(theta, n)) + ")");
}

ChiSquareReport chi_square_gof(const PartitionVector& observed, double theta_hat, bool conditional,
                               double alpha, double min_expected) {
  observed.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("chi_square_gof: alpha must lie in (0, 1)");
  if (!(min_expected > 0.0)) throw DomainError("chi_square_gof: min_expected must be positive");
  if (conditional && observed.count(1) > 0) {
    throw DomainError("chi_square_gof: conditional model but the partition has singleton clusters");
  }
  const auto expected = expected_stats(observed.n, theta_hat, conditional);

  ChiSquareReport r;
  r.min_expected = min_expected;
  ChiSquareBin open;
  bool has_open = false;
  for (std::size_t j = conditional ? 2 : 1; j <= observed.n; ++j) {
    if (!has_open) {
      open = ChiSquareBin{j, j, 0.0, 0.0};
      has_open = true;
    }
    open.last_size = j;
    open.observed += static_cast<double>(observed.count(j));
    open.expected += expected.cycle_counts[j - 1];
    if (open.expected >= min_expected) {
      r.bins.push_back(open);
      has_open = false;
    }
  }
  if (has_open) {
    if (r.bins.empty()) {
      r.bins.push_back(open);
    } else {
      auto& last = r.bins.back();
      last.last_size = open.last_size;
      last.observed += open.observed;
      last.expected += open.expected;
    }
  }
  if (r.bins.size() < 3) {
    throw DomainError("chi_square_gof: only " + std::to_string(r.bins.size()) +
                      " bins after merging; the test needs at least 3");
  }
  for (const auto& b : r.bins) {
    const double d = b.observed - b.expected;
    r.statistic += d * d / b.expected;
  }
  r.dof = static_cast<int>(r.bins.size()) - 2;
  r.p_value = r.statistic > 0.0 ? boost::math::gamma_q(0.5 * r.dof, 0.5 * r.statistic) : 1.0;
  r.pass = r.p_value >= alpha;
  return r;
}

void write_fit_report(std::ostream& out, std::span<const WindowFit> fits) {
  out << "window_start,n,K,theta_hat,chi2,dof,p_value,pass,bins,min_expected\n";
  for (const auto& f : fits) {
    out << format_timestamp(f.window_start) << ',' << f.n << ',' << f.clusters << ','
        << (f.theta_hat ? format_double(*f.theta_hat) : "NA") << ',';
    if (f.test) {
      out << format_double(f.test->statistic) << ',' << f.test->dof << ',' << format_double(f.test->p_value) << ','
          << (f.test->pass ? "true" : "false") << ',' << f.test->bins.size() << ','
          << format_double(f.test->min_expected) << '\n';
    } else {
      out << "NA,NA,NA,NA,NA,NA\n";
    }
  }
}

}  // namespace tradeclust
