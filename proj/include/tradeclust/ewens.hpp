#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "tradeclust/common.hpp"
#include "tradeclust/community.hpp"

namespace tradeclust {

/// counts[j - 1] is the number of clusters with exactly j members.
struct PartitionVector {
  std::vector<std::size_t> counts;
  std::size_t n = 0;

  /// Number of clusters of size j (0 outside 1..n).
  std::size_t count(std::size_t j) const { return j >= 1 && j <= counts.size() ? counts[j - 1] : 0; }
  std::size_t clusters() const;
  /// Throws DomainError unless sum of j * c_j equals n.
  void validate() const;

  static PartitionVector from_sizes(std::span<const std::size_t> sizes);
  bool operator==(const PartitionVector&) const = default;
};

PartitionVector partition_vector(const Partition& p);

/// log of theta (theta + 1) ... (theta + n - 1).
double log_rising_factorial(double theta, std::size_t n);

double ewens_log_pmf(const PartitionVector& c, double theta);
double ewens_pmf(const PartitionVector& c, double theta);

/// Derangements of n elements with exactly k cycles (0 when k > n).
boost::multiprecision::cpp_int derangement_count(long n, long k);

/// Probability of no singleton cluster under the Ewens law on n elements.
double lambda_n(double theta, std::size_t n);
/// log lambda_m for m = 0..n; entry 1 is -infinity. Stays finite for large theta.
std::vector<double> log_lambda_table(double theta, std::size_t n);

/// Ewens law restricted to singleton-free partitions; 0 when c_1 > 0.
double conditional_ewens_pmf(const PartitionVector& c, double theta);

struct ExpectedStats {
  std::vector<double> cycle_counts;  // index j - 1
  double clusters = 0.0;
};

ExpectedStats expected_stats(std::size_t n, double theta, bool conditional);

/// Expected number of clusters alone, O(n).
double expected_clusters(std::size_t n, double theta, bool conditional);

struct ThetaSearch {
  double lower = 1e-6;
  double upper = 1e6;
  double value_tolerance = 1e-9;
  double width_tolerance = 1e-10;  // relative
};

/// theta whose expected cluster count equals `observed_k`. Observed cluster
/// counts are integers, so matching them is matching at integer resolution.
double estimate_theta(double observed_k, std::size_t n, bool conditional, const ThetaSearch& search = {});

/// Chinese restaurant process draw.
PartitionVector sample_ewens(std::size_t n, double theta, Rng& rng);

/// Rejection sampler for the singleton-free law. `trials_used`, when given,
/// receives the number of unconditional draws made.
PartitionVector sample_conditional_ewens(std::size_t n, double theta, Rng& rng,
                                         std::size_t max_trials = 1'000'000,
                                         std::size_t* trials_used = nullptr);

struct ChiSquareBin {
  std::size_t first_size = 0;
  std::size_t last_size = 0;
  double observed = 0.0;
  double expected = 0.0;
};

struct ChiSquareReport {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  bool pass = true;
  double min_expected = 1.0;
  std::vector<ChiSquareBin> bins;
};

/// Goodness of fit of the cluster-size counts against the fitted law.
///
/// Size categories are accumulated from the smallest size upward until the
/// bin's expected count reaches `min_expected`; a short tail joins the last
/// full bin. One degree of freedom is charged for the estimated theta.
ChiSquareReport chi_square_gof(const PartitionVector& observed, double theta_hat, bool conditional,
                               double alpha = 0.05, double min_expected = 1.0);

struct WindowFit {
  Timestamp window_start;
  std::size_t n = 0;
  std::size_t clusters = 0;
  /// Absent when the window cannot be fitted (too few traders or bins).
  std::optional<double> theta_hat;
  std::optional<ChiSquareReport> test;
};

void write_fit_report(std::ostream& out, std::span<const WindowFit> fits);

}  // namespace tradeclust
