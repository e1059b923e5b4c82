#pragma once

// Brute-force references used by the unit and acceptance tests. Everything
// here is deliberately naive: exact rationals, exhaustive enumeration, O(T^2)
// scans.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace oracle {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

inline cpp_int binom(long n, long k) {
  if (k < 0 || k > n) return 0;
  cpp_int r = 1;
  for (long i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline cpp_int factorial(long n) {
  cpp_int r = 1;
  for (long i = 2; i <= n; ++i) r *= i;
  return r;
}

/// P(X >= k), X ~ Hypergeometric(population n, n_p marked, n_q draws), exact.
inline double hypergeom_upper(long n, long n_p, long n_q, long k) {
  cpp_int num = 0;
  for (long i = std::max(k, 0L); i <= std::min(n_p, n_q); ++i) num += binom(n_p, i) * binom(n - n_p, n_q - i);
  return static_cast<double>(cpp_rational(num, binom(n, n_q)));
}

/// Calls fn with every integer partition of n as a multiset of part sizes (descending).
inline void for_each_partition(int n, const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> parts;
  std::function<void(int, int)> rec = [&](int left, int max_part) {
    if (left == 0) {
      fn(parts);
      return;
    }
    for (int p = std::min(left, max_part); p >= 1; --p) {
      parts.push_back(static_cast<std::size_t>(p));
      rec(left - p, p);
      parts.pop_back();
    }
  };
  rec(n, n);
}

/// Unsigned Stirling numbers of the first kind, table up to n.
inline std::vector<std::vector<cpp_int>> stirling1(int n) {
  std::vector<std::vector<cpp_int>> s(static_cast<std::size_t>(n) + 1, std::vector<cpp_int>(static_cast<std::size_t>(n) + 1, 0));
  s[0][0] = 1;
  for (int m = 1; m <= n; ++m) {
    for (int k = 1; k <= m; ++k) s[m][k] = s[m - 1][k - 1] + cpp_int(m - 1) * s[m - 1][k];
  }
  return s;
}

/// Derangements with k cycles via inclusion-exclusion over fixed points:
/// fixing j points leaves n - j elements in k - j cycles, so
/// D(n,k) = sum_j (-1)^j C(n,j) S(n-j, k-j).
inline cpp_int derangements(int n, int k, const std::vector<std::vector<cpp_int>>& s) {
  cpp_int total = 0;
  for (int j = 0; j <= n; ++j) {
    if (j > k) break;
    const cpp_int term = binom(n, j) * s[n - j][k - j];
    if (j % 2) {
      total -= term;
    } else {
      total += term;
    }
  }
  return total;
}

/// Probability of no singleton under Ewens(theta) on n elements, from the
/// derangement counts: lambda_n = sum_k D(n,k) theta^k / theta_(n).
inline double lambda_from_derangements(int n, double theta, const std::vector<std::vector<cpp_int>>& s) {
  long double rising = 1.0L;
  for (int i = 0; i < n; ++i) rising *= theta + i;
  long double sum = 0.0L;
  for (int k = 1; k <= n; ++k) {
    const auto d = derangements(n, k, s);
    if (d == 0) continue;
    sum += static_cast<long double>(d) * std::pow(static_cast<long double>(theta), k);
  }
  return static_cast<double>(sum / rising);
}

/// Maximum relative peak-to-trough decline by scanning every pair.
inline double max_drawdown(std::span<const double> equity) {
  double worst = 0.0;
  for (std::size_t i = 0; i < equity.size(); ++i) {
    for (std::size_t j = i + 1; j < equity.size(); ++j) {
      if (equity[i] > 0.0) worst = std::max(worst, (equity[i] - equity[j]) / equity[i]);
    }
  }
  return worst;
}

/// Every set partition of {0..n-1} as restricted growth strings.
inline void for_each_set_partition(int n, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  std::function<void(int, int)> rec = [&](int i, int used) {
    if (i == n) {
      fn(labels);
      return;
    }
    for (int c = 0; c <= used; ++c) {
      labels[static_cast<std::size_t>(i)] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  if (n > 0) {
    rec(1, 1);
  } else {
    fn(labels);
  }
}

/// Both loss bounds evaluated directly; the meta-expert bound
/// L* + ln(M) / eta is the better one iff it does not exceed
/// min_i L_i + ln(N / c_i) / eta.
struct BoundVerdict {
  double u_minus;
  double u_star;
  bool advantage;
};

inline BoundVerdict cluster_bound(std::span<const std::size_t> cards, std::span<const double> losses, double eta) {
  double total = 0.0;
  for (auto c : cards) total += static_cast<double>(c);
  const double best = *std::min_element(losses.begin(), losses.end());
  const double u_minus = best + std::log(static_cast<double>(cards.size())) / eta;
  double u_star = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cards.size(); ++i) {
    u_star = std::min(u_star, losses[i] + std::log(total / static_cast<double>(cards[i])) / eta);
  }
  return {u_minus, u_star, u_minus <= u_star};
}

}  // namespace oracle
