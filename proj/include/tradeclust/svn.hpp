#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tradeclust/sync_states.hpp"

namespace tradeclust {

struct CooccurrenceCounts {
  std::size_t n = 0;
  std::size_t n_p = 0;
  std::size_t n_q = 0;
  std::size_t n_pq = 0;

  /// Throws DomainError unless n_pq <= min(n_p, n_q) and n_p, n_q <= n.
  void validate() const;
  bool operator==(const CooccurrenceCounts&) const = default;
};

CooccurrenceCounts cooccurrence_counts(const StateSeries& a, const StateSeries& b, State p, State q);

/// P(X >= n_pq) for X ~ Hypergeometric(population n, n_p marked, n_q draws).
double hypergeom_pvalue(const CooccurrenceCounts& c);

enum class LinkKind { BuyBuy, SellSell };

std::string link_kind_name(LinkKind k);
LinkKind link_kind_from_name(const std::string& name);

struct SvnEdge {
  std::string a;  // a < b
  std::string b;
  LinkKind kind = LinkKind::BuyBuy;
  double p_value = 1.0;

  bool operator==(const SvnEdge&) const = default;
};

struct ValidatedNetwork {
  std::vector<std::string> nodes;  // sorted, each with degree >= 1
  std::vector<SvnEdge> edges;      // sorted by (a, b, kind)
  double alpha = 0.05;
  std::size_t num_tests = 0;       // 2 * C(N, 2): buy-buy and sell-sell per pair

  double threshold() const { return num_tests ? alpha / static_cast<double>(num_tests) : 0.0; }
};

/// Tests buy-buy and sell-sell co-occurrence for every unordered pair and keeps
/// links with p-value below alpha / num_tests. Series must share one slice grid.
ValidatedNetwork build_svn(std::span<const StateSeries> series, double alpha = 0.05);

/// Rebuilds node list and ordering from an arbitrary edge set.
ValidatedNetwork make_network(std::vector<SvnEdge> edges, double alpha = 0.05, std::size_t num_tests = 0);

void write_edges(std::ostream& out, const ValidatedNetwork& net);
ValidatedNetwork read_edges(std::istream& in);

}  // namespace tradeclust
