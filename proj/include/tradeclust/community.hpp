#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tradeclust/svn.hpp"
#include "tradeclust/trade_model.hpp"

namespace tradeclust {

/// Cluster assignment with dense labels 0..num_clusters-1.
struct Partition {
  std::map<std::string, int> assignment;
  int num_clusters = 0;

  /// Relabels densely in order of first appearance along `ids`.
  static Partition from_labels(const std::vector<std::string>& ids, const std::vector<int>& labels);
  /// Member lists indexed by label, members sorted.
  std::vector<std::vector<std::string>> clusters() const;
  std::vector<std::size_t> sizes() const;
  void validate() const;
  bool operator==(const Partition&) const = default;
};

/// Two-level map equation codelength (bits) of the random walk on the network
/// with every linked pair weighted 1. Nodes visit in proportion to degree.
double map_equation_codelength(const ValidatedNetwork& network, const Partition& partition);

struct InfomapOptions {
  std::uint64_t seed = 1;
  /// Independent optimizer runs; the shortest codelength wins.
  int trials = 1;
  int max_sweeps = 200;
};

/// Greedy map-equation minimization: local node moves followed by module
/// aggregation, repeated until no move improves the codelength.
Partition infomap_partition(const ValidatedNetwork& network, const InfomapOptions& options = {});
inline Partition infomap_partition(const ValidatedNetwork& network, std::uint64_t seed) {
  return infomap_partition(network, InfomapOptions{seed});
}

/// Newman modularity on the unit-weight pair graph.
double modularity(const ValidatedNetwork& network, const Partition& partition);

struct DistanceMatrix {
  std::vector<std::string> ids;
  std::vector<double> values;           // row-major, ids.size()^2
  std::vector<std::string> excluded;    // constant series left out

  std::size_t size() const { return ids.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * ids.size() + j]; }
};

/// 1 - |Pearson correlation| between every pair of non-constant series.
DistanceMatrix correlation_distance_matrix(std::span<const PositionSeries> positions);

struct Merge {
  std::size_t a = 0;  // cluster slots, both already present
  std::size_t b = 0;
  double height = 0.0;
};

/// Full average-linkage dendrogram; merges are returned in order.
std::vector<Merge> average_linkage(const DistanceMatrix& d);

/// Average-linkage clusters cut below `threshold`; threshold >= 1 joins everything.
Partition hierarchical_partition(const DistanceMatrix& d, double threshold);

/// Per-window network summary.
struct NetworkStats {
  std::size_t clusters = 0;
  std::size_t links = 0;
  std::size_t traders_in_clusters = 0;
  std::size_t active_traders = 0;
  double mean_cluster_size = 0.0;
  double modularity = 0.0;  // NaN for a link-free network
  double in_cluster_ratio = 0.0;
  double clusters_per_trader = 0.0;
};

NetworkStats network_stats(const ValidatedNetwork& network, const Partition& partition,
                           std::size_t active_traders);

void write_partition(std::ostream& out, const Partition& partition);
Partition read_partition(std::istream& in);

/// Adjusted Rand index between two labelings of the same ids.
double adjusted_rand_index(const Partition& a, const Partition& b);

}  // namespace tradeclust
