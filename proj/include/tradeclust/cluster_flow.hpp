#pragma once

#include <cstddef>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tradeclust/community.hpp"

namespace tradeclust {

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

enum class FlowEvent { Persist, Split, Merge, Birth, Death };

std::string flow_event_name(FlowEvent e);

struct FlowMatch {
  int source = 0;  // cluster label at window t
  int target = 0;  // cluster label at window t + 1
  double jaccard = 0.0;
  std::size_t overlap = 0;

  bool operator==(const FlowMatch&) const = default;
};

/// Correspondence between the clusters of window t and window t + 1.
struct FlowMap {
  std::size_t window = 0;
  std::vector<FlowMatch> matches;  // sorted by (source, target)
  std::vector<FlowEvent> source_events;
  std::vector<FlowEvent> target_events;
  std::vector<std::size_t> source_sizes;
  std::vector<std::size_t> target_sizes;

  std::size_t out_degree(int source) const;
  std::size_t in_degree(int target) const;
};

/// All cluster pairs with Jaccard >= min_jaccard become matches. A source
/// with no match dies, one with several splits; a target with no match is
/// born, one with several is a merge; one-to-one pairs persist.
FlowMap match_flows(const Partition& current, const Partition& next, double min_jaccard = 0.3,
                    std::size_t window = 0);

/// Partitions over consecutive windows with stable cluster identities.
struct Tracking {
  std::vector<Partition> partitions;
  std::vector<FlowMap> flows;                // flows[t] maps window t to t + 1
  std::vector<std::vector<int>> identities;  // identities[t][cluster]
  int next_identity = 0;
};

/// Sequential identity propagation. A target inherits a source identity when
/// each is the other's best match (highest Jaccard, ties to the smaller
/// label); every other cluster receives a fresh identity.
Tracking track_clusters(std::vector<Partition> windows, double min_jaccard = 0.3);

/// JSON document:
///   {"windows": [{"window": t, "nodes": [{"cluster", "identity", "size"}]}],
///    "ribbons": [{"window": t, "source", "target", "source_identity",
///                 "target_identity", "size", "jaccard"}]}
/// Ribbon `size` is the number of shared traders.
void export_alluvial(std::ostream& out, const Tracking& tracking);

/// `window,cluster,event,inherited_label`: one row per dying source cluster
/// (at its own window) and per cluster of every later window.
void write_flow_events(std::ostream& out, const Tracking& tracking);

}  // namespace tradeclust
