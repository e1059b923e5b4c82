#include "tradeclust/community.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "tradeclust/csv.hpp"

namespace tradeclust {

Partition Partition::from_labels(const std::vector<std::string>& ids, const std::vector<int>& labels) {
  if (ids.size() != labels.size()) throw DomainError("Partition::from_labels: size mismatch");
  Partition p;
  std::map<int, int> dense;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto [it, inserted] = dense.emplace(labels[i], static_cast<int>(dense.size()));
    if (!p.assignment.emplace(ids[i], it->second).second) {
      throw DomainError("Partition::from_labels: duplicate id " + ids[i]);
    }
  }
  p.num_clusters = static_cast<int>(dense.size());
  return p;
}

std::vector<std::vector<std::string>> Partition::clusters() const {
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(num_clusters));
  for (const auto& [id, c] : assignment) out.at(static_cast<std::size_t>(c)).push_back(id);
  return out;
}

std::vector<std::size_t> Partition::sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(num_clusters), 0);
  for (const auto& [id, c] : assignment) ++out.at(static_cast<std::size_t>(c));
  return out;
}

void Partition::validate() const {
  std::vector<bool> seen(static_cast<std::size_t>(std::max(num_clusters, 0)), false);
  for (const auto& [id, c] : assignment) {
    if (c < 0 || c >= num_clusters) throw DomainError("partition label out of range for " + id);
    seen[static_cast<std::size_t>(c)] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw DomainError("partition labels have gaps");
  }
}

namespace {

double plogp(double p) { return p > 0.0 ? p * std::log2(p) : 0.0; }

/// Unit-weight pair graph over the network nodes.
struct PairGraph {
  std::vector<std::string> ids;
  std::vector<std::vector<std::size_t>> adj;  // sorted, deduplicated
  std::size_t num_links = 0;
};

PairGraph pair_graph(const ValidatedNetwork& net) {
  PairGraph g;
  std::set<std::string> ids(net.nodes.begin(), net.nodes.end());
  for (const auto& e : net.edges) {
    ids.insert(e.a);
    ids.insert(e.b);
  }
  g.ids.assign(ids.begin(), ids.end());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < g.ids.size(); ++i) index.emplace(g.ids[i], i);
  g.adj.resize(g.ids.size());
  for (const auto& e : net.edges) {
    const auto a = index.at(e.a), b = index.at(e.b);
    if (a == b) continue;
    g.adj[a].push_back(b);
    g.adj[b].push_back(a);
  }
  for (auto& row : g.adj) {
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    g.num_links += row.size();
  }
  g.num_links /= 2;
  return g;
}

std::vector<int> labels_for(const PairGraph& g, const Partition& p) {
  std::vector<int> labels(g.ids.size());
  for (std::size_t i = 0; i < g.ids.size(); ++i) {
    auto it = p.assignment.find(g.ids[i]);
    if (it == p.assignment.end()) throw DomainError("partition does not cover node " + g.ids[i]);
    labels[i] = it->second;
  }
  return labels;
}

/// Flow network at one aggregation level. Edge flows are symmetric and
/// exclude flow internal to a node.
struct FlowLevel {
  std::vector<double> flow;
  std::vector<std::vector<std::pair<std::size_t, double>>> adj;
  std::vector<double> out;
};

FlowLevel base_level(const PairGraph& g) {
  FlowLevel lvl;
  const std::size_t n = g.ids.size();
  lvl.flow.assign(n, 0.0);
  lvl.adj.resize(n);
  lvl.out.assign(n, 0.0);
  if (g.num_links == 0) {
    std::fill(lvl.flow.begin(), lvl.flow.end(), 1.0 / static_cast<double>(n));
    return lvl;
  }
  const double w = 1.0 / (2.0 * static_cast<double>(g.num_links));
  for (std::size_t v = 0; v < n; ++v) {
    lvl.flow[v] = static_cast<double>(g.adj[v].size()) * w;
    for (auto u : g.adj[v]) lvl.adj[v].emplace_back(u, w);
    lvl.out[v] = lvl.flow[v];
  }
  return lvl;
}

double node_entropy_term(const FlowLevel& base) {
  double s = 0.0;
  for (double p : base.flow) s += plogp(p);
  return s;
}

double codelength_of(const FlowLevel& lvl, const std::vector<int>& labels, double node_term) {
  const int m = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> exit(static_cast<std::size_t>(m), 0.0), flow(static_cast<std::size_t>(m), 0.0);
  for (std::size_t v = 0; v < lvl.flow.size(); ++v) {
    const auto mv = static_cast<std::size_t>(labels[v]);
    flow[mv] += lvl.flow[v];
    for (auto [u, w] : lvl.adj[v]) {
      if (labels[u] != labels[v]) exit[mv] += w;
    }
  }
  double sum_exit = 0.0, exit_terms = 0.0, total_terms = 0.0;
  for (std::size_t i = 0; i < exit.size(); ++i) {
    sum_exit += exit[i];
    exit_terms += plogp(exit[i]);
    total_terms += plogp(exit[i] + flow[i]);
  }
  return std::max(0.0, plogp(sum_exit) - 2.0 * exit_terms - node_term + total_terms);
}

class MapOptimizer {
 public:
  MapOptimizer(const FlowLevel& base, double node_term) : base_(base), node_term_(node_term) {}

  /// Returns module label per base node.
  std::vector<int> run(Rng& rng, int max_sweeps) {
    FlowLevel lvl = base_;
    std::vector<int> of_base(base_.flow.size());
    std::iota(of_base.begin(), of_base.end(), 0);
    while (true) {
      const auto module = local_moves(lvl, rng, max_sweeps);
      const int num_modules = *std::max_element(module.begin(), module.end()) + 1;
      for (auto& m : of_base) m = module[static_cast<std::size_t>(m)];
      if (static_cast<std::size_t>(num_modules) == lvl.flow.size()) break;
      lvl = aggregate(lvl, module, num_modules);
    }
    return of_base;
  }

 private:
  static double clamp0(double x) { return x < 1e-15 ? 0.0 : x; }

  /// Returns dense module ids (first appearance order) for the level nodes.
  std::vector<int> local_moves(const FlowLevel& lvl, Rng& rng, int max_sweeps) {
    const std::size_t n = lvl.flow.size();
    std::vector<std::size_t> module(n);
    std::iota(module.begin(), module.end(), 0);
    std::vector<double> exit(lvl.out), flow(lvl.flow);
    double sum_exit = std::accumulate(exit.begin(), exit.end(), 0.0);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> link(n, 0.0);
    std::vector<std::size_t> touched;

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      bool moved = false;
      for (auto v : order) {
        const auto a = module[v];
        touched.clear();
        for (auto [u, w] : lvl.adj[v]) {
          const auto mu = module[u];
          if (link[mu] == 0.0) touched.push_back(mu);
          link[mu] += w;
        }
        const double w_va = link[a];
        const double out_v = lvl.out[v];
        const double p_v = lvl.flow[v];
        const double exit_a2 = clamp0(exit[a] - out_v + 2.0 * w_va);
        const double flow_a2 = flow[a] - p_v;

        double best_delta = 0.0;
        std::size_t best = a;
        std::sort(touched.begin(), touched.end());
        for (auto b : touched) {
          if (b == a) continue;
          const double exit_b2 = clamp0(exit[b] + out_v - 2.0 * link[b]);
          const double flow_b2 = flow[b] + p_v;
          const double sum2 = clamp0(sum_exit - exit[a] - exit[b] + exit_a2 + exit_b2);
          const double delta = (plogp(sum2) - plogp(sum_exit)) -
                               2.0 * (plogp(exit_a2) + plogp(exit_b2) - plogp(exit[a]) - plogp(exit[b])) +
                               (plogp(exit_a2 + flow_a2) + plogp(exit_b2 + flow_b2) -
                                plogp(exit[a] + flow[a]) - plogp(exit[b] + flow[b]));
          if (delta < best_delta - 1e-12) {
            best_delta = delta;
            best = b;
          }
        }
        if (best != a) {
          const double exit_b2 = clamp0(exit[best] + out_v - 2.0 * link[best]);
          sum_exit = clamp0(sum_exit - exit[a] - exit[best] + exit_a2 + exit_b2);
          exit[a] = exit_a2;
          flow[a] = flow_a2;
          exit[best] = exit_b2;
          flow[best] += p_v;
          module[v] = best;
          moved = true;
        }
        for (auto m : touched) link[m] = 0.0;
      }
      if (!moved) break;
    }

    std::vector<int> dense(n, -1), out(n);
    int next = 0;
    for (std::size_t v = 0; v < n; ++v) {
      auto& d = dense[module[v]];
      if (d < 0) d = next++;
      out[v] = d;
    }
    return out;
  }

  static FlowLevel aggregate(const FlowLevel& lvl, const std::vector<int>& module, int num_modules) {
    const auto m = static_cast<std::size_t>(num_modules);
    FlowLevel next;
    next.flow.assign(m, 0.0);
    next.out.assign(m, 0.0);
    next.adj.resize(m);
    std::vector<std::map<std::size_t, double>> acc(m);
    for (std::size_t v = 0; v < lvl.flow.size(); ++v) {
      const auto mv = static_cast<std::size_t>(module[v]);
      next.flow[mv] += lvl.flow[v];
      for (auto [u, w] : lvl.adj[v]) {
        const auto mu = static_cast<std::size_t>(module[u]);
        if (mu != mv) acc[mv][mu] += w;
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (auto [j, w] : acc[i]) {
        next.adj[i].emplace_back(j, w);
        next.out[i] += w;
      }
    }
    return next;
  }

  const FlowLevel& base_;
  double node_term_;
};

}  // namespace

double map_equation_codelength(const ValidatedNetwork& network, const Partition& partition) {
  const auto g = pair_graph(network);
  if (g.ids.empty()) return 0.0;
  const auto labels = labels_for(g, partition);
  // Compact labels so the module count matches the partition restricted to the nodes.
  std::map<int, int> dense;
  std::vector<int> compact(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    compact[i] = dense.emplace(labels[i], static_cast<int>(dense.size())).first->second;
  }
  const auto base = base_level(g);
  return codelength_of(base, compact, node_entropy_term(base));
}

Partition infomap_partition(const ValidatedNetwork& network, const InfomapOptions& options) {
  const auto g = pair_graph(network);
  if (g.ids.empty()) throw DomainError("infomap_partition: empty network");
  if (options.trials < 1) throw DomainError("infomap_partition: trials must be >= 1");
  const auto base = base_level(g);
  const double node_term = node_entropy_term(base);

  Rng rng(options.seed);
  MapOptimizer optimizer(base, node_term);
  std::vector<int> best = std::vector<int>(g.ids.size(), 0);
  double best_len = codelength_of(base, best, node_term);
  for (int t = 0; t < options.trials; ++t) {
    auto labels = optimizer.run(rng, options.max_sweeps);
    const double len = codelength_of(base, labels, node_term);
    if (len < best_len - 1e-12) {
      best_len = len;
      best = std::move(labels);
    }
  }
  return Partition::from_labels(g.ids, best);
}

double modularity(const ValidatedNetwork& network, const Partition& partition) {
  const auto g = pair_graph(network);
  if (g.num_links == 0) throw DomainError("modularity: network has no links");
  const auto labels = labels_for(g, partition);
  std::map<int, std::pair<double, double>> per;  // internal links, degree sum
  for (std::size_t v = 0; v < g.ids.size(); ++v) {
    auto& [internal, degree] = per[labels[v]];
    degree += static_cast<double>(g.adj[v].size());
    for (auto u : g.adj[v]) {
      if (u > v && labels[u] == labels[v]) internal += 1.0;
    }
  }
  const double m = static_cast<double>(g.num_links);
  double q = 0.0;
  for (const auto& [label, stats] : per) {
    const double share = stats.second / (2.0 * m);
    q += stats.first / m - share * share;
  }
  return q;
}

DistanceMatrix correlation_distance_matrix(std::span<const PositionSeries> positions) {
  if (positions.size() < 2) throw DomainError("correlation_distance_matrix: need at least 2 series");
  const std::size_t len = positions.front().values.size();
  if (len < 3) throw DomainError("correlation_distance_matrix: series must have length >= 3");
  for (const auto& s : positions) {
    if (s.values.size() != len) throw DomainError("correlation_distance_matrix: series " + s.trader_id + " is misaligned");
  }

  DistanceMatrix d;
  std::vector<std::vector<double>> centered;
  std::vector<double> norms;
  std::vector<std::size_t> order(positions.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return positions[x].trader_id < positions[y].trader_id;
  });
  for (auto idx : order) {
    const auto& s = positions[idx];
    const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(len);
    std::vector<double> c(len);
    double ss = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      c[k] = s.values[k] - mean;
      ss += c[k] * c[k];
    }
    const bool constant = std::all_of(s.values.begin(), s.values.end(),
                                      [&](double v) { return v == s.values.front(); });
    if (constant || ss == 0.0) {
      d.excluded.push_back(s.trader_id);
      continue;
    }
    d.ids.push_back(s.trader_id);
    centered.push_back(std::move(c));
    norms.push_back(std::sqrt(ss));
  }

  const std::size_t n = d.ids.size();
  d.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += centered[i][k] * centered[j][k];
      const double r = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      const double dist = std::clamp(1.0 - std::abs(r), 0.0, 1.0);
      d.values[i * n + j] = dist;
      d.values[j * n + i] = dist;
    }
  }
  return d;
}

std::vector<Merge> average_linkage(const DistanceMatrix& d) {
  const std::size_t n = d.size();
  std::vector<double> dist(d.values);
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  std::vector<Merge> merges;
  merges.reserve(n ? n - 1 : 0);
  // O(n^3) scan; backtest universes are a few hundred traders.
  for (std::size_t step = 1; step < n; ++step) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (dist[i * n + j] < best) {
          best = dist[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    merges.push_back({bi, bj, best});
    const double si = static_cast<double>(size[bi]), sj = static_cast<double>(size[bj]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double v = (si * dist[bi * n + k] + sj * dist[bj * n + k]) / (si + sj);
      dist[bi * n + k] = v;
      dist[k * n + bi] = v;
    }
    size[bi] += size[bj];
    active[bj] = false;
  }
  return merges;
}

Partition hierarchical_partition(const DistanceMatrix& d, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw DomainError("hierarchical_partition: threshold must lie in [0, 1]");
  const std::size_t n = d.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& m : average_linkage(d)) {
    if (threshold < 1.0 && !(m.height < threshold)) break;
    parent[find(m.b)] = find(m.a);
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(find(i));
  return Partition::from_labels(d.ids, labels);
}

NetworkStats network_stats(const ValidatedNetwork& network, const Partition& partition,
                           std::size_t active_traders) {
  NetworkStats s;
  s.links = network.edges.size();
  s.traders_in_clusters = network.nodes.size();
  s.active_traders = active_traders;
  std::set<int> used;
  for (const auto& id : network.nodes) {
    auto it = partition.assignment.find(id);
    if (it == partition.assignment.end()) throw DomainError("partition does not cover node " + id);
    used.insert(it->second);
  }
  s.clusters = used.size();
  s.mean_cluster_size = s.clusters ? static_cast<double>(s.traders_in_clusters) / static_cast<double>(s.clusters) : 0.0;
  s.modularity = s.links ? modularity(network, partition) : std::numeric_limits<double>::quiet_NaN();
  s.in_cluster_ratio = active_traders ? static_cast<double>(s.traders_in_clusters) / static_cast<double>(active_traders) : 0.0;
  s.clusters_per_trader = s.traders_in_clusters ? static_cast<double>(s.clusters) / static_cast<double>(s.traders_in_clusters) : 0.0;
  return s;
}

void write_partition(std::ostream& out, const Partition& partition) {
  out << "trader_id,cluster\n";
  for (const auto& [id, c] : partition.assignment) out << id << ',' << c << '\n';
}

Partition read_partition(std::istream& in) {
  std::vector<std::string> ids;
  std::vector<int> labels;
  for (const auto& rec : csv::read(in, {"trader_id", "cluster"})) {
    ids.push_back(rec.fields[0]);
    labels.push_back(static_cast<int>(csv::to_int(rec.fields[1], rec.line)));
  }
  Partition p;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!p.assignment.emplace(ids[i], labels[i]).second) throw DataError("duplicate trader " + ids[i]);
    p.num_clusters = std::max(p.num_clusters, labels[i] + 1);
  }
  p.validate();
  return p;
}

double adjusted_rand_index(const Partition& a, const Partition& b) {
  std::set<std::string> ids;
  for (const auto& [id, c] : a.assignment) ids.insert(id);
  for (const auto& [id, c] : b.assignment) ids.insert(id);
  // Ids missing from one side count as singletons there.
  std::map<std::pair<long, long>, double> table;
  std::map<long, double> rows, cols;
  long fresh = 1;
  for (const auto& id : ids) {
    auto ia = a.assignment.find(id);
    auto ib = b.assignment.find(id);
    const long la = ia != a.assignment.end() ? ia->second : -(fresh++);
    const long lb = ib != b.assignment.end() ? ib->second : -(fresh++);
    table[{la, lb}] += 1.0;
    rows[la] += 1.0;
    cols[lb] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [k, v] : table) index += c2(v);
  for (const auto& [k, v] : rows) sa += c2(v);
  for (const auto& [k, v] : cols) sb += c2(v);
  const double total = c2(static_cast<double>(ids.size()));
  if (total == 0.0) return 1.0;
  const double expected = sa * sb / total;
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return index == max_index ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace tradeclust
