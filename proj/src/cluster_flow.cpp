#include "tradeclust/cluster_flow.hpp"

#include <algorithm>
#include <ostream>

#include <nlohmann/json.hpp>

namespace tradeclust {

namespace {

std::size_t intersection_size(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return common;
}

}  // namespace

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  const auto common = intersection_size(a, b);
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

std::string flow_event_name(FlowEvent e) {
  switch (e) {
    case FlowEvent::Persist: return "persist";
    case FlowEvent::Split: return "split";
    case FlowEvent::Merge: return "merge";
    case FlowEvent::Birth: return "birth";
    case FlowEvent::Death: return "death";
  }
  return "unknown";
}

std::size_t FlowMap::out_degree(int source) const {
  return static_cast<std::size_t>(
      std::count_if(matches.begin(), matches.end(), [&](const FlowMatch& m) { return m.source == source; }));
}

std::size_t FlowMap::in_degree(int target) const {
  return static_cast<std::size_t>(
      std::count_if(matches.begin(), matches.end(), [&](const FlowMatch& m) { return m.target == target; }));
}

FlowMap match_flows(const Partition& current, const Partition& next, double min_jaccard, std::size_t window) {
  if (!(min_jaccard > 0.0 && min_jaccard <= 1.0)) throw DomainError("match_flows: min_jaccard must lie in (0, 1]");
  current.validate();
  next.validate();
  auto as_sets = [](const Partition& p) {
    std::vector<std::set<std::string>> sets(static_cast<std::size_t>(p.num_clusters));
    for (const auto& [id, c] : p.assignment) sets[static_cast<std::size_t>(c)].insert(id);
    return sets;
  };
  const auto src = as_sets(current);
  const auto dst = as_sets(next);

  FlowMap f;
  f.window = window;
  for (const auto& s : src) f.source_sizes.push_back(s.size());
  for (const auto& s : dst) f.target_sizes.push_back(s.size());

  // Candidate pairs share at least one trader.
  std::vector<std::set<int>> touches(src.size());
  for (const auto& [id, c] : current.assignment) {
    auto it = next.assignment.find(id);
    if (it != next.assignment.end()) touches[static_cast<std::size_t>(c)].insert(it->second);
  }
  std::vector<std::size_t> out(src.size(), 0), in(dst.size(), 0);
  for (std::size_t s = 0; s < src.size(); ++s) {
    for (int t : touches[s]) {
      const auto& b = dst[static_cast<std::size_t>(t)];
      const double j = jaccard(src[s], b);
      if (j < min_jaccard) continue;
      f.matches.push_back({static_cast<int>(s), t, j, intersection_size(src[s], b)});
      ++out[s];
      ++in[static_cast<std::size_t>(t)];
    }
  }

  std::vector<int> only_target(src.size(), -1), only_source(dst.size(), -1);
  for (const auto& m : f.matches) {
    only_target[static_cast<std::size_t>(m.source)] = m.target;
    only_source[static_cast<std::size_t>(m.target)] = m.source;
  }
  for (std::size_t s = 0; s < src.size(); ++s) {
    if (out[s] == 0) {
      f.source_events.push_back(FlowEvent::Death);
    } else if (out[s] > 1) {
      f.source_events.push_back(FlowEvent::Split);
    } else {
      const bool shared = in[static_cast<std::size_t>(only_target[s])] > 1;
      f.source_events.push_back(shared ? FlowEvent::Merge : FlowEvent::Persist);
    }
  }
  for (std::size_t t = 0; t < dst.size(); ++t) {
    if (in[t] == 0) {
      f.target_events.push_back(FlowEvent::Birth);
    } else if (in[t] > 1) {
      f.target_events.push_back(FlowEvent::Merge);
    } else {
      const bool shared = out[static_cast<std::size_t>(only_source[t])] > 1;
      f.target_events.push_back(shared ? FlowEvent::Split : FlowEvent::Persist);
    }
  }
  return f;
}

Tracking track_clusters(std::vector<Partition> windows, double min_jaccard) {
  Tracking tr;
  tr.partitions = std::move(windows);
  if (tr.partitions.empty()) return tr;
  const auto first = static_cast<std::size_t>(tr.partitions.front().num_clusters);
  tr.identities.emplace_back(first);
  for (std::size_t c = 0; c < first; ++c) tr.identities[0][c] = tr.next_identity++;

  for (std::size_t w = 0; w + 1 < tr.partitions.size(); ++w) {
    auto f = match_flows(tr.partitions[w], tr.partitions[w + 1], min_jaccard, w);
    std::vector<int> best_target(f.source_sizes.size(), -1), best_source(f.target_sizes.size(), -1);
    std::vector<double> best_t(f.source_sizes.size(), -1.0), best_s(f.target_sizes.size(), -1.0);
    // Matches are ordered by (source, target), so strict improvement keeps the smaller label on ties.
    for (const auto& m : f.matches) {
      const auto s = static_cast<std::size_t>(m.source), t = static_cast<std::size_t>(m.target);
      if (m.jaccard > best_t[s]) {
        best_t[s] = m.jaccard;
        best_target[s] = m.target;
      }
      if (m.jaccard > best_s[t]) {
        best_s[t] = m.jaccard;
        best_source[t] = m.source;
      }
    }
    std::vector<int> ids(f.target_sizes.size());
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const int s = best_source[t];
      if (s >= 0 && best_target[static_cast<std::size_t>(s)] == static_cast<int>(t)) {
        ids[t] = tr.identities[w][static_cast<std::size_t>(s)];
      } else {
        ids[t] = tr.next_identity++;
      }
    }
    tr.identities.push_back(std::move(ids));
    tr.flows.push_back(std::move(f));
  }
  return tr;
}

namespace {

void check_consecutive(const Tracking& tr) {
  if (tr.identities.size() != tr.partitions.size() ||
      (!tr.partitions.empty() && tr.flows.size() + 1 != tr.partitions.size())) {
    throw DomainError("tracking has inconsistent window counts");
  }
  for (std::size_t i = 0; i < tr.flows.size(); ++i) {
    if (tr.flows[i].window != i) {
      throw DomainError("flows are not consecutive: expected window " + std::to_string(i) + ", got " +
                        std::to_string(tr.flows[i].window));
    }
  }
}

}  // namespace

void export_alluvial(std::ostream& out, const Tracking& tr) {
  check_consecutive(tr);
  nlohmann::ordered_json doc;
  doc["windows"] = nlohmann::ordered_json::array();
  doc["ribbons"] = nlohmann::ordered_json::array();
  for (std::size_t w = 0; w < tr.partitions.size(); ++w) {
    nlohmann::ordered_json win;
    win["window"] = w;
    win["nodes"] = nlohmann::ordered_json::array();
    const auto sizes = tr.partitions[w].sizes();
    for (std::size_t c = 0; c < sizes.size(); ++c) {
      win["nodes"].push_back({{"cluster", c}, {"identity", tr.identities[w][c]}, {"size", sizes[c]}});
    }
    doc["windows"].push_back(std::move(win));
  }
  for (const auto& f : tr.flows) {
    for (const auto& m : f.matches) {
      doc["ribbons"].push_back({{"window", f.window},
                                {"source", m.source},
                                {"target", m.target},
                                {"source_identity", tr.identities[f.window][static_cast<std::size_t>(m.source)]},
                                {"target_identity", tr.identities[f.window + 1][static_cast<std::size_t>(m.target)]},
                                {"size", m.overlap},
                                {"jaccard", m.jaccard}});
    }
  }
  out << doc.dump(1) << '\n';
}

void write_flow_events(std::ostream& out, const Tracking& tr) {
  check_consecutive(tr);
  out << "window,cluster,event,inherited_label\n";
  for (const auto& f : tr.flows) {
    for (std::size_t s = 0; s < f.source_events.size(); ++s) {
      if (f.source_events[s] != FlowEvent::Death) continue;
      out << f.window << ',' << s << ",death," << tr.identities[f.window][s] << '\n';
    }
    for (std::size_t t = 0; t < f.target_events.size(); ++t) {
      out << f.window + 1 << ',' << t << ',' << flow_event_name(f.target_events[t]) << ','
          << tr.identities[f.window + 1][t] << '\n';
    }
  }
}

}  // namespace tradeclust
