#include "tradeclust/svn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>
#include <unordered_map>

#include <boost/math/special_functions/gamma.hpp>

#include "tradeclust/csv.hpp"

namespace tradeclust {

void CooccurrenceCounts::validate() const {
  if (n_p > n || n_q > n || n_pq > std::min(n_p, n_q)) {
    throw DomainError("co-occurrence counts violate 0 <= n_pq <= min(n_p, n_q) <= n");
  }
}

CooccurrenceCounts cooccurrence_counts(const StateSeries& a, const StateSeries& b, State p, State q) {
  if (a.states.size() != b.states.size()) {
    throw DomainError("cooccurrence_counts: series lengths differ (" + std::to_string(a.states.size()) +
                      " vs " + std::to_string(b.states.size()) + ")");
  }
  CooccurrenceCounts c;
  c.n = a.states.size();
  for (std::size_t k = 0; k < c.n; ++k) {
    const bool hp = a.states[k] == p;
    const bool hq = b.states[k] == q;
    c.n_p += hp;
    c.n_q += hq;
    c.n_pq += hp && hq;
  }
  return c;
}

namespace {

double log_choose(double n, double k) {
  using boost::math::lgamma;
  return lgamma(n + 1.0) - lgamma(k + 1.0) - lgamma(n - k + 1.0);
}

struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

}  // namespace

double hypergeom_pvalue(const CooccurrenceCounts& c) {
  c.validate();
  const auto n = static_cast<double>(c.n);
  const auto np = static_cast<double>(c.n_p);
  const auto nq = static_cast<double>(c.n_q);
  const std::size_t lower = c.n_p + c.n_q > c.n ? c.n_p + c.n_q - c.n : 0;
  const std::size_t upper = std::min(c.n_p, c.n_q);
  if (c.n_pq <= lower) return 1.0;

  const double log_total = log_choose(n, nq);
  auto log_h = [&](double x) { return log_choose(np, x) + log_choose(n - np, nq - x) - log_total; };
  // H(x+1) / H(x)
  auto ratio = [&](double x) { return (np - x) * (nq - x) / ((x + 1.0) * (n - np - nq + x + 1.0)); };

  const double mean = np * nq / n;
  KahanSum tail;
  if (static_cast<double>(c.n_pq) > mean) {
    double h = std::exp(log_h(static_cast<double>(c.n_pq)));
    for (std::size_t x = c.n_pq; x <= upper; ++x) {
      tail.add(h);
      if (x < upper) h *= ratio(static_cast<double>(x));
      if (h == 0.0) break;
    }
    return std::clamp(tail.sum, 0.0, 1.0);
  }
  // Lower tail summed downward from its largest term.
  double h = std::exp(log_h(static_cast<double>(c.n_pq - 1)));
  for (std::size_t x = c.n_pq - 1;; --x) {
    tail.add(h);
    if (x == lower || h == 0.0) break;
    h /= ratio(static_cast<double>(x - 1));
  }
  return std::clamp(1.0 - tail.sum, 0.0, 1.0);
}

std::string link_kind_name(LinkKind k) { return k == LinkKind::BuyBuy ? "buy-buy" : "sell-sell"; }

LinkKind link_kind_from_name(const std::string& name) {
  if (name == "buy-buy") return LinkKind::BuyBuy;
  if (name == "sell-sell") return LinkKind::SellSell;
  throw DataError("unknown link kind '" + name + "'");
}

namespace {

struct Bits {
  std::vector<std::uint64_t> words;
  std::size_t count = 0;
};

Bits bits_of(const StateSeries& s, State target) {
  Bits b;
  b.words.assign((s.states.size() + 63) / 64, 0);
  for (std::size_t k = 0; k < s.states.size(); ++k) {
    if (s.states[k] == target) {
      b.words[k / 64] |= std::uint64_t{1} << (k % 64);
      ++b.count;
    }
  }
  return b;
}

std::size_t overlap(const Bits& x, const Bits& y) {
  std::size_t n = 0;
  for (std::size_t w = 0; w < x.words.size(); ++w) n += static_cast<std::size_t>(std::popcount(x.words[w] & y.words[w]));
  return n;
}

}  // namespace

ValidatedNetwork make_network(std::vector<SvnEdge> edges, double alpha, std::size_t num_tests) {
  ValidatedNetwork net;
  net.alpha = alpha;
  net.num_tests = num_tests;
  std::set<std::string> nodes;
  for (auto& e : edges) {
    if (e.a == e.b) throw DataError("self-loop on trader " + e.a);
    if (e.b < e.a) std::swap(e.a, e.b);
    nodes.insert(e.a);
    nodes.insert(e.b);
  }
  std::sort(edges.begin(), edges.end(), [](const SvnEdge& x, const SvnEdge& y) {
    return std::tie(x.a, x.b, x.kind) < std::tie(y.a, y.b, y.kind);
  });
  net.edges = std::move(edges);
  net.nodes.assign(nodes.begin(), nodes.end());
  return net;
}

ValidatedNetwork build_svn(std::span<const StateSeries> series, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("build_svn: alpha must lie in (0, 1)");
  ValidatedNetwork net;
  net.alpha = alpha;
  if (series.size() < 2) return net;

  std::vector<const StateSeries*> sorted;
  sorted.reserve(series.size());
  for (const auto& s : series) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const StateSeries* x, const StateSeries* y) { return x->trader_id < y->trader_id; });
  const std::size_t len = sorted.front()->states.size();
  for (const auto* s : sorted) {
    if (s->states.size() != len) throw DomainError("build_svn: series " + s->trader_id + " is misaligned");
  }

  const std::size_t N = sorted.size();
  net.num_tests = N * (N - 1);
  const double threshold = net.threshold();

  std::vector<Bits> buys, sells;
  buys.reserve(N);
  sells.reserve(N);
  for (const auto* s : sorted) {
    buys.push_back(bits_of(*s, State::Buying));
    sells.push_back(bits_of(*s, State::Selling));
  }

  // Smallest overlap that is significant for given marginals; the p-value
  // decreases in the overlap, so a binary search over the support suffices.
  std::unordered_map<std::uint64_t, std::size_t> critical;
  auto critical_overlap = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
    auto it = critical.find(key);
    if (it != critical.end()) return it->second;
    std::size_t lo = a * b / len, hi = a + 1;  // hi = a + 1 means never significant
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (hypergeom_pvalue({len, a, b, mid}) < threshold) {
        hi = mid;
      } else {
        lo = mid + 1;
      }
    }
    critical.emplace(key, lo);
    return lo;
  };

  std::vector<SvnEdge> edges;
  auto test = [&](const Bits& x, const Bits& y, std::size_t i, std::size_t j, LinkKind kind) {
    const std::size_t k = overlap(x, y);
    if (k == 0) return;
    // k <= mean - 1 implies p >= 1/2 (hypergeometric median lies within 1 of the mean).
    if (k * len + len <= x.count * y.count) return;
    if (k < critical_overlap(x.count, y.count)) return;
    const double p = hypergeom_pvalue({len, x.count, y.count, k});
    if (p < threshold) edges.push_back({sorted[i]->trader_id, sorted[j]->trader_id, kind, p});
  };
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = i + 1; j < N; ++j) {
      test(buys[i], buys[j], i, j, LinkKind::BuyBuy);
      test(sells[i], sells[j], i, j, LinkKind::SellSell);
    }
  }
  auto out = make_network(std::move(edges), alpha, net.num_tests);
  return out;
}

void write_edges(std::ostream& out, const ValidatedNetwork& net) {
  out << "trader_a,trader_b,kind,p_value\n";
  for (const auto& e : net.edges) {
    out << e.a << ',' << e.b << ',' << link_kind_name(e.kind) << ',' << format_double(e.p_value) << '\n';
  }
}

ValidatedNetwork read_edges(std::istream& in) {
  std::vector<SvnEdge> edges;
  for (const auto& rec : csv::read(in, {"trader_a", "trader_b", "kind", "p_value"})) {
    SvnEdge e;
    e.a = rec.fields[0];
    e.b = rec.fields[1];
    try {
      e.kind = link_kind_from_name(rec.fields[2]);
    } catch (const DataError& err) {
      throw DataError("line " + std::to_string(rec.line) + ": " + err.what());
    }
    e.p_value = csv::to_double(rec.fields[3], rec.line);
    edges.push_back(std::move(e));
  }
  return make_network(std::move(edges));
}

}  // namespace tradeclust
