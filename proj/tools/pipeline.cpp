#include "pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/version.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "tradeclust/backtest.hpp"
#include "tradeclust/cluster_flow.hpp"
#include "tradeclust/community.hpp"
#include "tradeclust/csv.hpp"
#include "tradeclust/ewens.hpp"
#include "tradeclust/expert_games.hpp"
#include "tradeclust/svn.hpp"
#include "tradeclust/sync_states.hpp"
#include "tradeclust/trade_model.hpp"

namespace tradeclust::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";

Seconds parse_duration(const std::string& text) {
  std::size_t pos = 0;
  while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
  if (pos == 0 || pos > 12) throw DomainError("bad duration '" + text + "'");
  const long long count = std::stoll(text.substr(0, pos));
  const std::string unit = text.substr(pos);
  static const std::map<std::string, long long> units{
      {"s", 1},       {"m", 60},       {"h", 3600},
      {"d", 86400},   {"w", 7 * 86400}, {"mo", std::chrono::months{1} / Seconds{1}},
      {"y", std::chrono::years{1} / Seconds{1}}};
  auto it = units.find(unit);
  if (it == units.end()) throw DomainError("bad duration unit in '" + text + "' (use s, m, h, d, w, mo or y)");
  return Seconds{count * it->second};
}

namespace {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v);
    } else {
      out += std::to_string(v);
    }
  }
  return out;
}

std::string flag(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string canonical_config(const RunConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv{
      {"out_dir", c.out_dir},
      {"seed", std::to_string(c.seed)},
      {"input_trades", c.input_trades},
      {"input_returns", c.input_returns},
      {"symbol", c.symbol},
      {"start", c.start},
      {"end", c.end},
      {"business_from_hour", std::to_string(c.business_from_hour)},
      {"business_to_hour", std::to_string(c.business_to_hour)},
      {"business_days_only", flag(c.business_days_only)},
      {"traders", std::to_string(c.traders)},
      {"groups", std::to_string(c.groups)},
      {"group_size", std::to_string(c.group_size)},
      {"p_sync", format_double(c.p_sync)},
      {"group_activity", format_double(c.group_activity)},
      {"background_rate", format_double(c.background_rate)},
      {"signal_slice", c.signal_slice},
      {"min_hold", c.min_hold},
      {"max_hold", c.max_hold},
      {"return_sigma", format_double(c.return_sigma)},
      {"return_skill", format_double(c.return_skill)},
      {"delta_minutes", join(c.delta_minutes)},
      {"state_threshold", format_double(c.state_threshold)},
      {"window", c.window},
      {"step", c.step},
      {"cutoff", std::to_string(c.cutoff)},
      {"alpha", format_double(c.alpha)},
      {"infomap_trials", std::to_string(c.infomap_trials)},
      {"ewens_conditional", flag(c.ewens_conditional)},
      {"chi2_alpha", format_double(c.chi2_alpha)},
      {"chi2_min_expected", format_double(c.chi2_min_expected)},
      {"min_jaccard", format_double(c.min_jaccard)},
      {"universe", std::to_string(c.universe)},
      {"epoch_step", c.epoch_step},
      {"rho", join(c.rho)},
      {"eta", format_double(c.eta)},
      {"loss", c.loss},
      {"hierarchical_threshold", format_double(c.hierarchical_threshold)},
      {"ecaa_init", c.ecaa_init},
      {"pen_normalized", flag(c.pen_normalized)},
  };
  std::sort(kv.begin(), kv.end());
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

namespace {

struct Calendar {
  Interval horizon;
  BusinessHours hours;
  bool business_days_only = true;

  EpochGrid grid(Seconds step) const { return EpochGrid{horizon.begin, horizon.end, step, hours, business_days_only}; }
};

Calendar calendar_of(const RunConfig& c) {
  Calendar cal;
  cal.horizon = {parse_timestamp(c.start), parse_timestamp(c.end)};
  cal.hours.from = std::chrono::hours{c.business_from_hour};
  cal.hours.to = std::chrono::hours{c.business_to_hour};
  cal.business_days_only = c.business_days_only;
  return cal;
}

}  // namespace

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> errors;
  auto check = [&](bool ok, const std::string& message) {
    if (!ok) errors.push_back(message);
  };
  auto duration = [&](const std::string& key, const std::string& value) -> Seconds {
    try {
      const auto d = parse_duration(value);
      check(d > Seconds::zero(), key + ": must be positive");
      return d;
    } catch (const Error& e) {
      errors.push_back(key + ": " + e.what());
      return Seconds::zero();
    }
  };

  check(!out_dir.empty(), "out_dir: must not be empty");
  std::optional<Calendar> cal;
  try {
    cal = calendar_of(*this);
    check(cal->horizon.begin < cal->horizon.end, "start/end: start must precede end");
  } catch (const Error& e) {
    errors.push_back(std::string("start/end: ") + e.what());
  }
  check(business_from_hour >= 0 && business_from_hour < business_to_hour && business_to_hour <= 24,
        "business_from_hour/business_to_hour: need 0 <= from < to <= 24");
  check(input_trades.empty() == input_returns.empty(),
        "input_trades/input_returns: provide both files or neither");

  const auto slice = duration("signal_slice", signal_slice);
  const auto hold_min = duration("min_hold", min_hold);
  const auto hold_max = duration("max_hold", max_hold);
  if (input_trades.empty()) {
    GeneratorConfig g;
    g.num_traders = traders;
    g.num_groups = groups;
    g.group_size = group_size;
    g.p_sync = p_sync;
    g.group_activity = group_activity;
    g.background_rate = background_rate;
    if (cal) {
      g.start = cal->horizon.begin;
      g.end = cal->horizon.end;
    }
    g.slice = slice > Seconds::zero() ? slice : Seconds{1};
    g.min_hold = hold_min > Seconds::zero() ? hold_min : Seconds{1};
    g.max_hold = hold_max > Seconds::zero() ? hold_max : g.min_hold;
    try {
      g.validate();
    } catch (const Error& e) {
      errors.push_back(e.what());
    }
    check(return_sigma >= 0.0, "return_sigma: must be nonnegative");
  }

  check(!delta_minutes.empty(), "delta_minutes: need at least one slice width");
  std::set<int> seen;
  const auto win = duration("window", window);
  const auto stp = duration("step", step);
  const auto epoch = duration("epoch_step", epoch_step);
  for (int d : delta_minutes) {
    check(d > 0, "delta_minutes: widths must be positive");
    check(seen.insert(d).second, "delta_minutes: duplicate width " + std::to_string(d));
    if (d > 0 && stp > Seconds::zero()) {
      check(stp % std::chrono::minutes{d} == Seconds::zero(),
            "step: must be a multiple of every delta_minutes entry (" + std::to_string(d) + ")");
    }
  }
  check(state_threshold >= 0.0 && state_threshold < 1.0, "state_threshold: must lie in [0, 1)");
  check(win > stp, "window/step: need window > step");
  if (cal && win > Seconds::zero()) check(cal->horizon.length() >= win, "window: longer than the start/end horizon");
  if (epoch > Seconds::zero() && win > Seconds::zero()) check(win >= 3 * epoch, "epoch_step: window must span at least 3 epochs");
  check(cutoff >= 1, "cutoff: must be at least 1");
  check(alpha > 0.0 && alpha < 1.0, "alpha: must lie in (0, 1)");
  check(infomap_trials >= 1, "infomap_trials: must be at least 1");
  check(chi2_alpha > 0.0 && chi2_alpha < 1.0, "chi2_alpha: must lie in (0, 1)");
  check(chi2_min_expected > 0.0, "chi2_min_expected: must be positive");
  check(min_jaccard > 0.0 && min_jaccard <= 1.0, "min_jaccard: must lie in (0, 1]");
  check(universe >= 2, "universe: need at least 2 traders");
  check(!rho.empty(), "rho: need at least one scaling factor");
  for (double r : rho) check(r > 0.0, "rho: scaling factors must be positive");
  check(eta > 0.0, "eta: must be positive");
  try {
    loss_kind_from_name(loss);
  } catch (const Error& e) {
    errors.push_back(std::string("loss: ") + e.what());
  }
  check(hierarchical_threshold >= 0.0 && hierarchical_threshold <= 100.0,
        "hierarchical_threshold: percent in [0, 100]");
  check(ecaa_init == "uniform" || ecaa_init == "cardinality", "ecaa_init: uniform or cardinality");
  return errors;
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::Simulate, Stage::States,   Stage::Svn,      Stage::Cluster,
                                         Stage::EwensFit, Stage::Track,    Stage::Backtest, Stage::Report};
  return stages;
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Simulate: return "simulate";
    case Stage::States: return "states";
    case Stage::Svn: return "svn";
    case Stage::Cluster: return "cluster";
    case Stage::EwensFit: return "ewens-fit";
    case Stage::Track: return "track";
    case Stage::Backtest: return "backtest";
    case Stage::Report: return "report";
  }
  return "unknown";
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(splitmix(base) ^ a) ^ b);
}

std::ifstream open_in(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInput(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  return in;
}

/// Writes via a temporary so readers never see a half-written artifact.
template <typename Fn>
void write_file(const fs::path& path, Fn&& fn) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    fn(out);
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Runs fn(0..n-1) on a small thread pool; the first failure (by index) is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), n));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string window_file(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "w%03zu.csv", k);
  return buf;
}

class Pipeline {
 public:
  explicit Pipeline(const RunConfig& c)
      : c_(c), out_(c.out_dir), cal_(calendar_of(c)), windows_(sliding_windows(cal_.horizon, parse_duration(c.window), parse_duration(c.step))) {}

  void run(Stage s) {
    switch (s) {
      case Stage::Simulate: simulate(); break;
      case Stage::States: states(); break;
      case Stage::Svn: svn(); break;
      case Stage::Cluster: cluster(); break;
      case Stage::EwensFit: ewens_fit(); break;
      case Stage::Track: track(); break;
      case Stage::Backtest: backtest(); break;
      case Stage::Report: report(); break;
    }
  }

 private:
  fs::path trades_path() const { return out_ / "trades.csv"; }
  fs::path returns_path() const { return out_ / "returns.csv"; }
  fs::path states_path(int d) const { return out_ / ("states_dt" + std::to_string(d) + ".csv"); }
  fs::path svn_dir(int d) const { return out_ / ("svn_dt" + std::to_string(d)); }
  fs::path clusters_dir(int d) const { return out_ / ("clusters_dt" + std::to_string(d)); }
  fs::path hier_dir() const { return out_ / "clusters_hier"; }

  Seconds delta(int minutes) const { return std::chrono::minutes{minutes}; }

  TradeTable load_trades() const {
    auto in = open_in(trades_path());
    return parse_trades(in, c_.symbol);
  }

  std::pair<std::vector<Timestamp>, std::vector<double>> load_returns() const {
    auto in = open_in(returns_path());
    return read_returns(in);
  }

  std::vector<std::string> load_universe() const {
    auto in = open_in(out_ / "universe.csv");
    std::vector<std::string> ids;
    for (const auto& rec : csv::read(in, {"trader_id", "trades"})) ids.push_back(rec.fields[0]);
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  Partition load_partition(const fs::path& path) const {
    auto in = open_in(path);
    return read_partition(in);
  }

  void simulate() {
    if (!c_.input_trades.empty()) {
      auto tin = open_in(c_.input_trades);
      auto table = parse_trades(tin, c_.symbol);
      write_file(trades_path(), [&](std::ostream& o) { write_trades(o, table); });
      auto rin = open_in(c_.input_returns);
      const auto [epochs, rets] = read_returns(rin);
      write_file(returns_path(), [&](std::ostream& o) { write_returns(o, epochs, rets); });
      return;
    }
    GeneratorConfig g;
    g.num_traders = c_.traders;
    g.num_groups = c_.groups;
    g.group_size = c_.group_size;
    g.p_sync = c_.p_sync;
    g.group_activity = c_.group_activity;
    g.background_rate = c_.background_rate;
    g.start = cal_.horizon.begin;
    g.end = cal_.horizon.end;
    g.slice = parse_duration(c_.signal_slice);
    g.business_hours = cal_.hours;
    g.min_hold = parse_duration(c_.min_hold);
    g.max_hold = parse_duration(c_.max_hold);
    g.symbol = c_.symbol;
    const auto market = generate_synthetic_market(g, derive_seed(c_.seed, 1));
    write_file(trades_path(), [&](std::ostream& o) { write_trades(o, market.trades); });
    write_file(out_ / "groups.csv", [&](std::ostream& o) {
      o << "trader_id,group\n";
      for (std::size_t i = 0; i < market.trader_ids.size(); ++i) o << market.trader_ids[i] << ',' << market.group_of[i] << '\n';
    });
    const auto epochs = cal_.grid(parse_duration(c_.epoch_step)).points();
    const auto rets = generate_returns(market, epochs, c_.return_sigma, c_.return_skill, derive_seed(c_.seed, 2));
    write_file(returns_path(), [&](std::ostream& o) { write_returns(o, epochs, rets); });
  }

  void states() {
    const auto table = load_trades();
    for (int d : c_.delta_minutes) {
      const auto slices = slice_starts(cal_.horizon, delta(d), cal_.grid(delta(d)));
      const auto series = all_state_series(table, delta(d), c_.state_threshold, slices);
      write_file(states_path(d), [&](std::ostream& o) { write_states(o, slices, series); });
    }

    // Backtest universe: the most active traders over the horizon.
    std::map<std::string, std::size_t> counts;
    for (const auto& t : table.trades) {
      if (cal_.horizon.contains(t.open_time)) ++counts[t.trader_id];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > c_.universe) ranked.resize(c_.universe);
    std::sort(ranked.begin(), ranked.end());
    write_file(out_ / "universe.csv", [&](std::ostream& o) {
      o << "trader_id,trades\n";
      for (const auto& [id, n] : ranked) o << id << ',' << n << '\n';
    });

    std::set<std::string> members;
    for (const auto& [id, n] : ranked) members.insert(id);
    TradeTable sub;
    for (const auto& t : table.trades) {
      if (members.count(t.trader_id)) sub.trades.push_back(t);
    }
    const auto epochs = load_returns().first;
    const auto positions = resample_positions(sub, epochs);
    write_file(out_ / "positions.csv", [&](std::ostream& o) { write_positions(o, epochs, positions); });
  }

  void svn() {
    for (int d : c_.delta_minutes) {
      if (!fs::exists(states_path(d))) throw MissingInput(states_path(d));
    }
    const auto table = load_trades();
    for (int d : c_.delta_minutes) {
      const auto slices = slice_starts(cal_.horizon, delta(d), cal_.grid(delta(d)));
      auto in = open_in(states_path(d));
      const auto all = read_states(in, slices, delta(d), c_.state_threshold);
      std::map<std::string, const StateSeries*> by_id;
      for (const auto& s : all) by_id.emplace(s.trader_id, &s);

      std::vector<json> meta(windows_.size());
      parallel_for(windows_.size(), [&](std::size_t k) {
        const auto& w = windows_[k].in_sample;
        const auto lo = static_cast<std::size_t>(std::lower_bound(slices.begin(), slices.end(), w.begin) - slices.begin());
        std::size_t hi = lo;
        while (hi < slices.size() && slices[hi] + delta(d) <= w.end) ++hi;
        const auto active = filter_active(table, w, c_.cutoff);
        std::vector<StateSeries> series;
        series.reserve(active.size());
        for (const auto& id : active) {
          StateSeries s{id, delta(d), c_.state_threshold, std::vector<State>(hi - lo, State::Inactive)};
          auto it = by_id.find(id);
          if (it != by_id.end()) {
            std::copy(it->second->states.begin() + static_cast<std::ptrdiff_t>(lo),
                      it->second->states.begin() + static_cast<std::ptrdiff_t>(hi), s.states.begin());
          }
          series.push_back(std::move(s));
        }
        const auto net = build_svn(series, c_.alpha);
        write_file(svn_dir(d) / window_file(k), [&](std::ostream& o) { write_edges(o, net); });
        meta[k] = json{{"window", k},
                       {"begin", format_timestamp(w.begin)},
                       {"end", format_timestamp(w.end)},
                       {"slices", hi - lo},
                       {"active_traders", active.size()},
                       {"num_tests", net.num_tests},
                       {"links", net.edges.size()},
                       {"nodes", net.nodes.size()}};
      });
      json doc{{"alpha", c_.alpha}, {"delta_minutes", d}, {"state_threshold", c_.state_threshold},
               {"cutoff", c_.cutoff}, {"windows", meta}};
      write_file(svn_dir(d) / "meta.json", [&](std::ostream& o) { o << doc.dump(1) << '\n'; });
    }
  }

  json load_meta(int d) const {
    auto in = open_in(svn_dir(d) / "meta.json");
    return json::parse(in);
  }

  void cluster() {
    for (int d : c_.delta_minutes) {
      const auto meta = load_meta(d);
      const auto& wins = meta.at("windows");
      if (wins.size() != windows_.size()) throw DataError("svn meta window count does not match the config");
      std::vector<std::string> rows(windows_.size());
      parallel_for(windows_.size(), [&](std::size_t k) {
        auto in = open_in(svn_dir(d) / window_file(k));
        auto net = read_edges(in);
        net.alpha = meta.at("alpha").get<double>();
        net.num_tests = wins[k].at("num_tests").get<std::size_t>();
        const auto active = wins[k].at("active_traders").get<std::size_t>();
        Partition p;
        double codelength = 0.0;
        if (!net.nodes.empty()) {
          InfomapOptions opt;
          opt.seed = derive_seed(c_.seed, 3, static_cast<std::uint64_t>(d) * 100000 + k);
          opt.trials = c_.infomap_trials;
          p = infomap_partition(net, opt);
          codelength = map_equation_codelength(net, p);
        }
        write_file(clusters_dir(d) / window_file(k), [&](std::ostream& o) { write_partition(o, p); });
        const auto s = network_stats(net, p, active);
        std::ostringstream row;
        row << k << ',' << format_timestamp(windows_[k].in_sample.begin) << ',' << s.clusters << ',' << s.links << ','
            << s.traders_in_clusters << ',' << s.active_traders << ',' << format_double(s.mean_cluster_size) << ','
            << (std::isnan(s.modularity) ? std::string("NA") : format_double(s.modularity)) << ','
            << format_double(s.in_cluster_ratio) << ',' << format_double(s.clusters_per_trader) << ','
            << format_double(codelength) << '\n';
        rows[k] = row.str();
      });
      write_file(out_ / ("cluster_stats_dt" + std::to_string(d) + ".csv"), [&](std::ostream& o) {
        o << "window,window_start,clusters,links,traders_in_clusters,active_traders,mean_cluster_size,modularity,"
             "in_cluster_ratio,clusters_per_trader,codelength\n";
        for (const auto& r : rows) o << r;
      });
    }

    // Correlation clusters of the backtest universe.
    const auto epochs = load_returns().first;
    const auto ids = load_universe();
    auto pin = open_in(out_ / "positions.csv");
    const auto positions = read_positions(pin, epochs, ids);
    const double threshold = c_.hierarchical_threshold / 100.0;
    parallel_for(windows_.size(), [&](std::size_t k) {
      const auto& w = windows_[k].in_sample;
      const auto lo = std::lower_bound(epochs.begin(), epochs.end(), w.begin) - epochs.begin();
      const auto hi = std::lower_bound(epochs.begin(), epochs.end(), w.end) - epochs.begin();
      std::vector<PositionSeries> slice;
      for (const auto& p : positions) {
        PositionSeries s{p.trader_id, {p.values.begin() + lo, p.values.begin() + hi}};
        if (std::any_of(s.values.begin(), s.values.end(), [](double v) { return v != 0.0; })) {
          slice.push_back(std::move(s));
        }
      }
      Partition part;
      if (slice.size() >= 2) part = hierarchical_partition(correlation_distance_matrix(slice), threshold);
      write_file(hier_dir() / window_file(k), [&](std::ostream& o) { write_partition(o, part); });
    });
  }

  std::vector<Partition> load_partitions(const fs::path& dir) const {
    std::vector<Partition> out(windows_.size());
    for (std::size_t k = 0; k < windows_.size(); ++k) out[k] = load_partition(dir / window_file(k));
    return out;
  }

  void ewens_fit() {
    for (int d : c_.delta_minutes) {
      const auto parts = load_partitions(clusters_dir(d));
      std::vector<WindowFit> fits(parts.size());
      parallel_for(parts.size(), [&](std::size_t k) {
        WindowFit f;
        f.window_start = windows_[k].in_sample.begin;
        f.n = parts[k].assignment.size();
        f.clusters = static_cast<std::size_t>(parts[k].num_clusters);
        if (f.n >= 2) {
          try {
            const auto c = partition_vector(parts[k]);
            const bool conditional = c_.ewens_conditional && c.count(1) == 0;
            const double theta = estimate_theta(static_cast<double>(f.clusters), f.n, conditional);
            f.theta_hat = theta;
            f.test = chi_square_gof(c, theta, conditional, c_.chi2_alpha, c_.chi2_min_expected);
          } catch (const DomainError&) {
            // Window left unfitted; the report marks it NA.
          }
        }
        fits[k] = std::move(f);
      });
      write_file(out_ / ("ewens_fit_dt" + std::to_string(d) + ".csv"), [&](std::ostream& o) { write_fit_report(o, fits); });
    }
  }

  void track() {
    auto emit = [&](const fs::path& dir, const std::string& tag) {
      const auto tr = track_clusters(load_partitions(dir), c_.min_jaccard);
      write_file(out_ / ("flows_" + tag + ".json"), [&](std::ostream& o) { export_alluvial(o, tr); });
      write_file(out_ / ("flow_events_" + tag + ".csv"), [&](std::ostream& o) { write_flow_events(o, tr); });
    };
    for (int d : c_.delta_minutes) emit(clusters_dir(d), "dt" + std::to_string(d));
    emit(hier_dir(), "hier");
  }

  /// Partition of window k restricted to the universe governs its evaluation step.
  ClusterSchedule schedule_from(const fs::path& dir, const std::vector<Timestamp>& epochs,
                                const std::set<std::string>& universe) const {
    ClusterSchedule s;
    for (std::size_t k = 0; k < windows_.size(); ++k) {
      if (!windows_[k].evaluation) continue;
      const auto first = static_cast<std::size_t>(
          std::lower_bound(epochs.begin(), epochs.end(), windows_[k].evaluation->begin) - epochs.begin());
      const auto p = load_partition(dir / window_file(k));
      std::vector<std::string> ids;
      std::vector<int> labels;
      for (const auto& [id, c] : p.assignment) {
        if (!universe.count(id)) continue;
        ids.push_back(id);
        labels.push_back(c);
      }
      if (!s.first_epoch.empty() && s.first_epoch.back() == first) {
        s.first_epoch.pop_back();
        s.partitions.pop_back();
      }
      s.first_epoch.push_back(first);
      s.partitions.push_back(Partition::from_labels(ids, labels));
    }
    return s;
  }

  struct RunSpec {
    Strategy strategy;
    std::string type;
    std::string stem;
    const ClusterSchedule* schedule;
    double rho;
  };

  void backtest() {
    const auto [all_epochs, all_returns] = load_returns();
    const auto ids = load_universe();
    auto pin = open_in(out_ / "positions.csv");
    const auto all_positions = read_positions(pin, all_epochs, ids);

    // Out-of-sample range: from the first to the end of the last evaluation step.
    Timestamp begin = cal_.horizon.end, end = cal_.horizon.begin;
    for (const auto& w : windows_) {
      if (!w.evaluation) continue;
      begin = std::min(begin, w.evaluation->begin);
      end = std::max(end, w.evaluation->end);
    }
    if (!(begin < end)) throw DataError("no window has an evaluation step inside the horizon");
    const auto lo = std::lower_bound(all_epochs.begin(), all_epochs.end(), begin) - all_epochs.begin();
    const auto hi = std::lower_bound(all_epochs.begin(), all_epochs.end(), end) - all_epochs.begin();
    const std::vector<Timestamp> epochs(all_epochs.begin() + lo, all_epochs.begin() + hi);
    const std::vector<double> rets(all_returns.begin() + lo, all_returns.begin() + hi);
    std::vector<PositionSeries> positions;
    for (const auto& p : all_positions) {
      positions.push_back({p.trader_id, {p.values.begin() + lo, p.values.begin() + hi}});
    }
    const std::set<std::string> universe(ids.begin(), ids.end());
    const auto svn_schedule = schedule_from(clusters_dir(c_.delta_minutes.front()), epochs, universe);
    const auto hier_schedule = schedule_from(hier_dir(), epochs, universe);
    const ClusterSchedule none;

    const std::string hier_type = "Hierarchical " + format_double(c_.hierarchical_threshold);
    std::vector<RunSpec> runs;
    for (double rho : c_.rho) {
      const std::string r = "_rho" + format_double(rho);
      runs.push_back({Strategy::EqualWeight, "Benchmark", "ew" + r, &none, rho});
      runs.push_back({Strategy::Aa, "Sleeping Experts", "aa" + r, &none, rho});
      for (auto s : {Strategy::CaaMean, Strategy::CaaPen, Strategy::Ecaa}) {
        std::string rule = s == Strategy::CaaMean ? "MEAN/" : s == Strategy::CaaPen ? "PEN/" : "";
        std::string stem = s == Strategy::CaaMean ? "caa-mean" : s == Strategy::CaaPen ? "caa-pen" : "ecaa";
        runs.push_back({s, rule + "SVN", stem + "_svn" + r, &svn_schedule, rho});
        runs.push_back({s, rule + hier_type, stem + "_hier" + r, &hier_schedule, rho});
      }
    }

    BacktestParams base;
    base.eta = c_.eta;
    base.loss = loss_kind_from_name(c_.loss);
    base.pen_normalized = c_.pen_normalized;
    base.min_jaccard = c_.min_jaccard;
    base.ecaa_init = c_.ecaa_init == "cardinality" ? EcaaInit::Cardinality : EcaaInit::Uniform;
    const fs::path dir = out_ / "backtest";
    std::vector<bool> bankrupt(runs.size(), false);
    parallel_for(runs.size(), [&](std::size_t i) {
      auto params = base;
      params.rho = runs[i].rho;
      const auto result = run_backtest(positions, rets, epochs, runs[i].strategy, params, *runs[i].schedule);
      bankrupt[i] = result.curve.bankrupt;
      write_file(dir / (runs[i].stem + "_log.csv"), [&](std::ostream& o) { write_epoch_log(o, result.log); });
      write_file(dir / (runs[i].stem + "_equity.csv"), [&](std::ostream& o) { write_equity(o, result.curve); });
    });
    write_file(dir / "runs.csv", [&](std::ostream& o) {
      o << "strategy,type,scaling_factor,equity_file,bankrupt\n";
      for (std::size_t i = 0; i < runs.size(); ++i) {
        o << strategy_name(runs[i].strategy) << ',' << runs[i].type << ',' << format_double(runs[i].rho) << ','
          << runs[i].stem << "_equity.csv," << (bankrupt[i] ? "true" : "false") << '\n';
      }
    });
  }

  void report() {
    const auto epochs = load_returns().first;
    const double years = std::chrono::duration<double>(cal_.horizon.length()).count() /
                         std::chrono::duration<double>(std::chrono::years{1}).count();
    const double per_year = static_cast<double>(epochs.size()) / years;
    auto in = open_in(out_ / "backtest" / "runs.csv");
    std::vector<ReportRow> rows;
    for (const auto& rec : csv::read(in, {"strategy", "type", "scaling_factor", "equity_file", "bankrupt"})) {
      auto ein = open_in(out_ / "backtest" / rec.fields[3]);
      std::vector<double> equity{1.0};
      for (const auto& e : csv::read(ein, {"epoch", "equity", "drawdown"})) equity.push_back(csv::to_double(e.fields[1], e.line));
      rows.push_back({rec.fields[0], rec.fields[1], csv::to_double(rec.fields[2], rec.line), risk_report(equity, per_year)});
    }
    write_file(out_ / "report.csv", [&](std::ostream& o) { write_report(o, rows); });
  }

  const RunConfig& c_;
  fs::path out_;
  Calendar cal_;
  std::vector<SlidingWindow> windows_;
};

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Method choices behind the artifacts, for auditing a run without its config.
void write_methods(const RunConfig& c) {
  json doc{
      {"states", {{"volume_attribution", "open_time"}, {"threshold", c.state_threshold}, {"delta_minutes", c.delta_minutes}}},
      {"svn",
       {{"tested_link_kinds", {"buy-buy", "sell-sell"}},
        {"bonferroni_tests", "2 * C(N, 2) over active traders"},
        {"alpha", c.alpha},
        {"cutoff", c.cutoff}}},
      {"infomap", {{"levels", 2}, {"trials", c.infomap_trials}, {"link_weight", 1}}},
      {"hierarchical",
       {{"linkage", "average"},
        {"distance", "1 - |Pearson correlation| of net positions"},
        {"threshold", c.hierarchical_threshold / 100.0}}},
      {"ewens",
       {{"conditional", c.ewens_conditional},
        {"theta_target", "observed cluster count"},
        {"chi2_binning", "ascending sizes until expected >= min_expected; short tail joins last bin"},
        {"chi2_min_expected", c.chi2_min_expected},
        {"chi2_dof", "bins - 2"},
        {"chi2_alpha", c.chi2_alpha}}},
      {"tracking", {{"matching", "jaccard"}, {"min_jaccard", c.min_jaccard}}},
      {"backtest",
       {{"sharpe", "mean / sd of per-epoch returns * sqrt(epochs per year), zero risk-free rate"},
        {"decision", "net position / running max |net position|"},
        {"awake", "nonzero net position"},
        {"eta", c.eta},
        {"loss", c.loss},
        {"ecaa_init", c.ecaa_init},
        {"pen_normalized", c.pen_normalized},
        {"rho", c.rho}}}};
  write_file(fs::path(c.out_dir) / "methods.json", [&](std::ostream& o) { o << doc.dump(1) << '\n'; });
}

void write_manifest(const RunConfig& c) {
  const fs::path out(c.out_dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), out).generic_string();
    if (rel == "manifest.json") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json artifacts = json::array();
  for (const auto& f : files) {
    const auto data = read_all(out / f);
    artifacts.push_back({{"path", f}, {"bytes", data.size()}, {"sha256", sha256_hex(data)}});
  }
  json doc{{"tool", "tradeclust"},
           {"version", kVersion},
           {"boost", BOOST_LIB_VERSION},
           {"config_sha256", sha256_hex(canonical_config(c))},
           {"seed", c.seed},
           {"artifacts", artifacts}};
  write_file(out / "manifest.json", [&](std::ostream& o) { o << doc.dump(1) << '\n'; });
}

}  // namespace

void run_stages(const RunConfig& config, const std::vector<Stage>& stages) {
  Pipeline p(config);
  fs::create_directories(config.out_dir);
  for (auto s : stages) {
    std::cerr << "[tradeclust] " << stage_name(s) << '\n';
    p.run(s);
  }
  write_methods(config);
  write_manifest(config);
}

}  // namespace tradeclust::cli
