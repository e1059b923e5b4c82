#include "tradeclust/trade_model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <tuple>

#include "tradeclust/csv.hpp"

namespace tradeclust {

namespace chr = std::chrono;

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::string format_timestamp(Timestamp t) {
  const auto day = chr::floor<chr::days>(t);
  const chr::year_month_day ymd{day};
  const chr::hh_mm_ss hms{t - day};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

Timestamp parse_timestamp(const std::string& text) {
  auto bad = [&]() { return DataError("cannot parse timestamp '" + text + "'"); };
  if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':' || text[19] != 'Z') {
    throw bad();
  }
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
    if (ec != std::errc{} || ptr != text.data() + pos + len) throw bad();
    return v;
  };
  const int y = num(0, 4), mo = num(5, 2), d = num(8, 2);
  const int h = num(11, 2), mi = num(14, 2), s = num(17, 2);
  const chr::year_month_day ymd{chr::year{y}, chr::month(static_cast<unsigned>(mo)),
                                chr::day(static_cast<unsigned>(d))};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) throw bad();
  return chr::sys_days{ymd} + chr::hours{h} + chr::minutes{mi} + chr::seconds{s};
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void TradeTable::sort() {
  std::stable_sort(trades.begin(), trades.end(), [](const Trade& a, const Trade& b) {
    return std::tie(a.open_time, a.trader_id, a.close_time, a.symbol, a.side, a.lots) <
           std::tie(b.open_time, b.trader_id, b.close_time, b.symbol, b.side, b.lots);
  });
}

std::vector<std::string> TradeTable::traders() const {
  std::vector<std::string> ids;
  ids.reserve(trades.size());
  for (const auto& t : trades) ids.push_back(t.trader_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

TradeTable parse_trades(std::istream& in, std::optional<std::string> symbol) {
  static const std::vector<std::string> header{"trader_id", "open_time", "close_time",
                                               "symbol",    "side",      "lots"};
  TradeTable table;
  table.symbol_filter = symbol;
  for (auto& rec : csv::read(in, header)) {
    auto where = [&](const std::string& what) {
      return DataError("line " + std::to_string(rec.line) + ": " + what);
    };
    Trade t;
    t.trader_id = rec.fields[0];
    if (t.trader_id.empty()) throw where("empty trader_id");
    try {
      t.open_time = parse_timestamp(rec.fields[1]);
      t.close_time = parse_timestamp(rec.fields[2]);
    } catch (const DataError& e) {
      throw where(e.what());
    }
    t.symbol = rec.fields[3];
    if (rec.fields[4] == "long") {
      t.side = Side::Long;
    } else if (rec.fields[4] == "short") {
      t.side = Side::Short;
    } else {
      throw where("side must be 'long' or 'short', got '" + rec.fields[4] + "'");
    }
    t.lots = csv::to_double(rec.fields[5], rec.line);
    if (t.close_time <= t.open_time) throw where("close_time must be after open_time");
    if (!(t.lots > 0.0)) throw where("lots must be positive");
    if (symbol && t.symbol != *symbol) continue;
    table.trades.push_back(std::move(t));
  }
  table.sort();
  return table;
}

void write_trades(std::ostream& out, const TradeTable& table) {
  out << "trader_id,open_time,close_time,symbol,side,lots\n";
  for (const auto& t : table.trades) {
    out << t.trader_id << ',' << format_timestamp(t.open_time) << ','
        << format_timestamp(t.close_time) << ',' << t.symbol << ','
        << (t.side == Side::Long ? "long" : "short") << ',' << format_double(t.lots) << '\n';
  }
}

std::set<std::string> filter_active(const TradeTable& table, const Interval& window,
                                    std::size_t cutoff) {
  if (cutoff < 1) throw DomainError("filter_active: cutoff must be >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& t : table.trades) {
    if (window.contains(t.open_time)) ++counts[t.trader_id];
  }
  std::set<std::string> out;
  for (const auto& [id, n] : counts) {
    if (n >= cutoff) out.insert(id);
  }
  return out;
}

void EpochGrid::validate() const {
  if (step <= Seconds::zero()) throw DomainError("epoch grid: step must be positive");
  if (!(start < end)) throw DomainError("epoch grid: start must precede end");
  if (business_hours) {
    const auto& bh = *business_hours;
    if (bh.from < chr::minutes::zero() || bh.to > chr::minutes{24 * 60} || !(bh.from < bh.to)) {
      throw DomainError("epoch grid: business hours must satisfy 0 <= from < to <= 24h");
    }
  }
}

bool EpochGrid::keeps(Timestamp t) const {
  const auto day = chr::floor<chr::days>(t);
  if (business_days_only) {
    const chr::weekday wd{day};
    if (wd == chr::Saturday || wd == chr::Sunday) return false;
  }
  if (business_hours) {
    const auto tod = t - day;
    if (tod < business_hours->from || tod >= business_hours->to) return false;
  }
  return true;
}

bool EpochGrid::overlaps(Timestamp begin, Seconds length) const {
  const Timestamp end = begin + length;
  for (auto day = chr::floor<chr::days>(begin); day < end; day += chr::days{1}) {
    if (business_days_only) {
      const chr::weekday wd{day};
      if (wd == chr::Saturday || wd == chr::Sunday) continue;
    }
    Timestamp open = day, close = day + chr::days{1};
    if (business_hours) {
      open = day + business_hours->from;
      close = day + business_hours->to;
    }
    if (std::max(open, begin) < std::min(close, end)) return true;
  }
  return false;
}

std::vector<Timestamp> EpochGrid::points() const {
  validate();
  std::vector<Timestamp> out;
  for (Timestamp t = start; t < end; t += step) {
    if (keeps(t)) out.push_back(t);
  }
  return out;
}

std::vector<PositionSeries> resample_positions(const TradeTable& table,
                                               const std::vector<Timestamp>& points) {
  const auto ids = table.traders();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);

  std::vector<PositionSeries> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back({id, std::vector<double>(points.size(), 0.0)});

  // Direct accumulation keeps flat epochs exactly zero.
  for (const auto& t : table.trades) {
    const auto lo = std::lower_bound(points.begin(), points.end(), t.open_time) - points.begin();
    const auto hi = std::lower_bound(points.begin(), points.end(), t.close_time) - points.begin();
    auto& values = out[index.at(t.trader_id)].values;
    const double v = t.lots * side_sign(t.side);
    for (auto k = lo; k < hi; ++k) values[static_cast<std::size_t>(k)] += v;
  }
  return out;
}

std::vector<PositionSeries> resample_positions(const TradeTable& table, const EpochGrid& grid) {
  return resample_positions(table, grid.points());
}

void write_positions(std::ostream& out, const std::vector<Timestamp>& points,
                     const std::vector<PositionSeries>& series) {
  out << "epoch,trader_id,net_position\n";
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto ts = format_timestamp(points[k]);
    for (const auto& s : series) {
      if (s.values[k] != 0.0) out << ts << ',' << s.trader_id << ',' << format_double(s.values[k]) << '\n';
    }
  }
}

std::vector<PositionSeries> read_positions(std::istream& in, const std::vector<Timestamp>& points,
                                           const std::vector<std::string>& ids) {
  std::map<std::string, std::vector<double>> by_trader;
  for (const auto& id : ids) by_trader[id].assign(points.size(), 0.0);
  for (const auto& rec : csv::read(in, {"epoch", "trader_id", "net_position"})) {
    Timestamp t;
    try {
      t = parse_timestamp(rec.fields[0]);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(rec.line) + ": " + e.what());
    }
    auto it = std::lower_bound(points.begin(), points.end(), t);
    if (it == points.end() || *it != t) {
      throw DataError("line " + std::to_string(rec.line) + ": epoch not on the grid");
    }
    auto& values = by_trader[rec.fields[1]];
    if (values.empty()) values.assign(points.size(), 0.0);
    values[static_cast<std::size_t>(it - points.begin())] = csv::to_double(rec.fields[2], rec.line);
  }
  std::vector<PositionSeries> out;
  out.reserve(by_trader.size());
  for (auto& [id, values] : by_trader) out.push_back({id, std::move(values)});
  return out;
}

}  // namespace tradeclust
