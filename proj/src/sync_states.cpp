#include "tradeclust/sync_states.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>

#include "tradeclust/csv.hpp"

namespace tradeclust {

char state_code(State s) {
  switch (s) {
    case State::Buying: return 'B';
    case State::Selling: return 'S';
    case State::Neutral: return 'N';
    case State::Inactive: return 'I';
  }
  return '?';
}

State state_from_code(char c) {
  switch (c) {
    case 'B': return State::Buying;
    case 'S': return State::Selling;
    case 'N': return State::Neutral;
    case 'I': return State::Inactive;
    default: throw DataError(std::string("unknown state code '") + c + "'");
  }
}

std::optional<double> imbalance_ratio(double bought, double sold) {
  if (bought < 0.0 || sold < 0.0) throw DomainError("imbalance_ratio: volumes must be nonnegative");
  const double total = bought + sold;
  if (total == 0.0) return std::nullopt;
  return (bought - sold) / total;
}

namespace {

void check_threshold(double a) {
  if (!(a >= 0.0 && a < 1.0)) throw DomainError("state threshold must lie in [0, 1)");
}

}  // namespace

State classify(double bought, double sold, double threshold) {
  check_threshold(threshold);
  const auto r = imbalance_ratio(bought, sold);
  if (!r) return State::Inactive;
  if (*r > threshold) return State::Buying;
  if (*r < -threshold) return State::Selling;
  return State::Neutral;
}

namespace {

std::ptrdiff_t slice_of(const std::vector<Timestamp>& slices, Seconds delta, Timestamp t) {
  auto it = std::upper_bound(slices.begin(), slices.end(), t);
  if (it == slices.begin()) return -1;
  --it;
  if (t >= *it + delta) return -1;
  return it - slices.begin();
}

}  // namespace

std::vector<Timestamp> slice_starts(const Interval& window, Seconds delta,
                                    const EpochGrid& calendar) {
  if (delta <= Seconds::zero()) throw DomainError("slice width must be positive");
  std::vector<Timestamp> out;
  Timestamp t = calendar.start;
  if (window.begin > t) {
    const auto k = (window.begin - t + delta - Seconds{1}) / delta;
    t += k * delta;
  }
  for (; t + delta <= window.end; t += delta) {
    if (calendar.overlaps(t, delta)) out.push_back(t);
  }
  return out;
}

StateSeries state_series(const TradeTable& table, const std::string& trader, Seconds delta,
                         double threshold, const std::vector<Timestamp>& slices) {
  check_threshold(threshold);
  std::vector<double> bought(slices.size(), 0.0), sold(slices.size(), 0.0);
  for (const auto& t : table.trades) {
    if (t.trader_id != trader) continue;
    const auto k = slice_of(slices, delta, t.open_time);
    if (k < 0) continue;
    (t.side == Side::Long ? bought : sold)[static_cast<std::size_t>(k)] += t.lots;
  }
  StateSeries s{trader, delta, threshold, {}};
  s.states.reserve(slices.size());
  for (std::size_t k = 0; k < slices.size(); ++k) s.states.push_back(classify(bought[k], sold[k], threshold));
  return s;
}

std::vector<StateSeries> all_state_series(const TradeTable& table, Seconds delta,
                                          double threshold, const std::vector<Timestamp>& slices) {
  check_threshold(threshold);
  const auto ids = table.traders();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  std::vector<std::vector<double>> bought(ids.size()), sold(ids.size());
  for (const auto& t : table.trades) {
    const auto k = slice_of(slices, delta, t.open_time);
    if (k < 0) continue;
    const auto i = index.at(t.trader_id);
    auto& target = t.side == Side::Long ? bought[i] : sold[i];
    if (target.empty()) target.assign(slices.size(), 0.0);
    target[static_cast<std::size_t>(k)] += t.lots;
  }
  std::vector<StateSeries> out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    StateSeries s{ids[i], delta, threshold, std::vector<State>(slices.size(), State::Inactive)};
    for (std::size_t k = 0; k < slices.size(); ++k) {
      const double b = bought[i].empty() ? 0.0 : bought[i][k];
      const double v = sold[i].empty() ? 0.0 : sold[i][k];
      s.states[k] = classify(b, v, threshold);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_states(std::ostream& out, const std::vector<Timestamp>& slices,
                  const std::vector<StateSeries>& series) {
  out << "slice_start,trader_id,state\n";
  for (std::size_t k = 0; k < slices.size(); ++k) {
    std::string ts;
    for (const auto& s : series) {
      if (s.states[k] == State::Inactive) continue;
      if (ts.empty()) ts = format_timestamp(slices[k]);
      out << ts << ',' << s.trader_id << ',' << state_code(s.states[k]) << '\n';
    }
  }
}

std::vector<StateSeries> read_states(std::istream& in, const std::vector<Timestamp>& slices,
                                     Seconds delta, double threshold) {
  std::map<std::string, StateSeries> by_trader;
  for (const auto& rec : csv::read(in, {"slice_start", "trader_id", "state"})) {
    auto where = [&](const std::string& what) {
      return DataError("line " + std::to_string(rec.line) + ": " + what);
    };
    Timestamp t;
    try {
      t = parse_timestamp(rec.fields[0]);
    } catch (const DataError& e) {
      throw where(e.what());
    }
    auto it = std::lower_bound(slices.begin(), slices.end(), t);
    if (it == slices.end() || *it != t) throw where("slice start not on the configured grid");
    if (rec.fields[2].size() != 1) throw where("state must be one of B,S,N,I");
    State st;
    try {
      st = state_from_code(rec.fields[2][0]);
    } catch (const DataError& e) {
      throw where(e.what());
    }
    auto& s = by_trader[rec.fields[1]];
    if (s.states.empty()) {
      s = StateSeries{rec.fields[1], delta, threshold, std::vector<State>(slices.size(), State::Inactive)};
    }
    s.states[static_cast<std::size_t>(it - slices.begin())] = st;
  }
  std::vector<StateSeries> out;
  out.reserve(by_trader.size());
  for (auto& [id, s] : by_trader) out.push_back(std::move(s));
  return out;
}

}  // namespace tradeclust
