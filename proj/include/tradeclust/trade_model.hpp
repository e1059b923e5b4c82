#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tradeclust/common.hpp"

namespace tradeclust {

enum class Side { Long, Short };

inline int side_sign(Side s) { return s == Side::Long ? 1 : -1; }

struct Trade {
  std::string trader_id;
  Timestamp open_time;
  Timestamp close_time;
  std::string symbol;
  Side side = Side::Long;
  double lots = 0.0;

  bool operator==(const Trade&) const = default;
};

/// Trades sorted by open_time, ties broken by (trader_id, close_time).
struct TradeTable {
  std::vector<Trade> trades;
  std::optional<std::string> symbol_filter;

  /// Restores the ordering invariant.
  void sort();
  /// Sorted, distinct trader ids.
  std::vector<std::string> traders() const;
};

/// Reads the trade CSV (`trader_id,open_time,close_time,symbol,side,lots`).
///
/// Rows for other instruments are skipped when `symbol` is given. Any
/// malformed row aborts the parse with a DataError naming its line.
TradeTable parse_trades(std::istream& in, std::optional<std::string> symbol = std::nullopt);
void write_trades(std::ostream& out, const TradeTable& table);

/// Traders with at least `cutoff` trades opened inside `window`.
std::set<std::string> filter_active(const TradeTable& table, const Interval& window,
                                    std::size_t cutoff);

/// Daily time-of-day range [from, to) in which grid points are kept.
struct BusinessHours {
  std::chrono::minutes from{6 * 60};
  std::chrono::minutes to{18 * 60};
};

/// Regular grid start, start+step, ... below end, optionally restricted to
/// business hours and Monday-Friday.
struct EpochGrid {
  Timestamp start;
  Timestamp end;
  Seconds step{3600};
  std::optional<BusinessHours> business_hours = BusinessHours{};
  bool business_days_only = true;

  void validate() const;
  bool keeps(Timestamp t) const;
  /// Whether [begin, begin + length) contains any kept instant.
  bool overlaps(Timestamp begin, Seconds length) const;
  std::vector<Timestamp> points() const;
};

struct PositionSeries {
  std::string trader_id;
  std::vector<double> values;
};

/// Net position per trader at every grid point; a trade counts at t iff
/// open_time <= t < close_time. One series per trader in the table, sorted.
std::vector<PositionSeries> resample_positions(const TradeTable& table,
                                               const std::vector<Timestamp>& points);
std::vector<PositionSeries> resample_positions(const TradeTable& table, const EpochGrid& grid);

/// Long format `epoch,trader_id,net_position`; zero positions are omitted.
void write_positions(std::ostream& out, const std::vector<Timestamp>& points,
                     const std::vector<PositionSeries>& series);
/// Series for every trader in the file plus `ids`, sorted by id.
std::vector<PositionSeries> read_positions(std::istream& in, const std::vector<Timestamp>& points,
                                           const std::vector<std::string>& ids = {});

// Synthetic market -----------------------------------------------------------

struct GeneratorConfig {
  std::size_t num_traders = 100;
  std::size_t num_groups = 3;
  std::size_t group_size = 20;
  /// Probability that a group member follows the group signal in an active slice.
  double p_sync = 0.9;
  /// Probability that a group issues a signal in a given slice.
  double group_activity = 0.3;
  /// Probability that an ungrouped trader trades in a given slice.
  double background_rate = 0.1;
  Timestamp start = std::chrono::sys_days{std::chrono::year{2015} / 1 / 5} + std::chrono::hours{6};
  Timestamp end = std::chrono::sys_days{std::chrono::year{2015} / 3 / 2} + std::chrono::hours{6};
  /// Signal slice length; trades open at a uniformly random second inside the slice.
  Seconds slice{3600};
  BusinessHours business_hours{};
  /// Holding period is uniform in [min_hold, max_hold].
  Seconds min_hold{600};
  Seconds max_hold{4 * 3600};
  /// Lots are drawn uniformly from {lot_unit, 2*lot_unit, ..., lot_levels*lot_unit}.
  double lot_unit = 0.1;
  int lot_levels = 20;
  std::string symbol = "EURUSD";

  void validate() const;
};

struct SyntheticMarket {
  TradeTable trades;
  /// Planted group per trader id (-1 for ungrouped), same order as trader ids.
  std::vector<std::string> trader_ids;
  std::vector<int> group_of;
  /// Signal slice starts and each group's direction per slice (+1, -1, or 0 when silent).
  std::vector<Timestamp> slices;
  Seconds slice_length{0};
  std::vector<std::vector<int>> group_signal;
};

/// Planted-group market: group members trade the shared direction with
/// probability p_sync and an independent direction otherwise; ungrouped
/// traders trade independently at the background rate.
SyntheticMarket generate_synthetic_market(const GeneratorConfig& config, std::uint64_t seed);

/// Trader id used by the generator for index i (zero padded, sorts numerically).
std::string synthetic_trader_id(std::size_t i);

/// Epoch-aligned market returns: Gaussian noise plus `skill * sigma` times the
/// direction of group 0 in the slice containing the second before the epoch,
/// i.e. the signal behind the positions held going into the epoch.
std::vector<double> generate_returns(const SyntheticMarket& market,
                                     const std::vector<Timestamp>& epochs, double sigma,
                                     double skill, std::uint64_t seed);

}  // namespace tradeclust
