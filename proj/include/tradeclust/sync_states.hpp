#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tradeclust/common.hpp"
#include "tradeclust/trade_model.hpp"

namespace tradeclust {

enum class State : std::uint8_t { Buying, Selling, Neutral, Inactive };

char state_code(State s);
State state_from_code(char c);

/// (b - s) / (b + s), or nullopt (inactive) when both volumes are zero.
std::optional<double> imbalance_ratio(double bought, double sold);

/// Buying above +threshold, selling below -threshold, neutral otherwise.
State classify(double bought, double sold, double threshold);

struct StateSeries {
  std::string trader_id;
  Seconds delta{0};
  double threshold = 0.25;
  std::vector<State> states;
};

/// Slice starts of width `delta` covering `window`. A slice is kept if it ends
/// inside the window and overlaps the calendar's business time.
std::vector<Timestamp> slice_starts(const Interval& window, Seconds delta,
                                    const EpochGrid& calendar);

/// States over the given slices. Each trade adds its full lots to the slice
/// that contains its open_time; trades opened outside every slice are ignored.
StateSeries state_series(const TradeTable& table, const std::string& trader, Seconds delta,
                         double threshold, const std::vector<Timestamp>& slices);

/// Same as state_series for every trader in the table (sorted by id), one pass.
std::vector<StateSeries> all_state_series(const TradeTable& table, Seconds delta,
                                          double threshold, const std::vector<Timestamp>& slices);

/// Long format; inactive slices are omitted.
void write_states(std::ostream& out, const std::vector<Timestamp>& slices,
                  const std::vector<StateSeries>& series);

/// Reads the sparse long format back onto the given slice grid.
std::vector<StateSeries> read_states(std::istream& in, const std::vector<Timestamp>& slices,
                                     Seconds delta, double threshold);

}  // namespace tradeclust
