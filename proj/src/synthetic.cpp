#include <algorithm>
#include <cstdio>

#include "tradeclust/trade_model.hpp"

namespace tradeclust {

void GeneratorConfig::validate() const {
  if (num_traders == 0) throw DomainError("generator: num_traders must be positive");
  if (num_groups * group_size > num_traders)
    throw DomainError("generator: num_groups * group_size exceeds num_traders");
  if (!(p_sync > 0.0 && p_sync <= 1.0)) throw DomainError("generator: p_sync must lie in (0, 1]");
  if (!(group_activity >= 0.0 && group_activity <= 1.0))
    throw DomainError("generator: group_activity must lie in [0, 1]");
  if (!(background_rate >= 0.0 && background_rate <= 1.0))
    throw DomainError("generator: background_rate must lie in [0, 1]");
  if (!(start < end)) throw DomainError("generator: start must precede end");
  if (slice <= Seconds::zero()) throw DomainError("generator: slice must be positive");
  if (min_hold <= Seconds::zero() || max_hold < min_hold)
    throw DomainError("generator: need 0 < min_hold <= max_hold");
  if (!(lot_unit > 0.0) || lot_levels < 1) throw DomainError("generator: invalid lot distribution");
}

std::string synthetic_trader_id(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "T%05zu", i);
  return buf;
}

SyntheticMarket generate_synthetic_market(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);

  SyntheticMarket market;
  market.trades.symbol_filter = config.symbol;
  market.trader_ids.reserve(config.num_traders);
  market.group_of.reserve(config.num_traders);
  for (std::size_t i = 0; i < config.num_traders; ++i) {
    market.trader_ids.push_back(synthetic_trader_id(i));
    const std::size_t g = config.group_size ? i / config.group_size : config.num_groups;
    market.group_of.push_back(g < config.num_groups ? static_cast<int>(g) : -1);
  }

  EpochGrid slices{config.start, config.end, config.slice, config.business_hours, true};
  market.slices = slices.points();
  market.slice_length = config.slice;
  market.group_signal.assign(config.num_groups, std::vector<int>(market.slices.size(), 0));

  const auto slice_secs = static_cast<std::uint64_t>(config.slice.count());
  const auto hold_span = static_cast<std::uint64_t>((config.max_hold - config.min_hold).count()) + 1;

  auto emit = [&](std::size_t trader, Timestamp slice_start, int direction) {
    Trade t;
    t.trader_id = market.trader_ids[trader];
    t.open_time = slice_start + Seconds{static_cast<long long>(rng.below(slice_secs))};
    t.close_time = t.open_time + config.min_hold + Seconds{static_cast<long long>(rng.below(hold_span))};
    t.symbol = config.symbol;
    t.side = direction > 0 ? Side::Long : Side::Short;
    t.lots = config.lot_unit * static_cast<double>(1 + rng.below(static_cast<std::uint64_t>(config.lot_levels)));
    market.trades.trades.push_back(std::move(t));
  };
  auto coin = [&]() { return rng.bernoulli(0.5) ? 1 : -1; };

  for (std::size_t s = 0; s < market.slices.size(); ++s) {
    for (std::size_t g = 0; g < config.num_groups; ++g) {
      if (rng.bernoulli(config.group_activity)) market.group_signal[g][s] = coin();
    }
    for (std::size_t i = 0; i < config.num_traders; ++i) {
      const int g = market.group_of[i];
      if (g >= 0) {
        const int signal = market.group_signal[static_cast<std::size_t>(g)][s];
        if (signal == 0) continue;
        const int direction = rng.bernoulli(config.p_sync) ? signal : coin();
        emit(i, market.slices[s], direction);
      } else if (rng.bernoulli(config.background_rate)) {
        emit(i, market.slices[s], coin());
      }
    }
  }
  market.trades.sort();
  return market;
}

std::vector<double> generate_returns(const SyntheticMarket& market,
                                     const std::vector<Timestamp>& epochs, double sigma,
                                     double skill, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw DomainError("generate_returns: sigma must be nonnegative");
  Rng rng(seed);
  std::vector<double> out;
  out.reserve(epochs.size());
  const Seconds slice_len = market.slice_length;
  for (Timestamp epoch : epochs) {
    // Signal that traders opened positions on just before the epoch.
    const Timestamp t = epoch - Seconds{1};
    int direction = 0;
    if (!market.group_signal.empty() && !market.slices.empty()) {
      auto it = std::upper_bound(market.slices.begin(), market.slices.end(), t);
      if (it != market.slices.begin()) {
        const auto s = static_cast<std::size_t>(std::prev(it) - market.slices.begin());
        if (t < market.slices[s] + slice_len) direction = market.group_signal[0][s];
      }
    }
    out.push_back(sigma * (rng.normal() + skill * direction));
  }
  return out;
}

}  // namespace tradeclust
