#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tradeclust/expert_games.hpp"
#include "tradeclust/trade_model.hpp"

namespace tradeclust {

struct SlidingWindow {
  Interval in_sample;
  /// [end of in-sample, end + step); absent when it would pass the horizon.
  std::optional<Interval> evaluation;
};

/// Windows [start + k*step, start + k*step + length) for every k whose window
/// fits in the horizon.
std::vector<SlidingWindow> sliding_windows(const Interval& horizon, Seconds length, Seconds step);

enum class Strategy { EqualWeight, Aa, CaaMean, CaaPen, Ecaa };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

enum class EcaaInit { Uniform, Cardinality };

struct BacktestParams {
  double rho = 1.0;
  double eta = 1.0;
  LossKind loss = LossKind::Downside;
  /// PEN variant used by CaaPen.
  bool pen_normalized = false;
  double min_jaccard = 0.3;
  EcaaInit ecaa_init = EcaaInit::Uniform;
};

/// Partition i governs epochs [first_epoch[i], first_epoch[i + 1]).
struct ClusterSchedule {
  std::vector<std::size_t> first_epoch;
  std::vector<Partition> partitions;

  void validate() const;
};

struct EpochLog {
  Timestamp epoch;
  double prediction = 0.0;
  double outcome = 0.0;
  double learner_loss = 0.0;
  std::size_t active_experts = 0;
  std::size_t bankrupt_experts = 0;
};

/// equity[0] = 1 precedes the first epoch; equity[t + 1] = equity[t] (1 + returns[t]).
struct EquityCurve {
  std::vector<Timestamp> epochs;
  std::vector<double> returns;
  std::vector<double> equity{1.0};
  bool bankrupt = false;
};

struct BacktestResult {
  EquityCurve curve;
  std::vector<EpochLog> log;
};

/// Expert i decides positions[i].values[t] / max_{s <= t} |positions[i].values[s]|
/// and is awake iff its position is nonzero. The position held at epoch t earns
/// returns[t], scaled by rho. Experts whose own scaled wealth reaches zero are
/// put to sleep for good. Learner ruin truncates the curve.
BacktestResult run_backtest(std::span<const PositionSeries> positions, std::span<const double> returns,
                            std::span<const Timestamp> epochs, Strategy strategy, const BacktestParams& params,
                            const ClusterSchedule& schedule = {});

struct RiskReport {
  double total_return = 0.0;
  double sharpe = 0.0;
  bool sharpe_defined = true;
  double max_drawdown = 0.0;
  double calmar = 0.0;  // +infinity without drawdown
};

double max_drawdown(std::span<const double> equity);

/// Sharpe is annualized by sqrt(periods_per_year) with a zero risk-free rate.
RiskReport risk_report(std::span<const double> equity, double periods_per_year);
inline RiskReport risk_report(const EquityCurve& curve, double periods_per_year) {
  return risk_report(curve.equity, periods_per_year);
}

void write_epoch_log(std::ostream& out, std::span<const EpochLog> log);
void write_returns(std::ostream& out, std::span<const Timestamp> epochs, std::span<const double> returns);
/// Reads `epoch,return`.
std::pair<std::vector<Timestamp>, std::vector<double>> read_returns(std::istream& in);

struct ReportRow {
  std::string strategy;
  std::string type;
  double scaling_factor = 1.0;
  RiskReport risk;
};

void write_report(std::ostream& out, std::span<const ReportRow> rows);
/// `epoch,equity,drawdown` for plotting.
void write_equity(std::ostream& out, const EquityCurve& curve);

}  // namespace tradeclust
