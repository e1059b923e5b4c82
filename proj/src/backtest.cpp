#include "tradeclust/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include "tradeclust/csv.hpp"

namespace tradeclust {

std::vector<SlidingWindow> sliding_windows(const Interval& horizon, Seconds length, Seconds step) {
  if (!(step > Seconds::zero() && length > step)) {
    throw DomainError("sliding_windows: need window length > step > 0");
  }
  if (horizon.length() < length) throw DomainError("sliding_windows: horizon is shorter than one window");
  std::vector<SlidingWindow> out;
  for (Timestamp begin = horizon.begin; begin + length <= horizon.end; begin += step) {
    SlidingWindow w{{begin, begin + length}, std::nullopt};
    const Timestamp end = begin + length;
    if (end + step <= horizon.end) w.evaluation = Interval{end, end + step};
    out.push_back(w);
  }
  return out;
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::EqualWeight: return "EW";
    case Strategy::Aa: return "AA";
    case Strategy::CaaMean: return "CAA-MEAN";
    case Strategy::CaaPen: return "CAA-PEN";
    case Strategy::Ecaa: return "ECAA";
  }
  return "unknown";
}

Strategy strategy_from_name(const std::string& name) {
  for (auto s : {Strategy::EqualWeight, Strategy::Aa, Strategy::CaaMean, Strategy::CaaPen, Strategy::Ecaa}) {
    if (strategy_name(s) == name) return s;
  }
  throw DomainError("unknown strategy '" + name + "' (expected EW, AA, CAA-MEAN, CAA-PEN or ECAA)");
}

void ClusterSchedule::validate() const {
  if (first_epoch.size() != partitions.size()) throw DomainError("cluster schedule: one start epoch per partition");
  for (std::size_t i = 1; i < first_epoch.size(); ++i) {
    if (first_epoch[i] <= first_epoch[i - 1]) throw DomainError("cluster schedule: start epochs must increase");
  }
  for (const auto& p : partitions) p.validate();
}

namespace {

/// Cluster structure for the epochs governed by one schedule entry.
struct Segment {
  ClusterAssignment caa;          // every expert; unclustered ones as singletons
  std::vector<std::size_t> members;  // clustered experts, for ECAA
  ClusterAssignment ecaa;         // over `members`
};

Segment make_segment(const Partition* p, const std::map<std::string, std::size_t>& index, std::size_t experts) {
  Segment s;
  s.caa.cluster_of.assign(experts, -1);
  s.caa.num_clusters = p ? p->num_clusters : 0;
  if (p) {
    s.ecaa.num_clusters = p->num_clusters;
    for (const auto& [id, c] : p->assignment) {
      auto it = index.find(id);
      if (it == index.end()) continue;
      s.caa.cluster_of[it->second] = c;
    }
    for (std::size_t i = 0; i < experts; ++i) {
      if (s.caa.cluster_of[i] < 0) continue;
      s.members.push_back(i);
      s.ecaa.cluster_of.push_back(s.caa.cluster_of[i]);
    }
  }
  for (auto& c : s.caa.cluster_of) {
    if (c < 0) c = s.caa.num_clusters++;
  }
  return s;
}

}  // namespace

BacktestResult run_backtest(std::span<const PositionSeries> positions, std::span<const double> returns,
                            std::span<const Timestamp> epochs, Strategy strategy, const BacktestParams& params,
                            const ClusterSchedule& schedule) {
  if (returns.size() != epochs.size()) throw DomainError("run_backtest: returns and epochs are misaligned");
  for (const auto& p : positions) {
    if (p.values.size() != epochs.size()) {
      throw DomainError("run_backtest: positions of " + p.trader_id + " are misaligned with the epochs");
    }
  }
  if (!(params.rho > 0.0) || !(params.eta >= 0.0)) throw DomainError("run_backtest: need rho > 0 and eta >= 0");
  schedule.validate();

  const std::size_t experts = positions.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < experts; ++i) index.emplace(positions[i].trader_id, i);

  const double eta = strategy == Strategy::EqualWeight ? 0.0 : params.eta;
  WeightState state = WeightState::uniform(experts, eta, params.rho);
  WeightState meta{{}, eta, params.rho};
  const CaaRule rule = strategy == Strategy::CaaMean ? CaaRule::Mean
                       : params.pen_normalized       ? CaaRule::PenNormalized
                                                     : CaaRule::Pen;

  std::vector<double> running_max(experts, 0.0), wealth(experts, 1.0);
  std::vector<bool> ruined(experts, false);
  std::size_t ruined_count = 0;
  std::vector<ExpertDecision> decisions(experts), member_decisions;

  std::ptrdiff_t segment_id = -1;
  Segment segment = make_segment(nullptr, index, experts);
  const Partition* previous = nullptr;
  double birth_share = 1.0;

  BacktestResult result;
  result.curve.epochs.reserve(epochs.size());
  for (std::size_t t = 0; t < epochs.size(); ++t) {
    while (static_cast<std::size_t>(segment_id + 1) < schedule.first_epoch.size() &&
           schedule.first_epoch[static_cast<std::size_t>(segment_id + 1)] <= t) {
      ++segment_id;
      const Partition& current = schedule.partitions[static_cast<std::size_t>(segment_id)];
      segment = make_segment(&current, index, experts);
      if (strategy == Strategy::Ecaa) {
        const auto m = static_cast<std::size_t>(current.num_clusters);
        if (!previous) {
          birth_share = 1.0 / static_cast<double>(std::max<std::size_t>(m, 1));
          meta.weights.assign(m, 0.0);
          for (std::size_t c = 0; c < m; ++c) meta.weights[c] = birth_share;
          if (params.ecaa_init == EcaaInit::Cardinality && !segment.members.empty()) {
            const auto sizes = current.sizes();
            std::size_t total = 0;
            for (auto s : sizes) total += s;
            for (std::size_t c = 0; c < m; ++c) {
              meta.weights[c] = static_cast<double>(sizes[c]) / static_cast<double>(total);
            }
          }
          meta.scale_exponent = 0;
        } else {
          const auto flow = match_flows(*previous, current, params.min_jaccard);
          meta.weights = ecaa_evolve(meta.weights, flow, std::ldexp(birth_share, -meta.scale_exponent));
        }
        previous = &current;
      }
    }

    std::size_t active = 0;
    for (std::size_t i = 0; i < experts; ++i) {
      const double pos = positions[i].values[t];
      running_max[i] = std::max(running_max[i], std::abs(pos));
      if (ruined[i] || pos == 0.0) {
        decisions[i].reset();
      } else {
        decisions[i] = std::clamp(pos / running_max[i], -1.0, 1.0);
        ++active;
      }
    }

    const double r = returns[t];
    StepResult step;
    switch (strategy) {
      case Strategy::EqualWeight:
      case Strategy::Aa: step = aa_sleeping_step(state, decisions, r, params.loss); break;
      case Strategy::CaaMean:
      case Strategy::CaaPen: step = caa_step(rule, segment.caa, state, decisions, r, params.loss); break;
      case Strategy::Ecaa:
        member_decisions.clear();
        for (auto i : segment.members) member_decisions.push_back(decisions[i]);
        step = ecaa_step(meta, segment.ecaa, member_decisions, r, params.loss);
        break;
    }

    for (std::size_t i = 0; i < experts; ++i) {
      if (!decisions[i]) continue;
      const auto w = wealth_update(wealth[i], *decisions[i], params.rho * r);
      wealth[i] = w.wealth;
      if (w.bankrupt) {
        ruined[i] = true;
        ++ruined_count;
      }
    }

    const double scaled = params.rho * step.prediction * r;
    const auto learner = wealth_update(result.curve.equity.back(), step.prediction, params.rho * r);
    result.curve.epochs.push_back(epochs[t]);
    result.curve.returns.push_back(scaled);
    result.curve.equity.push_back(std::max(learner.wealth, 0.0));
    result.log.push_back({epochs[t], step.prediction, r, step.learner_loss, active, ruined_count});
    if (learner.bankrupt) {
      result.curve.bankrupt = true;
      break;
    }
  }
  return result;
}

double max_drawdown(std::span<const double> equity) {
  double peak = -std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (double e : equity) {
    peak = std::max(peak, e);
    if (peak > 0.0) worst = std::max(worst, (peak - e) / peak);
  }
  return worst;
}

RiskReport risk_report(std::span<const double> equity, double periods_per_year) {
  if (equity.size() < 3) throw DomainError("risk_report: need at least two periods");
  if (!(periods_per_year > 0.0)) throw DomainError("risk_report: periods per year must be positive");
  if (!(equity.front() > 0.0)) throw DomainError("risk_report: initial equity must be positive");
  RiskReport r;
  r.total_return = equity.back() / equity.front() - 1.0;
  r.max_drawdown = max_drawdown(equity);

  std::vector<double> rets;
  rets.reserve(equity.size() - 1);
  for (std::size_t t = 1; t < equity.size(); ++t) rets.push_back(equity[t] / equity[t - 1] - 1.0);
  double mean = 0.0;
  for (double x : rets) mean += x;
  mean /= static_cast<double>(rets.size());
  double ss = 0.0;
  for (double x : rets) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(rets.size() - 1));
  if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
    r.sharpe_defined = false;
    r.sharpe = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.sharpe = mean / sd * std::sqrt(periods_per_year);
  }
  r.calmar = r.max_drawdown > 0.0 ? r.total_return / r.max_drawdown : std::numeric_limits<double>::infinity();
  return r;
}

void write_epoch_log(std::ostream& out, std::span<const EpochLog> log) {
  out << "epoch,prediction,outcome,learner_loss,active_experts,bankrupt_count\n";
  for (const auto& e : log) {
    out << format_timestamp(e.epoch) << ',' << format_double(e.prediction) << ',' << format_double(e.outcome) << ','
        << format_double(e.learner_loss) << ',' << e.active_experts << ',' << e.bankrupt_experts << '\n';
  }
}

void write_returns(std::ostream& out, std::span<const Timestamp> epochs, std::span<const double> returns) {
  if (epochs.size() != returns.size()) throw DomainError("write_returns: size mismatch");
  out << "epoch,return\n";
  for (std::size_t t = 0; t < epochs.size(); ++t) {
    out << format_timestamp(epochs[t]) << ',' << format_double(returns[t]) << '\n';
  }
}

std::pair<std::vector<Timestamp>, std::vector<double>> read_returns(std::istream& in) {
  std::pair<std::vector<Timestamp>, std::vector<double>> out;
  for (const auto& rec : csv::read(in, {"epoch", "return"})) {
    try {
      out.first.push_back(parse_timestamp(rec.fields[0]));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(rec.line) + ": " + e.what());
    }
    out.second.push_back(csv::to_double(rec.fields[1], rec.line));
    if (out.first.size() > 1 && out.first[out.first.size() - 2] >= out.first.back()) {
      throw DataError("line " + std::to_string(rec.line) + ": epochs must increase");
    }
  }
  return out;
}

void write_report(std::ostream& out, std::span<const ReportRow> rows) {
  out << "strategy,type,scaling_factor,return,sharpe,max_drawdown,calmar\n";
  for (const auto& row : rows) {
    out << row.strategy << ',' << row.type << ',' << format_double(row.scaling_factor) << ','
        << format_double(row.risk.total_return) << ','
        << (row.risk.sharpe_defined ? format_double(row.risk.sharpe) : std::string("nan")) << ','
        << format_double(row.risk.max_drawdown) << ','
        << (std::isinf(row.risk.calmar) ? std::string("inf") : format_double(row.risk.calmar)) << '\n';
  }
}

void write_equity(std::ostream& out, const EquityCurve& curve) {
  out << "epoch,equity,drawdown\n";
  double peak = curve.equity.front();
  for (std::size_t t = 0; t < curve.epochs.size(); ++t) {
    const double e = curve.equity[t + 1];
    peak = std::max(peak, e);
    out << format_timestamp(curve.epochs[t]) << ',' << format_double(e) << ','
        << format_double(peak > 0.0 ? (peak - e) / peak : 0.0) << '\n';
  }
}

}  // namespace tradeclust
