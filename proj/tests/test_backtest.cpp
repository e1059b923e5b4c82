#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "tradeclust/backtest.hpp"

using namespace tradeclust;

namespace {

const Timestamp kStart = parse_timestamp("2015-01-01T00:00:00Z");

std::vector<Timestamp> hourly(std::size_t n) {
  std::vector<Timestamp> out;
  for (std::size_t t = 0; t < n; ++t) out.push_back(kStart + Seconds{3600 * static_cast<long>(t)});
  return out;
}

PositionSeries constant(std::string id, double value, std::size_t n) {
  return {std::move(id), std::vector<double>(n, value)};
}

struct Market {
  std::vector<PositionSeries> positions;
  std::vector<double> returns;
  std::vector<Timestamp> epochs;
};

Market random_market(std::size_t experts, std::size_t epochs, std::uint64_t seed) {
  Rng rng(seed);
  Market m;
  m.epochs = hourly(epochs);
  for (std::size_t t = 0; t < epochs; ++t) m.returns.push_back(rng.uniform(-0.01, 0.01));
  for (std::size_t i = 0; i < experts; ++i) {
    PositionSeries p{"T" + std::to_string(10 + i), {}};
    for (std::size_t t = 0; t < epochs; ++t) p.values.push_back(rng.bernoulli(0.3) ? 0.0 : rng.uniform(-5.0, 5.0));
    m.positions.push_back(std::move(p));
  }
  return m;
}

Partition partition_of(const std::vector<std::string>& ids, const std::vector<int>& labels) {
  return Partition::from_labels(ids, labels);
}

}  // namespace

TEST(SlidingWindows, HalfYearWindowsOverOneYear) {
  const Interval year{kStart, parse_timestamp("2016-01-01T00:00:00Z")};
  const Seconds half_year = parse_timestamp("2015-07-01T00:00:00Z") - kStart;
  const auto w = sliding_windows(year, half_year, Seconds{14 * 86400});
  ASSERT_EQ(w.size(), 14u);
  EXPECT_EQ(w[0].in_sample.begin, kStart);
  EXPECT_EQ(w[1].in_sample.begin - w[0].in_sample.begin, Seconds{14 * 86400});
  ASSERT_TRUE(w[0].evaluation);
  EXPECT_EQ(w[0].evaluation->begin, w[0].in_sample.end);
  EXPECT_EQ(w[0].evaluation->end, w[1].in_sample.end);
  EXPECT_FALSE(w.back().evaluation);
  for (const auto& x : w) EXPECT_LE(x.in_sample.end, year.end);
}

TEST(SlidingWindows, Boundaries) {
  const Interval h{kStart, kStart + Seconds{100}};
  const auto one = sliding_windows(h, Seconds{100}, Seconds{10});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_FALSE(one[0].evaluation);
  // A step that overruns the horizon is dropped.
  EXPECT_EQ(sliding_windows(h, Seconds{60}, Seconds{30}).size(), 2u);
  EXPECT_THROW(sliding_windows(h, Seconds{200}, Seconds{10}), DomainError);
  EXPECT_THROW(sliding_windows(h, Seconds{10}, Seconds{10}), DomainError);
  EXPECT_THROW(sliding_windows(h, Seconds{10}, Seconds{0}), DomainError);
}

TEST(RunBacktest, ZeroDecisionsStayFlat) {
  const auto epochs = hourly(30);
  const std::vector<PositionSeries> pos{constant("a", 0.0, 30), constant("b", 0.0, 30)};
  const std::vector<double> ret(30, 0.01);
  for (auto s : {Strategy::EqualWeight, Strategy::Aa, Strategy::CaaMean, Strategy::CaaPen, Strategy::Ecaa}) {
    const auto r = run_backtest(pos, ret, epochs, s, {});
    for (double e : r.curve.equity) EXPECT_EQ(e, 1.0) << strategy_name(s);
  }
}

TEST(RunBacktest, SingleExpertCompounds) {
  const std::size_t n = 25;
  const auto epochs = hourly(n);
  const std::vector<PositionSeries> pos{constant("a", 3.0, n)};
  const std::vector<double> ret(n, 0.01);
  const auto r = run_backtest(pos, ret, epochs, Strategy::Aa, {});
  ASSERT_EQ(r.curve.equity.size(), n + 1);
  EXPECT_NEAR(r.curve.equity.back(), std::pow(1.01, static_cast<double>(n)), 1e-12);
  EXPECT_EQ(r.log.front().active_experts, 1u);
}

TEST(RunBacktest, OpposedExpertsCancelUnderEw) {
  const auto epochs = hourly(40);
  const std::vector<PositionSeries> pos{constant("a", 2.0, 40), constant("b", -7.0, 40)};
  Rng rng(1);
  std::vector<double> ret;
  for (int t = 0; t < 40; ++t) ret.push_back(rng.uniform(-0.02, 0.02));
  const auto r = run_backtest(pos, ret, epochs, Strategy::EqualWeight, {});
  for (double e : r.curve.equity) EXPECT_EQ(e, 1.0);
}

TEST(RunBacktest, EqualWeightIsFrozenAa) {
  const auto m = random_market(8, 300, 3);
  BacktestParams frozen;
  frozen.eta = 0.0;
  const auto ew = run_backtest(m.positions, m.returns, m.epochs, Strategy::EqualWeight, {});
  const auto aa = run_backtest(m.positions, m.returns, m.epochs, Strategy::Aa, frozen);
  ASSERT_EQ(ew.log.size(), aa.log.size());
  for (std::size_t t = 0; t < ew.log.size(); ++t) ASSERT_EQ(ew.log[t].prediction, aa.log[t].prediction);
  EXPECT_EQ(ew.curve.equity, aa.curve.equity);
}

TEST(RunBacktest, CaaWithoutClustersIsAa) {
  const auto m = random_market(6, 200, 4);
  const auto aa = run_backtest(m.positions, m.returns, m.epochs, Strategy::Aa, {});
  for (auto s : {Strategy::CaaMean, Strategy::CaaPen}) {
    const auto caa = run_backtest(m.positions, m.returns, m.epochs, s, {});
    EXPECT_EQ(caa.curve.equity, aa.curve.equity) << strategy_name(s);
  }
}

TEST(RunBacktest, EcaaOverSingletonsTracksAa) {
  const auto m = random_market(5, 200, 5);
  std::vector<std::string> ids;
  for (const auto& p : m.positions) ids.push_back(p.trader_id);
  ClusterSchedule schedule{{0}, {partition_of(ids, {0, 1, 2, 3, 4})}};
  const auto aa = run_backtest(m.positions, m.returns, m.epochs, Strategy::Aa, {});
  const auto ecaa = run_backtest(m.positions, m.returns, m.epochs, Strategy::Ecaa, {}, schedule);
  ASSERT_EQ(aa.log.size(), ecaa.log.size());
  for (std::size_t t = 0; t < aa.log.size(); ++t) ASSERT_NEAR(aa.log[t].prediction, ecaa.log[t].prediction, 1e-12);
}

TEST(RunBacktest, EcaaCarriesWeightsAcrossSchedule) {
  const auto m = random_market(6, 120, 6);
  std::vector<std::string> ids;
  for (const auto& p : m.positions) ids.push_back(p.trader_id);
  ClusterSchedule schedule{{0, 40, 80},
                           {partition_of(ids, {0, 0, 0, 1, 1, 1}), partition_of(ids, {0, 0, 1, 2, 2, 2}),
                            partition_of(ids, {0, 0, 0, 0, 0, 0})}};
  const auto r = run_backtest(m.positions, m.returns, m.epochs, Strategy::Ecaa, {}, schedule);
  EXPECT_EQ(r.log.size(), 120u);
  for (const auto& e : r.log) EXPECT_LE(std::abs(e.prediction), 1.0);
  EXPECT_THROW(run_backtest(m.positions, m.returns, m.epochs, Strategy::Ecaa, {},
                            ClusterSchedule{{10, 5}, {schedule.partitions[0], schedule.partitions[1]}}),
               DomainError);
}

TEST(RunBacktest, DecisionsScaleByRunningMaximum) {
  const auto epochs = hourly(3);
  const std::vector<PositionSeries> pos{{"a", {2.0, -4.0, 1.0}}};
  const std::vector<double> ret{0.0, 0.0, 0.0};
  const auto r = run_backtest(pos, ret, epochs, Strategy::Aa, {});
  EXPECT_EQ(r.log[0].prediction, 1.0);
  EXPECT_EQ(r.log[1].prediction, -1.0);
  EXPECT_EQ(r.log[2].prediction, 0.25);
}

TEST(RunBacktest, LearnerRuinTruncates) {
  const auto epochs = hourly(10);
  const std::vector<PositionSeries> pos{constant("a", 1.0, 10)};
  const std::vector<double> ret(10, -0.01);
  BacktestParams p;
  p.rho = 200.0;
  p.loss = LossKind::LongShort;
  const auto r = run_backtest(pos, ret, epochs, Strategy::Aa, p);
  EXPECT_TRUE(r.curve.bankrupt);
  EXPECT_EQ(r.log.size(), 1u);
  EXPECT_EQ(r.curve.equity.back(), 0.0);
}

TEST(RunBacktest, RuinedExpertSleepsForGood) {
  const auto epochs = hourly(4);
  const std::vector<PositionSeries> pos{constant("a", 1.0, 4), constant("b", -1.0, 4)};
  const std::vector<double> ret{-0.6, 0.1, 0.1, 0.1};
  BacktestParams p;
  p.rho = 2.0;
  const auto r = run_backtest(pos, ret, epochs, Strategy::EqualWeight, p);
  EXPECT_EQ(r.log[0].bankrupt_experts, 1u);
  EXPECT_EQ(r.log[1].active_experts, 1u);
  EXPECT_EQ(r.log[1].prediction, -1.0);
}

TEST(RunBacktest, Misaligned) {
  const auto epochs = hourly(5);
  const std::vector<PositionSeries> pos{constant("a", 1.0, 4)};
  EXPECT_THROW(run_backtest(pos, std::vector<double>(5, 0.0), epochs, Strategy::Aa, {}), DomainError);
  EXPECT_THROW(run_backtest({}, std::vector<double>(4, 0.0), epochs, Strategy::Aa, {}), DomainError);
}

TEST(MaxDrawdown, HandValue) {
  const std::vector<double> e{1.0, 1.1, 0.99, 1.2};
  EXPECT_NEAR(max_drawdown(e), 0.1, 1e-15);
  EXPECT_EQ(max_drawdown(std::vector<double>{1.0, 1.5, 2.0}), 0.0);
}

TEST(MaxDrawdown, MatchesPairwiseScan) {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> e{1.0};
    const std::size_t n = 2 + rng.below(80);
    for (std::size_t t = 0; t < n; ++t) e.push_back(e.back() * (1.0 + rng.uniform(-0.1, 0.1)));
    ASSERT_EQ(max_drawdown(e), oracle::max_drawdown(e));
  }
}

TEST(RiskReport, Values) {
  const std::vector<double> e{1.0, 1.1, 0.99, 1.2};
  const auto r = risk_report(e, 4.0);
  EXPECT_NEAR(r.total_return, 0.2, 1e-15);
  EXPECT_NEAR(r.max_drawdown, 0.1, 1e-15);
  EXPECT_NEAR(r.calmar, 2.0, 1e-12);
  const std::vector<double> rets{0.1, -0.1, 0.21 / 0.99};
  const double mean = (rets[0] + rets[1] + rets[2]) / 3.0;
  double ss = 0.0;
  for (double x : rets) ss += (x - mean) * (x - mean);
  EXPECT_NEAR(r.sharpe, mean / std::sqrt(ss / 2.0) * 2.0, 1e-12);
  EXPECT_TRUE(r.sharpe_defined);
}

TEST(RiskReport, Degenerate) {
  const auto flat = risk_report(std::vector<double>{1.0, 1.01, 1.0201, 1.030301}, 252.0);
  EXPECT_FALSE(flat.sharpe_defined);
  EXPECT_EQ(flat.max_drawdown, 0.0);
  EXPECT_TRUE(std::isinf(flat.calmar));
  EXPECT_THROW(risk_report(std::vector<double>{1.0, 1.1}, 252.0), DomainError);
}

TEST(RiskReport, ScaleInvariant) {
  Rng rng(7);
  std::vector<double> e{1.0};
  for (int t = 0; t < 100; ++t) e.push_back(e.back() * (1.0 + rng.uniform(-0.05, 0.05)));
  auto scaled = e;
  for (auto& x : scaled) x *= 37.5;
  const auto a = risk_report(e, 52.0), b = risk_report(scaled, 52.0);
  EXPECT_NEAR(a.total_return, b.total_return, 1e-12);
  EXPECT_NEAR(a.sharpe, b.sharpe, 1e-9);
  EXPECT_NEAR(a.max_drawdown, b.max_drawdown, 1e-12);
  EXPECT_NEAR(a.calmar, b.calmar, 1e-9);
}

TEST(Io, ReturnsRoundTrip) {
  const auto epochs = hourly(4);
  const std::vector<double> ret{0.001, -0.0025, 0.0, 1e-7};
  std::ostringstream out;
  write_returns(out, epochs, ret);
  std::istringstream in(out.str());
  const auto [e, r] = read_returns(in);
  EXPECT_EQ(e, epochs);
  EXPECT_EQ(r, ret);
  std::istringstream bad("epoch,return\n2015-01-01T01:00:00Z,0.1\n2015-01-01T00:00:00Z,0.1\n");
  EXPECT_THROW(read_returns(bad), DataError);
}

TEST(Io, ReportSentinels) {
  RiskReport r;
  r.total_return = 0.5;
  r.sharpe_defined = false;
  r.calmar = std::numeric_limits<double>::infinity();
  const std::vector<ReportRow> rows{{"EW", "benchmark", 70.0, r}};
  std::ostringstream out;
  write_report(out, rows);
  EXPECT_EQ(out.str(),
            "strategy,type,scaling_factor,return,sharpe,max_drawdown,calmar\n"
            "EW,benchmark,70,0.5,nan,0,inf\n");
}

TEST(Io, EpochLogHeader) {
  std::ostringstream out;
  write_epoch_log(out, std::vector<EpochLog>{{kStart, 0.5, 0.01, 0.0, 3, 1}});
  EXPECT_EQ(out.str(),
            "epoch,prediction,outcome,learner_loss,active_experts,bankrupt_count\n"
            "2015-01-01T00:00:00Z,0.5,0.01,0,3,1\n");
}

TEST(Strategy, Names) {
  for (auto s : {Strategy::EqualWeight, Strategy::Aa, Strategy::CaaMean, Strategy::CaaPen, Strategy::Ecaa}) {
    EXPECT_EQ(strategy_from_name(strategy_name(s)), s);
  }
  EXPECT_THROW(strategy_from_name("WAA"), DomainError);
}
