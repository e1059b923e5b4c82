#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pipeline.hpp"

namespace {

using tradeclust::cli::RunConfig;
using tradeclust::cli::Stage;

void add_config_options(CLI::App& app, RunConfig& c) {
  app.add_option("--out-dir,--out_dir", c.out_dir, "Artifact directory");
  app.add_option("--seed", c.seed, "Base seed; every stage derives its own");

  app.add_option("--input-trades,--input_trades", c.input_trades, "Trade CSV to use instead of the simulator");
  app.add_option("--input-returns,--input_returns", c.input_returns, "Return CSV paired with --input-trades");
  app.add_option("--symbol", c.symbol);
  app.add_option("--start", c.start, "Horizon start, YYYY-MM-DDTHH:MM:SSZ");
  app.add_option("--end", c.end, "Horizon end (exclusive)");
  app.add_option("--business-from-hour,--business_from_hour", c.business_from_hour);
  app.add_option("--business-to-hour,--business_to_hour", c.business_to_hour);
  app.add_option("--business-days-only,--business_days_only", c.business_days_only);

  app.add_option("--traders", c.traders);
  app.add_option("--groups", c.groups);
  app.add_option("--group-size,--group_size", c.group_size);
  app.add_option("--p-sync,--p_sync", c.p_sync);
  app.add_option("--group-activity,--group_activity", c.group_activity);
  app.add_option("--background-rate,--background_rate", c.background_rate);
  app.add_option("--signal-slice,--signal_slice", c.signal_slice);
  app.add_option("--min-hold,--min_hold", c.min_hold);
  app.add_option("--max-hold,--max_hold", c.max_hold);
  app.add_option("--return-sigma,--return_sigma", c.return_sigma);
  app.add_option("--return-skill,--return_skill", c.return_skill);

  app.add_option("--delta-minutes,--delta_minutes", c.delta_minutes, "State slice widths in minutes")->delimiter(',');
  app.add_option("--state-threshold,--state_threshold", c.state_threshold);
  app.add_option("--window", c.window, "In-sample window length, e.g. 4w");
  app.add_option("--step", c.step, "Window step, e.g. 1w");
  app.add_option("--cutoff", c.cutoff, "Minimum trades for a trader to be active in a window");
  app.add_option("--alpha", c.alpha, "Family-wise significance level");
  app.add_option("--infomap-trials,--infomap_trials", c.infomap_trials);

  app.add_option("--ewens-conditional,--ewens_conditional", c.ewens_conditional);
  app.add_option("--chi2-alpha,--chi2_alpha", c.chi2_alpha);
  app.add_option("--chi2-min-expected,--chi2_min_expected", c.chi2_min_expected);
  app.add_option("--min-jaccard,--min_jaccard", c.min_jaccard);

  app.add_option("--universe", c.universe, "Traders used as experts");
  app.add_option("--epoch-step,--epoch_step", c.epoch_step);
  app.add_option("--rho", c.rho, "Scaling factors")->delimiter(',');
  app.add_option("--eta", c.eta, "Learning rate");
  app.add_option("--loss", c.loss, "long_short or downside");
  app.add_option("--hierarchical-threshold,--hierarchical_threshold", c.hierarchical_threshold,
                 "Correlation-distance cut in percent");
  app.add_option("--ecaa-init,--ecaa_init", c.ecaa_init, "uniform or cardinality");
  app.add_option("--pen-normalized,--pen_normalized", c.pen_normalized);
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig config;
  CLI::App app{"Trader clustering and expert-aggregation pipeline"};
  app.set_config("--config", "", "Configuration file (key = value)");
  app.allow_config_extras(false);
  app.require_subcommand(1);
  add_config_options(app, config);

  std::vector<Stage> stages;
  for (auto s : tradeclust::cli::all_stages()) {
    auto* sub = app.add_subcommand(tradeclust::cli::stage_name(s), "Run the " + tradeclust::cli::stage_name(s) + " stage");
    sub->fallthrough();
    sub->callback([&stages, s] { stages = {s}; });
  }
  auto* run = app.add_subcommand("run", "Run every stage in order");
  run->fallthrough();
  run->callback([&stages] { stages = tradeclust::cli::all_stages(); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const auto problems = config.validate();
  if (!problems.empty()) {
    std::cerr << "invalid configuration:\n";
    for (const auto& p : problems) std::cerr << "  " << p << '\n';
    return 1;
  }

  try {
    tradeclust::cli::run_stages(config, stages);
  } catch (const tradeclust::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const tradeclust::DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
