#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tradeclust/common.hpp"

namespace tradeclust::cli {

/// Every tunable of a pipeline run. Durations are strings such as "90s",
/// "15m", "1h", "2d", "1w", "6mo" (average Gregorian month) or "1y".
struct RunConfig {
  std::string out_dir = "out";
  std::uint64_t seed = 1;

  // Market data; empty inputs mean the simulate stage generates them.
  std::string input_trades;
  std::string input_returns;
  std::string symbol = "EURUSD";
  std::string start = "2015-01-05T00:00:00Z";
  std::string end = "2016-01-11T00:00:00Z";
  int business_from_hour = 6;
  int business_to_hour = 18;
  bool business_days_only = true;

  // Synthetic market.
  std::size_t traders = 2000;
  std::size_t groups = 20;
  std::size_t group_size = 20;
  double p_sync = 0.9;
  double group_activity = 0.1;
  double background_rate = 0.02;
  std::string signal_slice = "1h";
  std::string min_hold = "10m";
  std::string max_hold = "4h";
  double return_sigma = 0.001;
  double return_skill = 0.3;

  // States and networks.
  std::vector<int> delta_minutes{10, 15, 30, 60, 120, 180, 360, 1440};
  double state_threshold = 0.25;
  std::string window = "4w";
  std::string step = "1w";
  std::size_t cutoff = 10;
  double alpha = 0.05;
  int infomap_trials = 1;

  // Ewens fit and tracking.
  bool ewens_conditional = true;
  double chi2_alpha = 0.05;
  double chi2_min_expected = 1.0;
  double min_jaccard = 0.3;

  // Backtest.
  std::size_t universe = 400;
  std::string epoch_step = "1h";
  std::vector<double> rho{1.0, 70.0, 200.0, 400.0};
  double eta = 1.0;
  std::string loss = "downside";
  double hierarchical_threshold = 70.0;  // percent
  std::string ecaa_init = "uniform";
  bool pen_normalized = false;

  /// Every violated precondition, empty when the config is usable.
  std::vector<std::string> validate() const;
};

/// Parses "<count><unit>" durations.
Seconds parse_duration(const std::string& text);

/// Canonical `key = value` rendering used for the config hash.
std::string canonical_config(const RunConfig& config);

enum class Stage { Simulate, States, Svn, Cluster, EwensFit, Track, Backtest, Report };

const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);

/// A stage input that does not exist.
class MissingInput : public DataError {
 public:
  explicit MissingInput(const std::filesystem::path& path)
      : DataError("missing stage input: " + path.string()) {}
};

/// Runs the stages in order and refreshes out_dir/manifest.json.
void run_stages(const RunConfig& config, const std::vector<Stage>& stages);

}  // namespace tradeclust::cli
