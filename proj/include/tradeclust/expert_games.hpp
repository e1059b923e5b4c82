#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tradeclust/cluster_flow.hpp"

namespace tradeclust {

enum class LossKind { LongShort, Downside };

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

/// Nonnegative loss of holding `gamma` through return `r`; +infinity on ruin.
double loss(LossKind kind, double rho, double gamma, double r);

struct WealthStep {
  double wealth = 1.0;
  bool bankrupt = false;
};

WealthStep wealth_update(double wealth, double gamma, double ret);

/// One expert's decision at an epoch; nullopt while the expert sleeps.
using ExpertDecision = std::optional<double>;

struct WeightState {
  /// Stored weights; the true weights are these times 2^scale_exponent.
  std::vector<double> weights;
  double eta = 1.0;
  double rho = 1.0;
  int scale_exponent = 0;

  static WeightState uniform(std::size_t experts, double eta = 1.0, double rho = 1.0);
};

struct StepResult {
  double prediction = 0.0;
  double learner_loss = 0.0;
};

/// Aggregating Algorithm step with every expert awake and the weighted-mean
/// substitution rule. Weights are updated in place.
StepResult aa_step(WeightState& state, std::span<const double> decisions, double ret, LossKind kind);

/// Sleeping-experts step: awake experts pay their own loss, sleeping ones the
/// learner's. No awake weight means no position and no update.
StepResult aa_sleeping_step(WeightState& state, std::span<const ExpertDecision> decisions, double ret,
                            LossKind kind);

enum class CaaRule { Mean, Pen, PenNormalized };

std::string caa_rule_name(CaaRule r);
CaaRule caa_rule_from_name(const std::string& name);

/// Expert index to cluster id (0..num_clusters-1).
struct ClusterAssignment {
  std::vector<int> cluster_of;
  int num_clusters = 0;

  static ClusterAssignment singletons(std::size_t experts);
  void validate(std::size_t experts) const;
};

/// Cluster-aware prediction; cluster sizes and weight sums use awake members only.
double caa_prediction(CaaRule rule, const ClusterAssignment& clusters, const WeightState& state,
                      std::span<const ExpertDecision> decisions);

/// caa_prediction followed by the sleeping-experts weight update.
StepResult caa_step(CaaRule rule, const ClusterAssignment& clusters, WeightState& state,
                    std::span<const ExpertDecision> decisions, double ret, LossKind kind);

/// Mean decision of the awake members of every cluster.
std::vector<ExpertDecision> cluster_decisions(const ClusterAssignment& clusters,
                                              std::span<const ExpertDecision> decisions);

/// Carries cluster meta-expert weights across one flow. A child receives, from
/// every parent it matches, the parent's weight divided by the parent's number
/// of children. Births get `birth_weight`.
std::vector<double> ecaa_evolve(std::span<const double> weights, const FlowMap& flow, double birth_weight);

/// Sleeping AA over cluster meta-experts.
StepResult ecaa_step(WeightState& cluster_state, const ClusterAssignment& clusters,
                     std::span<const ExpertDecision> decisions, double ret, LossKind kind);

/// C * best_loss + (C / eta) ln(N / m).
double regret_bound(std::size_t experts, double eta, double c, double best_loss, std::size_t duplicates = 1);

struct ClusterBound {
  double u_minus = 0.0;  // meta-experts with equal initial weights
  double u_star = 0.0;   // original experts with uniform initial weights
  std::size_t best_cluster = 0;
  bool advantage = false;
};

/// Compares the loss bounds for identical-expert clusters; the verdict uses the
/// cardinality criterion c_best <= (N/M) exp(eta (L_best - L_min)).
ClusterBound cluster_bound_advantage(std::span<const std::size_t> cardinalities,
                                     std::span<const double> cluster_losses, double eta);

}  // namespace tradeclust
