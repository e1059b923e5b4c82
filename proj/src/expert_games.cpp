#include "tradeclust/expert_games.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tradeclust {

std::string loss_kind_name(LossKind k) { return k == LossKind::LongShort ? "long_short" : "downside"; }

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "long_short") return LossKind::LongShort;
  if (name == "downside") return LossKind::Downside;
  throw DomainError("unknown loss kind '" + name + "' (expected long_short or downside)");
}

double loss(LossKind kind, double rho, double gamma, double r) {
  if (!(rho > 0.0)) throw DomainError("loss: rho must be positive");
  if (!(std::abs(gamma) <= 1.0)) throw DomainError("loss: decision must lie in [-1, 1]");
  if (!std::isfinite(r)) throw DomainError("loss: return must be finite");
  const double gain = gamma * r;
  const double factor = 1.0 + rho * (kind == LossKind::LongShort ? gain : std::min(gain, 0.0));
  if (factor <= 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(factor);
}

WealthStep wealth_update(double wealth, double gamma, double ret) {
  if (!(wealth > 0.0)) throw DomainError("wealth_update: wealth must be positive");
  const double w = wealth * (1.0 + gamma * ret);
  return {w, w <= 0.0};
}

WeightState WeightState::uniform(std::size_t experts, double eta, double rho) {
  return WeightState{std::vector<double>(experts, 1.0), eta, rho};
}

namespace {

void check_state(const WeightState& s, std::size_t experts) {
  if (s.weights.size() != experts) {
    throw DomainError("weight state has " + std::to_string(s.weights.size()) + " experts, decisions cover " +
                      std::to_string(experts));
  }
  if (!(s.eta >= 0.0) || !(s.rho > 0.0)) throw DomainError("eta must be nonnegative and rho positive");
}

/// Keeps weights away from under/overflow; scaling by a power of two is exact.
void rescale(WeightState& s) {
  if (s.weights.empty()) return;
  const double top = *std::max_element(s.weights.begin(), s.weights.end());
  if (!(top > 0.0) || (top > 0x1.0p-400 && top < 0x1.0p400)) return;
  int exponent = 0;
  std::frexp(top, &exponent);
  for (auto& x : s.weights) x = std::ldexp(x, -exponent);
  s.scale_exponent += exponent;
}

/// eta = 0 freezes the weights, including through infinite losses.
double multiplier(double eta, double l) {
  if (eta == 0.0) return 1.0;
  return std::isinf(l) ? 0.0 : std::exp(-eta * l);
}

double clip(double g) { return std::clamp(g, -1.0, 1.0); }

/// Awake experts pay their own loss, sleeping experts the learner's.
StepResult update_sleeping(WeightState& s, std::span<const ExpertDecision> d, double prediction, double ret,
                           LossKind kind) {
  const double learner = loss(kind, s.rho, prediction, ret);
  const double sleep_factor = multiplier(s.eta, learner);
  for (std::size_t i = 0; i < d.size(); ++i) {
    s.weights[i] *= d[i] ? multiplier(s.eta, loss(kind, s.rho, *d[i], ret)) : sleep_factor;
  }
  rescale(s);
  return {prediction, learner};
}

double awake_weight(const WeightState& s, std::span<const ExpertDecision> d) {
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i]) total += s.weights[i];
  }
  return total;
}

}  // namespace

StepResult aa_step(WeightState& state, std::span<const double> decisions, double ret, LossKind kind) {
  check_state(state, decisions.size());
  double total = 0.0;
  for (double w : state.weights) total += w;
  if (!(total > 0.0)) throw DomainError("aa_step: all expert weights are zero");
  double prediction = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) prediction += state.weights[i] / total * decisions[i];
  prediction = clip(prediction);
  const double learner = loss(kind, state.rho, prediction, ret);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    state.weights[i] *= multiplier(state.eta, loss(kind, state.rho, decisions[i], ret));
  }
  rescale(state);
  return {prediction, learner};
}

StepResult aa_sleeping_step(WeightState& state, std::span<const ExpertDecision> decisions, double ret,
                            LossKind kind) {
  check_state(state, decisions.size());
  const double total = awake_weight(state, decisions);
  if (!(total > 0.0)) return {0.0, loss(kind, state.rho, 0.0, ret)};
  double prediction = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (decisions[i]) prediction += state.weights[i] / total * *decisions[i];
  }
  return update_sleeping(state, decisions, clip(prediction), ret, kind);
}

std::string caa_rule_name(CaaRule r) {
  switch (r) {
    case CaaRule::Mean: return "mean";
    case CaaRule::Pen: return "pen";
    case CaaRule::PenNormalized: return "pen_normalized";
  }
  return "unknown";
}

CaaRule caa_rule_from_name(const std::string& name) {
  if (name == "mean") return CaaRule::Mean;
  if (name == "pen") return CaaRule::Pen;
  if (name == "pen_normalized") return CaaRule::PenNormalized;
  throw DomainError("unknown decision rule '" + name + "' (expected mean, pen or pen_normalized)");
}

ClusterAssignment ClusterAssignment::singletons(std::size_t experts) {
  ClusterAssignment a;
  a.cluster_of.resize(experts);
  for (std::size_t i = 0; i < experts; ++i) a.cluster_of[i] = static_cast<int>(i);
  a.num_clusters = static_cast<int>(experts);
  return a;
}

void ClusterAssignment::validate(std::size_t experts) const {
  if (cluster_of.size() != experts) throw DomainError("cluster assignment does not cover every expert");
  for (int c : cluster_of) {
    if (c < 0 || c >= num_clusters) throw DomainError("expert assigned to an out-of-range cluster");
  }
}

double caa_prediction(CaaRule rule, const ClusterAssignment& clusters, const WeightState& state,
                      std::span<const ExpertDecision> decisions) {
  check_state(state, decisions.size());
  clusters.validate(decisions.size());
  const double total = awake_weight(state, decisions);
  if (!(total > 0.0)) return 0.0;

  const auto m = static_cast<std::size_t>(clusters.num_clusters);
  std::vector<std::size_t> awake(m, 0);
  std::vector<double> sums(m, 0.0);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (!decisions[i]) continue;
    const auto c = static_cast<std::size_t>(clusters.cluster_of[i]);
    ++awake[c];
    sums[c] += *decisions[i];
  }
  double inverse_sizes = 0.0;
  for (auto n : awake) {
    if (n) inverse_sizes += 1.0 / static_cast<double>(n);
  }

  double prediction = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (!decisions[i]) continue;
    const auto c = static_cast<std::size_t>(clusters.cluster_of[i]);
    const double p = state.weights[i] / total;
    const double n = static_cast<double>(awake[c]);
    switch (rule) {
      case CaaRule::Mean: prediction += p * (sums[c] / n); break;
      case CaaRule::Pen: prediction += p * *decisions[i] / n; break;
      case CaaRule::PenNormalized: prediction += p * *decisions[i] * ((1.0 / n) / inverse_sizes); break;
    }
  }
  return clip(prediction);
}

StepResult caa_step(CaaRule rule, const ClusterAssignment& clusters, WeightState& state,
                    std::span<const ExpertDecision> decisions, double ret, LossKind kind) {
  const double prediction = caa_prediction(rule, clusters, state, decisions);
  if (!(awake_weight(state, decisions) > 0.0)) return {0.0, loss(kind, state.rho, 0.0, ret)};
  return update_sleeping(state, decisions, prediction, ret, kind);
}

std::vector<ExpertDecision> cluster_decisions(const ClusterAssignment& clusters,
                                              std::span<const ExpertDecision> decisions) {
  clusters.validate(decisions.size());
  const auto m = static_cast<std::size_t>(clusters.num_clusters);
  std::vector<double> sums(m, 0.0);
  std::vector<std::size_t> awake(m, 0);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (!decisions[i]) continue;
    const auto c = static_cast<std::size_t>(clusters.cluster_of[i]);
    sums[c] += *decisions[i];
    ++awake[c];
  }
  std::vector<ExpertDecision> out(m);
  for (std::size_t c = 0; c < m; ++c) {
    if (awake[c]) out[c] = sums[c] / static_cast<double>(awake[c]);
  }
  return out;
}

std::vector<double> ecaa_evolve(std::span<const double> weights, const FlowMap& flow, double birth_weight) {
  if (weights.size() != flow.source_sizes.size()) {
    throw DomainError("ecaa_evolve: " + std::to_string(weights.size()) + " cluster weights for a flow with " +
                      std::to_string(flow.source_sizes.size()) + " source clusters");
  }
  std::vector<std::size_t> children(weights.size(), 0);
  for (const auto& m : flow.matches) {
    if (m.source < 0 || static_cast<std::size_t>(m.source) >= weights.size() || m.target < 0 ||
        static_cast<std::size_t>(m.target) >= flow.target_sizes.size()) {
      throw DomainError("ecaa_evolve: flow references a cluster that does not exist");
    }
    ++children[static_cast<std::size_t>(m.source)];
  }
  std::vector<double> out(flow.target_sizes.size(), 0.0);
  std::vector<bool> reached(out.size(), false);
  for (const auto& m : flow.matches) {
    const auto s = static_cast<std::size_t>(m.source);
    const auto t = static_cast<std::size_t>(m.target);
    out[t] += weights[s] / static_cast<double>(children[s]);
    reached[t] = true;
  }
  for (std::size_t t = 0; t < out.size(); ++t) {
    if (!reached[t]) out[t] = birth_weight;
  }
  return out;
}

StepResult ecaa_step(WeightState& cluster_state, const ClusterAssignment& clusters,
                     std::span<const ExpertDecision> decisions, double ret, LossKind kind) {
  const auto meta = cluster_decisions(clusters, decisions);
  return aa_sleeping_step(cluster_state, meta, ret, kind);
}

double regret_bound(std::size_t experts, double eta, double c, double best_loss, std::size_t duplicates) {
  if (experts == 0 || duplicates == 0 || duplicates > experts) {
    throw DomainError("regret_bound: need 1 <= duplicates <= experts");
  }
  if (!(eta > 0.0) || !(c > 0.0)) throw DomainError("regret_bound: eta and C must be positive");
  return c * best_loss + c / eta * std::log(static_cast<double>(experts) / static_cast<double>(duplicates));
}

ClusterBound cluster_bound_advantage(std::span<const std::size_t> cardinalities,
                                     std::span<const double> cluster_losses, double eta) {
  if (cardinalities.empty() || cardinalities.size() != cluster_losses.size()) {
    throw DomainError("cluster_bound_advantage: need one loss per nonempty cluster list");
  }
  if (!(eta > 0.0)) throw DomainError("cluster_bound_advantage: eta must be positive");
  std::size_t total = 0;
  for (auto c : cardinalities) {
    if (c == 0) throw DomainError("cluster_bound_advantage: cardinalities must be positive");
    total += c;
  }
  for (double l : cluster_losses) {
    if (!std::isfinite(l)) throw DomainError("cluster_bound_advantage: losses must be finite");
  }
  const double n = static_cast<double>(total);
  const double m = static_cast<double>(cardinalities.size());
  const double best_loss = *std::min_element(cluster_losses.begin(), cluster_losses.end());

  ClusterBound b;
  b.u_minus = best_loss + std::log(m) / eta;
  b.u_star = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cardinalities.size(); ++i) {
    const double u = cluster_losses[i] + std::log(n / static_cast<double>(cardinalities[i])) / eta;
    if (u < b.u_star) {
      b.u_star = u;
      b.best_cluster = i;
    }
  }
  const double c0 = static_cast<double>(cardinalities[b.best_cluster]);
  b.advantage = c0 <= n / m * std::exp(eta * (cluster_losses[b.best_cluster] - best_loss));
  return b;
}

}  // namespace tradeclust
