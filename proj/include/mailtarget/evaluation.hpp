#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mailtarget/activity.hpp"
#include "mailtarget/metrics.hpp"
#include "mailtarget/selector.hpp"
#include "mailtarget/simulator.hpp"
#include "mailtarget/trends.hpp"

namespace mailtarget {

struct EvaluationOptions {
  GraphOptions graph;
  double threshold = kDefaultThreshold;
  // Absolute proposed budget; when unset, budget_fraction of the baseline volume.
  std::optional<std::size_t> budget;
  double budget_fraction = 0.3;
  std::size_t baseline_items = 3;
  std::uint64_t seed = 42;
};

struct Evaluation {
  TransitionGraph graph;
  BatchPlan control_plan;
  BatchPlan proposed_plan;
  std::vector<FunnelOutcome> control_outcomes;
  std::vector<FunnelOutcome> proposed_outcomes;
  FunnelMetrics control;
  FunnelMetrics proposed;
  ComparisonReport report;
};

// Runs the control policy and the proposed selector for one send window,
// replays both against the planted ground truth and compares their funnels.
inline Evaluation evaluate(const Corpus& corpus, std::span<const CandidateList> candidates,
                           const GroundTruth& truth, const ScoringWindow& window,
                           const EvaluationOptions& options) {
  Evaluation ev;
  ev.graph = build_transition_graph(corpus, options.graph);
  const auto profiles = build_activity_profiles(corpus);

  ev.control_plan = baseline_select(corpus, window.today, options.baseline_items);
  const std::size_t budget =
      options.budget.value_or(static_cast<std::size_t>(std::floor(
          options.budget_fraction * static_cast<double>(ev.control_plan.selections.size()))));
  ev.proposed_plan = select_batch(score_candidates(candidates, corpus, profiles, ev.graph, window),
                                  budget, options.threshold, window.today);

  ev.control_outcomes = simulate_responses(ev.control_plan, corpus, truth, window, options.seed);
  ev.proposed_outcomes = simulate_responses(ev.proposed_plan, corpus, truth, window, options.seed);
  ev.control = compute_funnel(ev.control_outcomes);
  ev.proposed = compute_funnel(ev.proposed_outcomes);
  ev.report = compare_report(ev.control, ev.proposed);
  return ev;
}

}  // namespace mailtarget
