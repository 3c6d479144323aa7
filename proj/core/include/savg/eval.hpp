#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "savg/cascade.hpp"
#include "savg/losses.hpp"
#include "savg/simulate.hpp"

namespace savg::eval {

// Shares the loss code path exactly, so metric == -loss bit for bit.
inline double si_sdr_metric(const std::vector<double>& ref, const std::vector<double>& est) {
  return nn::si_sdr_db(ref, est);
}

struct EvalRecord {
  std::string scene_id;
  Scenario scenario = Scenario::Noise;
  double si_sdr_in = 0.0;   // mixture against the target
  double si_sdr_out = 0.0;  // system output against the target
  double si_sdr_improvement = 0.0;  // out - in
  std::optional<cascade::RoutingDecision> decision;  // cascade runs only
};

struct ScenarioSummary {
  size_t count = 0;
  double mean_in = 0.0;
  double mean_out = 0.0;
  double mean_improvement = 0.0;
  double p10 = 0.0, p50 = 0.0, p90 = 0.0;  // improvement percentiles
};

// noise = positive class
struct ConfusionMatrix {
  size_t tp = 0, fp = 0, fn = 0, tn = 0;

  size_t total() const { return tp + fp + fn + tn; }
  double accuracy() const;
};

struct EvalSummary {
  ScenarioSummary overall, speech, noise;
  std::optional<ConfusionMatrix> confusion;  // present when records carry decisions
};

// One record per scene for an arbitrary extraction system.
std::vector<EvalRecord> evaluate(const std::vector<sim::Scene>& scenes,
                                 const std::function<AudioClip(const sim::Scene&)>& system);

// Routes every scene through the cascade and attaches the decisions.
std::vector<EvalRecord> evaluate_routed(const std::vector<sim::Scene>& scenes,
                                        const cascade::ExpertBundle& bundle,
                                        cascade::Strategy strategy);

// Records are re-sorted by scene_id first, so aggregation is order-free.
// Percentiles use linear interpolation between order statistics.
EvalSummary summarize(const std::vector<EvalRecord>& records);

struct OutlierReport {
  double threshold_db = 0.0;
  size_t total = 0;
  size_t speech = 0, noise = 0;
  std::vector<std::string> scene_ids;  // sorted
};

// Scenes whose SI-SDR improvement falls below the threshold.
OutlierReport analyze_outliers(const std::vector<EvalRecord>& records, double threshold_db);

struct StrategyComparison {
  size_t wins = 0, losses = 0, ties = 0;  // b vs a, per-scene improvement
  double mean_delta = 0.0;                // mean(b - a) improvement
  long outlier_delta = 0;                 // outliers(b) - outliers(a)
};

// Pairs records by scene_id (sets must match) and reports how `b` moved
// relative to `a`.
StrategyComparison compare_strategies(const std::vector<EvalRecord>& a,
                                      const std::vector<EvalRecord>& b, double outlier_threshold_db);

// Decisions are matched to ground truth by scene_id; unknown or missing ids
// are invalid input. Positive class = noise, judged on final_label.
ConfusionMatrix confusion(const std::vector<cascade::RoutingDecision>& trail,
                          const std::map<std::string, Scenario>& truth);

std::map<std::string, Scenario> truth_map(const std::vector<sim::Scene>& scenes);

// scene_id,scenario,si_sdr_in,si_sdr_out,si_sdr_improvement[,final_label,chosen_model]
std::string records_csv(const std::vector<EvalRecord>& records);

// Inverse of records_csv (decision columns, when present, restore only the
// final label and chosen model).
std::vector<EvalRecord> records_from_csv(const std::string& csv);

std::string summary_text(const EvalSummary& summary);

}  // namespace savg::eval
