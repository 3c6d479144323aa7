#include "savg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "savg/errors.hpp"

namespace savg::eval {

double ConfusionMatrix::accuracy() const {
  const size_t n = total();
  return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
}

namespace {

EvalRecord make_record(const sim::Scene& scene, const AudioClip& estimate) {
  if (estimate.size() != scene.target.size()) {
    throw InvalidInputError("evaluate: estimate for '" + scene.scene_id + "' has " +
                            std::to_string(estimate.size()) + " samples, target has " +
                            std::to_string(scene.target.size()));
  }
  EvalRecord r;
  r.scene_id = scene.scene_id;
  r.scenario = scene.scenario;
  r.si_sdr_in = si_sdr_metric(scene.target.samples, scene.mixture.samples);
  r.si_sdr_out = si_sdr_metric(scene.target.samples, estimate.samples);
  r.si_sdr_improvement = r.si_sdr_out - r.si_sdr_in;
  return r;
}

double percentile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  const double rank = p * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(rank);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

ScenarioSummary summarize_group(const std::vector<const EvalRecord*>& group) {
  ScenarioSummary s;
  s.count = group.size();
  if (group.empty()) return s;
  std::vector<double> improvements;
  improvements.reserve(group.size());
  for (const EvalRecord* r : group) {
    s.mean_in += r->si_sdr_in;
    s.mean_out += r->si_sdr_out;
    s.mean_improvement += r->si_sdr_improvement;
    improvements.push_back(r->si_sdr_improvement);
  }
  const double n = static_cast<double>(group.size());
  s.mean_in /= n;
  s.mean_out /= n;
  s.mean_improvement /= n;
  std::sort(improvements.begin(), improvements.end());
  s.p10 = percentile(improvements, 0.10);
  s.p50 = percentile(improvements, 0.50);
  s.p90 = percentile(improvements, 0.90);
  return s;
}

std::string format_db(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::vector<EvalRecord> evaluate(const std::vector<sim::Scene>& scenes,
                                 const std::function<AudioClip(const sim::Scene&)>& system) {
  if (!system) throw InvalidInputError("evaluate: no system provided");
  std::vector<EvalRecord> records;
  records.reserve(scenes.size());
  for (const sim::Scene& scene : scenes) records.push_back(make_record(scene, system(scene)));
  return records;
}

std::vector<EvalRecord> evaluate_routed(const std::vector<sim::Scene>& scenes,
                                        const cascade::ExpertBundle& bundle,
                                        cascade::Strategy strategy) {
  cascade::validate(bundle);
  std::vector<EvalRecord> records;
  records.reserve(scenes.size());
  for (const sim::Scene& scene : scenes) {
    cascade::RouteResult routed =
        cascade::route_one(cascade::to_routing_input(scene), bundle, strategy);
    EvalRecord r = make_record(scene, routed.output);
    r.decision = std::move(routed.decision);
    records.push_back(std::move(r));
  }
  return records;
}

EvalSummary summarize(const std::vector<EvalRecord>& records) {
  std::vector<const EvalRecord*> ordered;
  ordered.reserve(records.size());
  for (const EvalRecord& r : records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const EvalRecord* a, const EvalRecord* b) { return a->scene_id < b->scene_id; });

  std::vector<const EvalRecord*> speech_group, noise_group;
  bool any_decision = false;
  ConfusionMatrix cm;
  for (const EvalRecord* r : ordered) {
    (r->scenario == Scenario::Speech ? speech_group : noise_group).push_back(r);
    if (r->decision) {
      any_decision = true;
      const bool pred_noise = r->decision->final_label == Scenario::Noise;
      const bool true_noise = r->scenario == Scenario::Noise;
      if (pred_noise && true_noise) ++cm.tp;
      if (pred_noise && !true_noise) ++cm.fp;
      if (!pred_noise && true_noise) ++cm.fn;
      if (!pred_noise && !true_noise) ++cm.tn;
    }
  }
  EvalSummary s;
  s.overall = summarize_group(ordered);
  s.speech = summarize_group(speech_group);
  s.noise = summarize_group(noise_group);
  if (any_decision) s.confusion = cm;
  return s;
}

OutlierReport analyze_outliers(const std::vector<EvalRecord>& records, double threshold_db) {
  OutlierReport report;
  report.threshold_db = threshold_db;
  for (const EvalRecord& r : records) {
    if (r.si_sdr_improvement < threshold_db) {
      ++report.total;
      (r.scenario == Scenario::Speech ? report.speech : report.noise) += 1;
      report.scene_ids.push_back(r.scene_id);
    }
  }
  std::sort(report.scene_ids.begin(), report.scene_ids.end());
  return report;
}

StrategyComparison compare_strategies(const std::vector<EvalRecord>& a,
                                      const std::vector<EvalRecord>& b,
                                      double outlier_threshold_db) {
  std::map<std::string, const EvalRecord*> by_id;
  for (const EvalRecord& r : a) by_id[r.scene_id] = &r;
  if (by_id.size() != a.size() || a.size() != b.size()) {
    throw InvalidInputError("compare_strategies: record sets must pair up one-to-one");
  }
  StrategyComparison cmp;
  for (const EvalRecord& rb : b) {
    auto it = by_id.find(rb.scene_id);
    if (it == by_id.end()) {
      throw InvalidInputError("compare_strategies: scene '" + rb.scene_id +
                              "' is missing from the first record set");
    }
    const double delta = rb.si_sdr_improvement - it->second->si_sdr_improvement;
    cmp.mean_delta += delta;
    if (delta > 0.0) {
      ++cmp.wins;
    } else if (delta < 0.0) {
      ++cmp.losses;
    } else {
      ++cmp.ties;
    }
  }
  if (!b.empty()) cmp.mean_delta /= static_cast<double>(b.size());
  cmp.outlier_delta = static_cast<long>(analyze_outliers(b, outlier_threshold_db).total) -
                      static_cast<long>(analyze_outliers(a, outlier_threshold_db).total);
  return cmp;
}

std::map<std::string, Scenario> truth_map(const std::vector<sim::Scene>& scenes) {
  std::map<std::string, Scenario> truth;
  for (const sim::Scene& sc : scenes) truth[sc.scene_id] = sc.scenario;
  return truth;
}

ConfusionMatrix confusion(const std::vector<cascade::RoutingDecision>& trail,
                          const std::map<std::string, Scenario>& truth) {
  ConfusionMatrix cm;
  for (const cascade::RoutingDecision& d : trail) {
    auto it = truth.find(d.scene_id);
    if (it == truth.end()) {
      throw InvalidInputError("confusion: no ground truth for scene '" + d.scene_id + "'");
    }
    const bool pred_noise = d.final_label == Scenario::Noise;
    const bool true_noise = it->second == Scenario::Noise;
    if (pred_noise && true_noise) ++cm.tp;
    if (pred_noise && !true_noise) ++cm.fp;
    if (!pred_noise && true_noise) ++cm.fn;
    if (!pred_noise && !true_noise) ++cm.tn;
  }
  return cm;
}

std::string records_csv(const std::vector<EvalRecord>& records) {
  std::string csv = "scene_id,scenario,si_sdr_in,si_sdr_out,si_sdr_improvement,final_label,chosen_model\n";
  for (const EvalRecord& r : records) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.9f,%.9f,%.9f", r.scene_id.c_str(),
                  to_string(r.scenario), r.si_sdr_in, r.si_sdr_out, r.si_sdr_improvement);
    csv += buf;
    if (r.decision) {
      csv += ',';
      csv += to_string(r.decision->final_label);
      csv += ',';
      csv += cascade::to_string(r.decision->chosen_model);
    } else {
      csv += ",,";
    }
    csv += '\n';
  }
  return csv;
}

std::vector<EvalRecord> records_from_csv(const std::string& csv) {
  std::vector<EvalRecord> records;
  std::stringstream in(csv);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || lineno == 1) continue;  // header
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 5 || fields.size() > 7) {
      throw InvalidInputError("records csv line " + std::to_string(lineno) +
                              ": expected 5-7 columns");
    }
    while (fields.size() < 7) fields.emplace_back();
    EvalRecord r;
    r.scene_id = fields[0];
    r.scenario = parse_scenario(fields[1]);
    try {
      r.si_sdr_in = std::stod(fields[2]);
      r.si_sdr_out = std::stod(fields[3]);
      r.si_sdr_improvement = std::stod(fields[4]);
    } catch (const std::exception&) {
      throw InvalidInputError("records csv line " + std::to_string(lineno) + ": bad number");
    }
    if (!fields[5].empty()) {
      cascade::RoutingDecision d;
      d.scene_id = r.scene_id;
      d.final_label = parse_scenario(fields[5]);
      d.classifier_label = d.final_label;
      if (fields[6] == "universal") {
        d.chosen_model = cascade::ChosenModel::Universal;
      } else if (fields[6] == "expert_speech") {
        d.chosen_model = cascade::ChosenModel::ExpertSpeech;
      } else if (fields[6] == "expert_noise") {
        d.chosen_model = cascade::ChosenModel::ExpertNoise;
      } else {
        throw InvalidInputError("records csv line " + std::to_string(lineno) +
                                ": unknown model '" + fields[6] + "'");
      }
      r.decision = d;
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::string summary_text(const EvalSummary& summary) {
  auto block = [](const char* name, const ScenarioSummary& s) {
    std::string out = name;
    out += ": n=" + std::to_string(s.count);
    if (s.count > 0) {
      out += "  si_sdr_in " + format_db(s.mean_in) + " dB";
      out += "  si_sdr_out " + format_db(s.mean_out) + " dB";
      out += "  si_sdri " + format_db(s.mean_improvement) + " dB";
      out += "  (p10 " + format_db(s.p10) + ", p50 " + format_db(s.p50) + ", p90 " +
             format_db(s.p90) + ")";
    }
    out += '\n';
    return out;
  };
  std::string text = block("overall", summary.overall);
  text += block("speech ", summary.speech);
  text += block("noise  ", summary.noise);
  if (summary.confusion) {
    const ConfusionMatrix& cm = *summary.confusion;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "confusion (noise=positive): tp=%zu fp=%zu fn=%zu tn=%zu accuracy=%.4f\n",
                  cm.tp, cm.fp, cm.fn, cm.tn, cm.accuracy());
    text += buf;
  }
  return text;
}

}  // namespace savg::eval
