#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "covct/volume_io.hpp"

namespace covct {

// scan_id -> probability of COVID, plus a tag naming the producing model.
struct PredictionTable {
  std::map<std::string, double> entries;
  std::string source_tag;
};

struct PseudoLabel {
  Label label = Label::NonCovid;
  double confidence = 0.0;  // max(p, 1-p), >= the selection threshold
};

struct PseudoLabelSet {
  std::map<std::string, PseudoLabel> entries;
};

struct MetricsReport {
  double f1_covid = 0.0;
  double f1_non_covid = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  long long n_scored = 0;
};

inline constexpr double kDefaultPseudoLabelThreshold = 0.7;
inline constexpr double kDefaultDecisionThreshold = 0.5;

// Per-scan arithmetic mean. All tables must cover the same scan_ids;
// a mismatch reports the symmetric difference. Means are clamped into the
// per-scan [min, max] envelope so the k-copies case is exact.
PredictionTable average_ensemble(const std::vector<PredictionTable>& tables);

// Scans whose confidence max(p, 1-p) reaches the threshold, labeled COVID
// iff p >= 0.5. Threshold must lie in (0.5, 1].
PseudoLabelSet select_pseudo_labels(const PredictionTable& t,
                                    double threshold = kDefaultPseudoLabelThreshold);

// Keeps exactly the scans with max(p, 1-p) >= threshold.
PredictionTable confidence_filter(const PredictionTable& t, double threshold);

// Two-class macro F1 at the decision threshold (predicted COVID iff
// p >= threshold). A class with an empty F1 denominator scores 0.
MetricsReport macro_f1(const PredictionTable& pred,
                       const std::map<std::string, Label>& truth,
                       double decision_threshold = kDefaultDecisionThreshold);

// Labeled manifest plus pseudo-labeled scans (flagged pseudo_labeled, label
// from the pseudo-label). Paths for pseudo entries are looked up in
// `unlabeled` when provided. Throws on scan_id collisions.
ScanManifest build_finetune_manifest(const ScanManifest& labeled,
                                     const PseudoLabelSet& pseudo,
                                     const ScanManifest* unlabeled = nullptr);

// Prediction CSV: scan_id,p_covid
PredictionTable load_predictions(const std::string& path, const std::string& tag = "");
void save_predictions(const PredictionTable& t, const std::string& path);

// Pseudo-label CSV: scan_id,label,confidence
PseudoLabelSet load_pseudo_labels(const std::string& path);
void save_pseudo_labels(const PseudoLabelSet& s, const std::string& path);

nlohmann::json metrics_to_json(const MetricsReport& m);

// Truth labels from any CSV whose header has scan_id and label columns
// (manifests, fold CSVs and phantom truth CSVs all qualify). Rows with an
// empty label field are skipped.
std::map<std::string, Label> load_truth_labels(const std::string& path);

}  // namespace covct
