#include "covct/ensemble_metrics.hpp"

#include <algorithm>
#include <cmath>

#include "covct/csv.hpp"

using nlohmann::json;

namespace covct {

namespace {

void check_threshold(double threshold) {
  if (!(threshold > 0.5 && threshold <= 1.0)) {
    throw DataError("confidence threshold must lie in (0.5, 1], got " +
                    csv::format_double(threshold));
  }
}

double confidence_of(double p) { return std::max(p, 1.0 - p); }

std::string describe_id_mismatch(const PredictionTable& a, const PredictionTable& b) {
  std::string missing;
  int shown = 0;
  auto note = [&](const std::string& id, const char* where) {
    if (shown < 8) {
      missing += (missing.empty() ? "" : ", ");
      missing += id + std::string(" (") + where + ")";
    }
    shown++;
  };
  for (const auto& [id, p] : a.entries) {
    (void)p;
    if (!b.entries.count(id)) note(id, "first only");
  }
  for (const auto& [id, p] : b.entries) {
    (void)p;
    if (!a.entries.count(id)) note(id, "second only");
  }
  if (shown > 8) missing += ", ... (" + std::to_string(shown) + " total)";
  return missing;
}

double f1_from_counts(long long tp, long long fp, long long fn) {
  const long long denom = 2 * tp + fp + fn;
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

PredictionTable average_ensemble(const std::vector<PredictionTable>& tables) {
  if (tables.empty()) throw DataError("average_ensemble requires at least one table");

  const PredictionTable& first = tables[0];
  for (size_t k = 1; k < tables.size(); ++k) {
    if (tables[k].entries.size() != first.entries.size() ||
        !std::equal(first.entries.begin(), first.entries.end(),
                    tables[k].entries.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
      throw DataError("prediction tables disagree on scan_ids: " +
                      describe_id_mismatch(first, tables[k]));
    }
  }

  PredictionTable out;
  out.source_tag = "ensemble";
  for (const auto& [id, p0] : first.entries) {
    double sum = 0.0;
    double lo = p0;
    double hi = p0;
    for (const auto& t : tables) {
      const double p = t.entries.at(id);
      sum += p;
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    const double mean = sum / static_cast<double>(tables.size());
    out.entries[id] = std::clamp(mean, lo, hi);
  }
  return out;
}

PseudoLabelSet select_pseudo_labels(const PredictionTable& t, double threshold) {
  check_threshold(threshold);
  PseudoLabelSet out;
  for (const auto& [id, p] : t.entries) {
    const double conf = confidence_of(p);
    if (conf >= threshold) {
      out.entries[id] = {p >= 0.5 ? Label::Covid : Label::NonCovid, conf};
    }
  }
  return out;
}

PredictionTable confidence_filter(const PredictionTable& t, double threshold) {
  check_threshold(threshold);
  PredictionTable out;
  out.source_tag = t.source_tag;
  for (const auto& [id, p] : t.entries) {
    if (confidence_of(p) >= threshold) out.entries[id] = p;
  }
  return out;
}

MetricsReport macro_f1(const PredictionTable& pred,
                       const std::map<std::string, Label>& truth,
                       double decision_threshold) {
  MetricsReport m;
  for (const auto& [id, p] : pred.entries) {
    const auto it = truth.find(id);
    if (it == truth.end()) {
      throw DataError("no truth label for predicted scan '" + id + "'");
    }
    const bool pred_covid = p >= decision_threshold;
    const bool is_covid = it->second == Label::Covid;
    if (pred_covid && is_covid) m.tp++;
    else if (pred_covid && !is_covid) m.fp++;
    else if (!pred_covid && is_covid) m.fn++;
    else m.tn++;
  }
  m.n_scored = m.tp + m.fp + m.fn + m.tn;
  m.f1_covid = f1_from_counts(m.tp, m.fp, m.fn);
  m.f1_non_covid = f1_from_counts(m.tn, m.fn, m.fp);
  m.macro_f1 = (m.f1_covid + m.f1_non_covid) / 2.0;
  m.accuracy = m.n_scored == 0
                   ? 0.0
                   : static_cast<double>(m.tp + m.tn) / static_cast<double>(m.n_scored);
  return m;
}

ScanManifest build_finetune_manifest(const ScanManifest& labeled,
                                     const PseudoLabelSet& pseudo,
                                     const ScanManifest* unlabeled) {
  ScanManifest out;
  out.entries = labeled.entries;
  for (const auto& [id, pl] : pseudo.entries) {
    if (labeled.find(id) != nullptr) {
      throw DataError("pseudo-labeled scan_id '" + id + "' collides with a labeled scan");
    }
    ManifestEntry e;
    e.scan_id = id;
    e.label = pl.label;
    e.pseudo_labeled = true;
    if (unlabeled != nullptr) {
      const ManifestEntry* src = unlabeled->find(id);
      if (src == nullptr) {
        throw DataError("pseudo-labeled scan_id '" + id + "' not found in the unlabeled manifest");
      }
      e.path = src->path;
    }
    out.entries.push_back(std::move(e));
  }
  out.check_unique_ids();
  return out;
}

PredictionTable load_predictions(const std::string& path, const std::string& tag) {
  const auto lines = csv::read_lines(path);
  if (lines.empty() || lines[0] != "scan_id,p_covid") {
    throw DataError("prediction CSV header must be 'scan_id,p_covid': " + path);
  }
  PredictionTable t;
  t.source_tag = tag.empty() ? path : tag;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split_line(lines[i]);
    if (f.size() != 2) {
      throw DataError("prediction CSV row " + std::to_string(i + 1) + " malformed: " + path);
    }
    const double p = csv::parse_double(f[1], "prediction CSV " + path);
    if (!(p >= 0.0 && p <= 1.0)) {
      throw DataError("probability out of [0,1] for scan '" + f[0] + "' in " + path);
    }
    if (!t.entries.emplace(f[0], p).second) {
      throw DataError("duplicate scan_id '" + f[0] + "' in " + path);
    }
  }
  return t;
}

void save_predictions(const PredictionTable& t, const std::string& path) {
  std::string out = "scan_id,p_covid\n";
  for (const auto& [id, p] : t.entries) {
    out += id;
    out += ',';
    out += csv::format_double(p);
    out += '\n';
  }
  csv::write_text_file(path, out);
}

PseudoLabelSet load_pseudo_labels(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty() || lines[0] != "scan_id,label,confidence") {
    throw DataError("pseudo-label CSV header must be 'scan_id,label,confidence': " + path);
  }
  PseudoLabelSet s;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split_line(lines[i]);
    if (f.size() != 3) {
      throw DataError("pseudo-label CSV row " + std::to_string(i + 1) + " malformed: " + path);
    }
    PseudoLabel pl;
    pl.label = label_from_string(f[1]);
    pl.confidence = csv::parse_double(f[2], "pseudo-label CSV " + path);
    if (!(pl.confidence > 0.5 && pl.confidence <= 1.0)) {
      throw DataError("pseudo-label confidence out of (0.5, 1] for scan '" + f[0] +
                      "' in " + path);
    }
    if (!s.entries.emplace(f[0], pl).second) {
      throw DataError("duplicate scan_id '" + f[0] + "' in " + path);
    }
  }
  return s;
}

void save_pseudo_labels(const PseudoLabelSet& s, const std::string& path) {
  std::string out = "scan_id,label,confidence\n";
  for (const auto& [id, pl] : s.entries) {
    out += id;
    out += ',';
    out += label_to_string(pl.label);
    out += ',';
    out += csv::format_double(pl.confidence);
    out += '\n';
  }
  csv::write_text_file(path, out);
}

json metrics_to_json(const MetricsReport& m) {
  return {{"f1_covid", m.f1_covid},
          {"f1_non_covid", m.f1_non_covid},
          {"macro_f1", m.macro_f1},
          {"accuracy", m.accuracy},
          {"confusion", {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}}},
          {"n_scored", m.n_scored}};
}

std::map<std::string, Label> load_truth_labels(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw DataError("empty truth file: " + path);
  const auto header = csv::split_line(lines[0]);
  const auto id_it = std::find(header.begin(), header.end(), "scan_id");
  const auto label_it = std::find(header.begin(), header.end(), "label");
  if (id_it == header.end() || label_it == header.end()) {
    throw DataError("truth CSV needs scan_id and label columns: " + path);
  }
  const size_t id_col = static_cast<size_t>(id_it - header.begin());
  const size_t label_col = static_cast<size_t>(label_it - header.begin());

  std::map<std::string, Label> truth;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split_line(lines[i]);
    if (f.size() != header.size()) {
      throw DataError("truth CSV row " + std::to_string(i + 1) + " malformed: " + path);
    }
    const auto label = label_from_csv_field(f[label_col]);
    if (!label) continue;
    if (!truth.emplace(f[id_col], *label).second) {
      throw DataError("duplicate scan_id '" + f[id_col] + "' in " + path);
    }
  }
  return truth;
}

}  // namespace covct
