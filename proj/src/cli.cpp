#include "covct/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "covct/baseline_classifier.hpp"
#include "covct/csv.hpp"
#include "covct/dataset_splits.hpp"
#include "covct/ensemble_metrics.hpp"
#include "covct/lung_segmentation.hpp"
#include "covct/parallel.hpp"
#include "covct/phantoms.hpp"
#include "covct/resample_augment.hpp"
#include "covct/rng.hpp"
#include "covct/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace covct {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

Volume load_scan(const ManifestEntry& e) {
  Volume v = fs::is_directory(e.path) ? load_slice_stack(e.path) : read_volume(e.path);
  v.scan_id = e.scan_id;  // the manifest id wins over on-disk naming
  return v;
}

const Box3D& crop_for_mode(const CropPlan& plan, const std::string& mode) {
  if (mode == "both") return plan.both;
  if (mode == "left") return plan.left;
  if (mode == "right") return plan.right;
  throw DataError("unknown crop mode '" + mode + "' (want both|left|right)");
}

// Writes scan_id,error rows for failed scans and reports them on stderr.
// Returns the number of failures.
size_t report_batch_errors(const ScanManifest& manifest,
                           const std::vector<std::string>& errors,
                           const std::string& errors_csv_path) {
  size_t failed = 0;
  std::string out = "scan_id,error\n";
  for (size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) continue;
    failed++;
    std::string msg = errors[i];
    for (char& c : msg) {
      if (c == ',' || c == '\n') c = ';';
    }
    out += manifest.entries[i].scan_id + "," + msg + "\n";
    std::cerr << "error: scan '" << manifest.entries[i].scan_id
              << "': " << errors[i] << "\n";
  }
  if (failed > 0) {
    csv::write_text_file(errors_csv_path, out);
    std::cerr << failed << " scan(s) failed; details in " << errors_csv_path << "\n";
  }
  return failed;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path + ": " + e.what());
  }
}

// ---- subcommand implementations ------------------------------------------

struct BatchIoOpts {
  std::string manifest;
  std::string output;
  int workers = 1;
};

int cmd_ingest(const BatchIoOpts& o) {
  const ScanManifest in = load_manifest(o.manifest);
  fs::create_directories(o.output);

  ScanManifest out_manifest;
  out_manifest.entries.resize(in.entries.size());
  const auto errors = run_batch(in.entries.size(), o.workers, [&](size_t i) {
    const auto& e = in.entries[i];
    Volume v = load_slice_stack(e.path);
    v.scan_id = e.scan_id;
    const std::string base = (fs::path(o.output) / e.scan_id).string();
    write_volume(v, base);
    out_manifest.entries[i] = {e.scan_id, base, e.label, e.pseudo_labeled};
  });

  ScanManifest kept;
  for (size_t i = 0; i < in.entries.size(); ++i) {
    if (errors[i].empty()) kept.entries.push_back(out_manifest.entries[i]);
  }
  save_manifest(kept, (fs::path(o.output) / "manifest.csv").string());
  const size_t failed =
      report_batch_errors(in, errors, (fs::path(o.output) / "errors.csv").string());
  return failed == 0 ? kExitOk : kExitData;
}

struct PhantomOpts {
  int count = 0;
  uint64_t seed = 1;
  double positive_fraction = 0.5;
  std::string output;
  DatasetOptions dataset;
};

int cmd_phantom(const PhantomOpts& o) {
  generate_dataset(o.count, o.seed, o.positive_fraction, o.output, o.dataset);
  std::cout << "wrote " << o.count << " phantoms to " << o.output << "\n";
  return kExitOk;
}

int cmd_segment(const BatchIoOpts& o) {
  const ScanManifest in = load_manifest(o.manifest);
  fs::create_directories(o.output);

  const auto errors = run_batch(in.entries.size(), o.workers, [&](size_t i) {
    const auto& e = in.entries[i];
    const Volume v = load_scan(e);
    const SegmentationResult r = segment_scan(v);
    const json report = segmentation_report(e.scan_id, r);
    csv::write_text_file(
        (fs::path(o.output) / (e.scan_id + ".segmentation.json")).string(),
        report.dump(2) + "\n");
  });
  const size_t failed =
      report_batch_errors(in, errors, (fs::path(o.output) / "errors.csv").string());
  return failed == 0 ? kExitOk : kExitData;
}

struct CropOpts {
  std::string manifest;
  std::string segmentation_dir;
  std::string mode = "both";
  std::string output;
  int workers = 1;
};

int cmd_crop(const CropOpts& o) {
  const ScanManifest in = load_manifest(o.manifest);
  fs::create_directories(o.output);

  ScanManifest out_manifest;
  out_manifest.entries.resize(in.entries.size());
  const auto errors = run_batch(in.entries.size(), o.workers, [&](size_t i) {
    const auto& e = in.entries[i];
    const Volume v = load_scan(e);
    const json report = read_json_file(
        (fs::path(o.segmentation_dir) / (e.scan_id + ".segmentation.json")).string());
    const SegmentationResult r = parse_segmentation_report(report);
    const Volume cropped = apply_crop(v, crop_for_mode(r.crops, o.mode));
    const std::string base = (fs::path(o.output) / e.scan_id).string();
    write_volume(cropped, base);
    out_manifest.entries[i] = {e.scan_id, base, e.label, e.pseudo_labeled};
  });

  ScanManifest kept;
  for (size_t i = 0; i < in.entries.size(); ++i) {
    if (errors[i].empty()) kept.entries.push_back(out_manifest.entries[i]);
  }
  save_manifest(kept, (fs::path(o.output) / "manifest.csv").string());
  const size_t failed =
      report_batch_errors(in, errors, (fs::path(o.output) / "errors.csv").string());
  return failed == 0 ? kExitOk : kExitData;
}

struct ResampleOpts {
  std::string manifest;
  std::string size_preset = "both";
  std::string output;
  int workers = 1;
};

int cmd_resample(const ResampleOpts& o) {
  const ScanManifest in = load_manifest(o.manifest);
  const TargetSize target = target_size_from_name(o.size_preset);
  fs::create_directories(o.output);

  ScanManifest out_manifest;
  out_manifest.entries.resize(in.entries.size());
  const auto errors = run_batch(in.entries.size(), o.workers, [&](size_t i) {
    const auto& e = in.entries[i];
    const Volume v = load_scan(e);
    const Volume r = resample_trilinear(v, target);
    const std::string base = (fs::path(o.output) / e.scan_id).string();
    write_volume(r, base);
    out_manifest.entries[i] = {e.scan_id, base, e.label, e.pseudo_labeled};
  });

  ScanManifest kept;
  for (size_t i = 0; i < in.entries.size(); ++i) {
    if (errors[i].empty()) kept.entries.push_back(out_manifest.entries[i]);
  }
  save_manifest(kept, (fs::path(o.output) / "manifest.csv").string());
  const size_t failed =
      report_batch_errors(in, errors, (fs::path(o.output) / "errors.csv").string());
  return failed == 0 ? kExitOk : kExitData;
}

struct AugmentOpts {
  std::string manifest;
  std::string output;
  uint64_t seed = 1;
  int workers = 1;
};

int cmd_augment(const AugmentOpts& o) {
  const ScanManifest in = load_manifest(o.manifest);
  fs::create_directories(o.output);

  ScanManifest out_manifest;
  out_manifest.entries.resize(in.entries.size() * 2);
  const auto errors = run_batch(in.entries.size(), o.workers, [&](size_t i) {
    const auto& e = in.entries[i];
    const Volume v = load_scan(e);
    std::vector<Volume> views = expand_training_views(v);
    views[1].scan_id = e.scan_id + "__sag";
    for (size_t k = 0; k < views.size(); ++k) {
      const Volume jittered =
          jitter_brightness_contrast(views[k], derive_stream(o.seed, 2 * i + k));
      const std::string base = (fs::path(o.output) / jittered.scan_id).string();
      write_volume(jittered, base);
      out_manifest.entries[2 * i + k] = {jittered.scan_id, base, e.label,
                                         e.pseudo_labeled};
    }
  });

  ScanManifest kept;
  for (size_t i = 0; i < in.entries.size(); ++i) {
    if (errors[i].empty()) {
      kept.entries.push_back(out_manifest.entries[2 * i]);
      kept.entries.push_back(out_manifest.entries[2 * i + 1]);
    }
  }
  save_manifest(kept, (fs::path(o.output) / "manifest.csv").string());
  const size_t failed =
      report_batch_errors(in, errors, (fs::path(o.output) / "errors.csv").string());
  return failed == 0 ? kExitOk : kExitData;
}

struct SplitOpts {
  std::string scheme = "challenge2";
  std::string train_manifest;
  std::string val_manifest;
  std::string manifest;
  uint64_t seed = 1;
  std::string output;
};

int cmd_split(const SplitOpts& o) {
  FoldAssignment fa;
  if (o.scheme == "challenge1") {
    if (o.train_manifest.empty() || o.val_manifest.empty()) {
      throw DataError("split --scheme challenge1 needs --train and --val");
    }
    fa = split_challenge1(load_manifest(o.train_manifest),
                          load_manifest(o.val_manifest), o.seed);
  } else if (o.scheme == "challenge2") {
    if (o.manifest.empty()) {
      throw DataError("split --scheme challenge2 needs --manifest");
    }
    fa = split_challenge2(load_manifest(o.manifest), o.seed);
  } else {
    throw DataError("unknown scheme '" + o.scheme + "' (want challenge1|challenge2)");
  }
  save_folds(fa, o.output);
  std::cout << "assigned " << fa.entries.size() << " scans to " << kFoldCount
            << " folds\n";
  return kExitOk;
}

struct EnsembleOpts {
  std::vector<std::string> pred_paths;
  std::string output;
  std::string tag = "ensemble";
};

int cmd_ensemble(const EnsembleOpts& o) {
  std::vector<PredictionTable> tables;
  tables.reserve(o.pred_paths.size());
  for (const auto& p : o.pred_paths) tables.push_back(load_predictions(p));
  PredictionTable avg = average_ensemble(tables);
  avg.source_tag = o.tag;
  save_predictions(avg, o.output);
  return kExitOk;
}

struct PseudoLabelOpts {
  std::string pred;
  double threshold = kDefaultPseudoLabelThreshold;
  std::string output;
};

int cmd_pseudolabel(const PseudoLabelOpts& o) {
  const PredictionTable t = load_predictions(o.pred);
  const PseudoLabelSet s = select_pseudo_labels(t, o.threshold);
  save_pseudo_labels(s, o.output);
  std::cout << s.entries.size() << " of " << t.entries.size()
            << " predictions at confidence >= " << csv::format_double(o.threshold)
            << "\n";
  return kExitOk;
}

struct FinetuneManifestOpts {
  std::string labeled;
  std::string pseudo;
  std::string unlabeled;
  std::string output;
};

int cmd_finetune_manifest(const FinetuneManifestOpts& o) {
  const ScanManifest labeled = load_manifest(o.labeled);
  const PseudoLabelSet pseudo = load_pseudo_labels(o.pseudo);
  const ScanManifest unlabeled = load_manifest(o.unlabeled);
  const ScanManifest merged = build_finetune_manifest(labeled, pseudo, &unlabeled);
  save_manifest(merged, o.output);
  std::cout << merged.entries.size() << " entries (" << labeled.entries.size()
            << " labeled + " << pseudo.entries.size() << " pseudo-labeled)\n";
  return kExitOk;
}

struct FeaturesOpts {
  std::string manifest;
  std::string output;
  int workers = 1;
};

int cmd_features(const FeaturesOpts& o) {
  const ScanManifest in = load_manifest(o.manifest);
  std::vector<std::pair<std::string, FeatureVector>> rows(in.entries.size());
  const auto errors = run_batch(in.entries.size(), o.workers, [&](size_t i) {
    const Volume v = load_scan(in.entries[i]);
    rows[i] = {in.entries[i].scan_id, extract_features(v)};
  });

  std::vector<std::pair<std::string, FeatureVector>> kept;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (errors[i].empty()) kept.push_back(rows[i]);
  }
  save_features_csv(kept, o.output);
  const size_t failed = report_batch_errors(in, errors, o.output + ".errors.csv");
  return failed == 0 ? kExitOk : kExitData;
}

struct TrainOpts {
  std::string features;
  std::string labels;
  int epochs = 300;
  double lr = 0.5;
  double l2 = 1e-4;
  uint64_t seed = 1;
  std::string output;
};

int cmd_train_baseline(const TrainOpts& o) {
  const auto rows = load_features_csv(o.features);
  const auto truth = load_truth_labels(o.labels);

  std::vector<FeatureVector> X;
  std::vector<Label> y;
  for (const auto& [id, f] : rows) {
    const auto it = truth.find(id);
    if (it == truth.end()) {
      throw DataError("no label for scan '" + id + "' in " + o.labels);
    }
    X.push_back(f);
    y.push_back(it->second);
  }
  const LinearModel m = train(X, y, o.epochs, o.lr, o.l2, o.seed);
  save_model(m, o.output);
  std::cout << "trained on " << X.size() << " scans, final data loss "
            << csv::format_double(logistic_loss(X, y, m.weights, m.bias, 0.0))
            << "\n";
  return kExitOk;
}

struct PredictOpts {
  std::string model;
  std::string features;
  std::string output;
  std::string tag;
};

int cmd_predict_baseline(const PredictOpts& o) {
  const LinearModel m = load_model(o.model);
  const auto rows = load_features_csv(o.features);
  PredictionTable t;
  t.source_tag = o.tag.empty() ? o.model : o.tag;
  for (const auto& [id, f] : rows) {
    if (!t.entries.emplace(id, predict(m, f)).second) {
      throw DataError("duplicate scan_id '" + id + "' in " + o.features);
    }
  }
  save_predictions(t, o.output);
  return kExitOk;
}

struct ScoreOpts {
  std::string pred;
  std::string truth;
  double threshold = kDefaultDecisionThreshold;
  std::string output;
};

int cmd_score(const ScoreOpts& o) {
  const PredictionTable pred = load_predictions(o.pred);
  const auto truth = load_truth_labels(o.truth);
  const MetricsReport m = macro_f1(pred, truth, o.threshold);
  const json j = metrics_to_json(m);
  std::cout << j.dump(2) << "\n";
  if (!o.output.empty()) csv::write_text_file(o.output, j.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

void PipelineConfig::validate() const {
  if (manifest.empty()) throw DataError("pipeline config: manifest is required");
  if (output_dir.empty()) throw DataError("pipeline config: output_dir is required");
  if (crop_mode != "both" && crop_mode != "left" && crop_mode != "right") {
    throw DataError("pipeline config: crop_mode must be both|left|right");
  }
  target_size_from_name(size_preset);
  if (!(threshold > 0.5 && threshold <= 1.0)) {
    throw DataError("pipeline config: threshold must lie in (0.5, 1]");
  }
  if (workers < 1) throw DataError("pipeline config: workers must be >= 1");
  if (epochs < 1) throw DataError("pipeline config: epochs must be >= 1");
}

PipelineConfig pipeline_config_from_json_file(const std::string& path) {
  const json j = read_json_file(path);
  PipelineConfig c;
  try {
    c.manifest = j.value("manifest", c.manifest);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.crop_mode = j.value("crop_mode", c.crop_mode);
    c.size_preset = j.value("size_preset", c.size_preset);
    c.folds_file = j.value("folds_file", c.folds_file);
    c.seed = j.value("seed", c.seed);
    c.threshold = j.value("threshold", c.threshold);
    c.workers = j.value("workers", c.workers);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.l2 = j.value("l2", c.l2);
  } catch (const json::exception& e) {
    throw DataError("malformed pipeline config " + path + ": " + e.what());
  }
  return c;
}

int run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  const fs::path out(cfg.output_dir);
  fs::create_directories(out / "segmentation");
  fs::create_directories(out / "models");
  fs::create_directories(out / "predictions");

  const ScanManifest manifest = load_manifest(cfg.manifest);
  const size_t n = manifest.entries.size();
  const TargetSize target = target_size_from_name(cfg.size_preset);

  // Per-scan preprocessing: load -> segment -> crop -> resample -> features.
  // Only the 35-float feature vector survives per scan, so the batch stays
  // small regardless of volume sizes.
  std::vector<FeatureVector> features(n);
  std::vector<char> fallback_flags(n, 0);
  const auto errors = run_batch(n, cfg.workers, [&](size_t i) {
    const auto& e = manifest.entries[i];
    const Volume v = load_scan(e);
    const SegmentationResult seg = segment_scan(v);
    csv::write_text_file(
        (out / "segmentation" / (e.scan_id + ".segmentation.json")).string(),
        segmentation_report(e.scan_id, seg).dump(2) + "\n");
    fallback_flags[i] = seg.fallback ? 1 : 0;
    const Volume cropped = apply_crop(v, crop_for_mode(seg.crops, cfg.crop_mode));
    const Volume resampled = resample_trilinear(cropped, target);
    features[i] = extract_features(resampled);
  });

  json error_list = json::array();
  std::vector<size_t> labeled_idx;
  std::vector<size_t> unlabeled_idx;
  size_t fallbacks = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      error_list.push_back({{"scan_id", manifest.entries[i].scan_id},
                            {"stage", "preprocess"},
                            {"error", errors[i]}});
      std::cerr << "error: scan '" << manifest.entries[i].scan_id
                << "': " << errors[i] << "\n";
      continue;
    }
    fallbacks += fallback_flags[i];
    (manifest.entries[i].label ? labeled_idx : unlabeled_idx).push_back(i);
  }
  if (labeled_idx.empty()) {
    throw DataError("pipeline: no usable labeled scans after preprocessing");
  }

  // Fold assignment over the usable labeled scans.
  FoldAssignment folds;
  if (!cfg.folds_file.empty()) {
    folds = load_folds(cfg.folds_file);
  } else {
    ScanManifest labeled_manifest;
    for (const size_t i : labeled_idx) labeled_manifest.entries.push_back(manifest.entries[i]);
    folds = split_challenge2(labeled_manifest, cfg.seed);
    save_folds(folds, (out / "folds.csv").string());
  }
  std::vector<int> fold_of(n, -1);
  for (const size_t i : labeled_idx) {
    fold_of[i] = folds.fold_of(manifest.entries[i].scan_id);
  }

  std::map<std::string, Label> truth;
  for (const size_t i : labeled_idx) {
    truth[manifest.entries[i].scan_id] = *manifest.entries[i].label;
  }

  // Per-fold training, held-out predictions, and unlabeled predictions.
  std::vector<LinearModel> models(kFoldCount);
  PredictionTable pre_cv;
  pre_cv.source_tag = "baseline_cv";
  std::vector<PredictionTable> unlabeled_tables(kFoldCount);
  for (int f = 0; f < kFoldCount; ++f) {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    for (const size_t i : labeled_idx) {
      if (fold_of[i] != f) {
        X.push_back(features[i]);
        y.push_back(*manifest.entries[i].label);
      }
    }
    models[f] = train(X, y, cfg.epochs, cfg.lr, cfg.l2,
                      derive_stream(cfg.seed, 1000 + static_cast<uint64_t>(f)));
    save_model(models[f], (out / "models" / ("fold" + std::to_string(f) + ".json")).string());

    for (const size_t i : labeled_idx) {
      if (fold_of[i] == f) {
        pre_cv.entries[manifest.entries[i].scan_id] = predict(models[f], features[i]);
      }
    }
    unlabeled_tables[f].source_tag = "fold" + std::to_string(f);
    for (const size_t i : unlabeled_idx) {
      unlabeled_tables[f].entries[manifest.entries[i].scan_id] =
          predict(models[f], features[i]);
    }
  }
  save_predictions(pre_cv, (out / "predictions" / "cv_pre.csv").string());

  const MetricsReport metrics_pre = macro_f1(pre_cv, truth);
  const MetricsReport metrics_pre_filtered =
      macro_f1(confidence_filter(pre_cv, cfg.threshold), truth);

  // Ensemble over fold models on the unlabeled scans, then pseudo-labels.
  PseudoLabelSet pseudo;
  if (!unlabeled_idx.empty()) {
    const PredictionTable ensembled = average_ensemble(unlabeled_tables);
    save_predictions(ensembled,
                     (out / "predictions" / "unlabeled_ensemble.csv").string());
    pseudo = select_pseudo_labels(ensembled, cfg.threshold);
  }
  save_pseudo_labels(pseudo, (out / "pseudo_labels.csv").string());

  std::map<std::string, size_t> index_of;
  for (const size_t i : unlabeled_idx) index_of[manifest.entries[i].scan_id] = i;

  // Fine-tune each fold model on its training folds plus the pseudo-labeled
  // scans, then re-predict the held-out fold.
  PredictionTable post_cv;
  post_cv.source_tag = "baseline_cv_finetuned";
  for (int f = 0; f < kFoldCount; ++f) {
    std::vector<FeatureVector> X;
    std::vector<Label> y;
    for (const size_t i : labeled_idx) {
      if (fold_of[i] != f) {
        X.push_back(features[i]);
        y.push_back(*manifest.entries[i].label);
      }
    }
    for (const auto& [id, pl] : pseudo.entries) {
      X.push_back(features[index_of.at(id)]);
      y.push_back(pl.label);
    }
    const LinearModel tuned = fine_tune(models[f], X, y);
    save_model(tuned,
               (out / "models" / ("fold" + std::to_string(f) + "_finetuned.json")).string());
    for (const size_t i : labeled_idx) {
      if (fold_of[i] == f) {
        post_cv.entries[manifest.entries[i].scan_id] = predict(tuned, features[i]);
      }
    }
  }
  save_predictions(post_cv, (out / "predictions" / "cv_post.csv").string());
  const MetricsReport metrics_post = macro_f1(post_cv, truth);

  csv::write_text_file((out / "metrics_pre.json").string(),
                       metrics_to_json(metrics_pre).dump(2) + "\n");
  csv::write_text_file((out / "metrics_pre_filtered.json").string(),
                       metrics_to_json(metrics_pre_filtered).dump(2) + "\n");
  csv::write_text_file((out / "metrics_post.json").string(),
                       metrics_to_json(metrics_post).dump(2) + "\n");

  const json report = {
      {"config",
       {{"manifest", cfg.manifest},
        {"output_dir", cfg.output_dir},
        {"crop_mode", cfg.crop_mode},
        {"size_preset", cfg.size_preset},
        {"folds_file", cfg.folds_file},
        {"seed", cfg.seed},
        {"threshold", cfg.threshold},
        {"epochs", cfg.epochs},
        {"lr", cfg.lr},
        {"l2", cfg.l2}}},
      {"counts",
       {{"scans", n},
        {"labeled", labeled_idx.size()},
        {"unlabeled", unlabeled_idx.size()},
        {"preprocessed", labeled_idx.size() + unlabeled_idx.size()},
        {"segmentation_fallbacks", fallbacks},
        {"folds", kFoldCount},
        {"pseudo_selected", pseudo.entries.size()}}},
      {"metrics",
       {{"pre", metrics_to_json(metrics_pre)},
        {"pre_filtered", metrics_to_json(metrics_pre_filtered)},
        {"post", metrics_to_json(metrics_post)}}},
      {"errors", error_list}};
  csv::write_text_file((out / "run_report.json").string(), report.dump(2) + "\n");

  std::cout << "macro F1 pre " << csv::format_double(metrics_pre.macro_f1)
            << ", filtered " << csv::format_double(metrics_pre_filtered.macro_f1)
            << ", post fine-tune " << csv::format_double(metrics_post.macro_f1)
            << ", pseudo-labels " << pseudo.entries.size() << "\n";

  return error_list.empty() ? kExitOk : kExitData;
}

int run_subcommand(const std::vector<std::string>& args) {
  CLI::App app{"CT lung-crop classification pipeline"};
  app.require_subcommand(1);

  BatchIoOpts ingest_opts;
  auto* ingest = app.add_subcommand("ingest", "Slice-image stacks to RVOL volumes");
  ingest->add_option("--manifest", ingest_opts.manifest)->required();
  ingest->add_option("--output", ingest_opts.output)->required();
  ingest->add_option("--workers", ingest_opts.workers)->check(CLI::PositiveNumber);

  PhantomOpts phantom_opts;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom dataset");
  phantom->add_option("--count", phantom_opts.count)->required()->check(CLI::PositiveNumber);
  phantom->add_option("--seed", phantom_opts.seed);
  phantom->add_option("--positive-fraction", phantom_opts.positive_fraction)
      ->check(CLI::Range(0.0, 1.0));
  phantom->add_option("--output", phantom_opts.output)->required();
  phantom->add_option("--nx", phantom_opts.dataset.nx)->check(CLI::PositiveNumber);
  phantom->add_option("--ny", phantom_opts.dataset.ny)->check(CLI::PositiveNumber);
  phantom->add_option("--nz", phantom_opts.dataset.nz)->check(CLI::PositiveNumber);
  phantom->add_option("--noise-sigma", phantom_opts.dataset.noise_sigma);
  phantom->add_option("--workers", phantom_opts.dataset.workers)->check(CLI::PositiveNumber);

  BatchIoOpts segment_opts;
  auto* segment = app.add_subcommand("segment", "Per-scan lung segmentation reports");
  segment->add_option("--manifest", segment_opts.manifest)->required();
  segment->add_option("--output", segment_opts.output)->required();
  segment->add_option("--workers", segment_opts.workers)->check(CLI::PositiveNumber);

  CropOpts crop_opts;
  auto* crop = app.add_subcommand("crop", "Apply planned crops to volumes");
  crop->add_option("--manifest", crop_opts.manifest)->required();
  crop->add_option("--segmentation", crop_opts.segmentation_dir)->required();
  crop->add_option("--mode", crop_opts.mode)
      ->check(CLI::IsMember({"both", "left", "right"}));
  crop->add_option("--output", crop_opts.output)->required();
  crop->add_option("--workers", crop_opts.workers)->check(CLI::PositiveNumber);

  ResampleOpts resample_opts;
  auto* resample = app.add_subcommand("resample", "Interpolate volumes to a preset size");
  resample->add_option("--manifest", resample_opts.manifest)->required();
  resample->add_option("--size", resample_opts.size_preset)
      ->check(CLI::IsMember({"both", "single"}));
  resample->add_option("--output", resample_opts.output)->required();
  resample->add_option("--workers", resample_opts.workers)->check(CLI::PositiveNumber);

  AugmentOpts augment_opts;
  auto* augment = app.add_subcommand(
      "augment", "Write the two training views with brightness/contrast jitter");
  augment->add_option("--manifest", augment_opts.manifest)->required();
  augment->add_option("--output", augment_opts.output)->required();
  augment->add_option("--seed", augment_opts.seed);
  augment->add_option("--workers", augment_opts.workers)->check(CLI::PositiveNumber);

  SplitOpts split_opts;
  auto* split = app.add_subcommand("split", "Build five-fold cross-validation folds");
  split->add_option("--scheme", split_opts.scheme)
      ->check(CLI::IsMember({"challenge1", "challenge2"}));
  split->add_option("--train", split_opts.train_manifest);
  split->add_option("--val", split_opts.val_manifest);
  split->add_option("--manifest", split_opts.manifest);
  split->add_option("--seed", split_opts.seed);
  split->add_option("--output", split_opts.output)->required();

  EnsembleOpts ensemble_opts;
  auto* ensemble = app.add_subcommand("ensemble", "Average prediction tables");
  ensemble->add_option("--pred", ensemble_opts.pred_paths)->required()->expected(-1);
  ensemble->add_option("--output", ensemble_opts.output)->required();
  ensemble->add_option("--tag", ensemble_opts.tag);

  PseudoLabelOpts pseudo_opts;
  auto* pseudolabel =
      app.add_subcommand("pseudolabel", "Select high-confidence pseudo-labels");
  pseudolabel->add_option("--pred", pseudo_opts.pred)->required();
  pseudolabel->add_option("--threshold", pseudo_opts.threshold);
  pseudolabel->add_option("--output", pseudo_opts.output)->required();

  FinetuneManifestOpts ft_opts;
  auto* ftm = app.add_subcommand("finetune-manifest",
                                 "Merge labeled and pseudo-labeled manifests");
  ftm->add_option("--labeled", ft_opts.labeled)->required();
  ftm->add_option("--pseudo", ft_opts.pseudo)->required();
  ftm->add_option("--unlabeled", ft_opts.unlabeled)->required();
  ftm->add_option("--output", ft_opts.output)->required();

  FeaturesOpts features_opts;
  auto* features = app.add_subcommand("features", "Extract baseline feature vectors");
  features->add_option("--manifest", features_opts.manifest)->required();
  features->add_option("--output", features_opts.output)->required();
  features->add_option("--workers", features_opts.workers)->check(CLI::PositiveNumber);

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train-baseline", "Train the baseline classifier");
  train_cmd->add_option("--features", train_opts.features)->required();
  train_cmd->add_option("--labels", train_opts.labels)->required();
  train_cmd->add_option("--epochs", train_opts.epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train_opts.lr);
  train_cmd->add_option("--l2", train_opts.l2);
  train_cmd->add_option("--seed", train_opts.seed);
  train_cmd->add_option("--output", train_opts.output)->required();

  PredictOpts predict_opts;
  auto* predict_cmd =
      app.add_subcommand("predict-baseline", "Predict probabilities with a model");
  predict_cmd->add_option("--model", predict_opts.model)->required();
  predict_cmd->add_option("--features", predict_opts.features)->required();
  predict_cmd->add_option("--output", predict_opts.output)->required();
  predict_cmd->add_option("--tag", predict_opts.tag);

  ScoreOpts score_opts;
  auto* score = app.add_subcommand("score", "Macro F1 of predictions against truth");
  score->add_option("--pred", score_opts.pred)->required();
  score->add_option("--truth", score_opts.truth)->required();
  score->add_option("--threshold", score_opts.threshold);
  score->add_option("--output", score_opts.output);

  PipelineConfig pl;
  std::string pl_config_path;
  auto* pipeline = app.add_subcommand("pipeline", "Run the full pipeline end to end");
  pipeline->add_option("--config", pl_config_path);
  auto* pl_manifest = pipeline->add_option("--manifest", pl.manifest);
  auto* pl_output = pipeline->add_option("--output", pl.output_dir);
  auto* pl_mode = pipeline->add_option("--mode", pl.crop_mode)
                      ->check(CLI::IsMember({"both", "left", "right"}));
  auto* pl_size = pipeline->add_option("--size", pl.size_preset)
                      ->check(CLI::IsMember({"both", "single"}));
  auto* pl_folds = pipeline->add_option("--folds", pl.folds_file);
  auto* pl_seed = pipeline->add_option("--seed", pl.seed);
  auto* pl_threshold = pipeline->add_option("--threshold", pl.threshold);
  auto* pl_workers = pipeline->add_option("--workers", pl.workers)->check(CLI::PositiveNumber);
  auto* pl_epochs = pipeline->add_option("--epochs", pl.epochs)->check(CLI::PositiveNumber);
  auto* pl_lr = pipeline->add_option("--lr", pl.lr);
  auto* pl_l2 = pipeline->add_option("--l2", pl.l2);

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("covct");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (app.got_subcommand(ingest)) return cmd_ingest(ingest_opts);
    if (app.got_subcommand(phantom)) return cmd_phantom(phantom_opts);
    if (app.got_subcommand(segment)) return cmd_segment(segment_opts);
    if (app.got_subcommand(crop)) return cmd_crop(crop_opts);
    if (app.got_subcommand(resample)) return cmd_resample(resample_opts);
    if (app.got_subcommand(augment)) return cmd_augment(augment_opts);
    if (app.got_subcommand(split)) return cmd_split(split_opts);
    if (app.got_subcommand(ensemble)) return cmd_ensemble(ensemble_opts);
    if (app.got_subcommand(pseudolabel)) return cmd_pseudolabel(pseudo_opts);
    if (app.got_subcommand(ftm)) return cmd_finetune_manifest(ft_opts);
    if (app.got_subcommand(features)) return cmd_features(features_opts);
    if (app.got_subcommand(train_cmd)) return cmd_train_baseline(train_opts);
    if (app.got_subcommand(predict_cmd)) return cmd_predict_baseline(predict_opts);
    if (app.got_subcommand(score)) return cmd_score(score_opts);
    if (app.got_subcommand(pipeline)) {
      PipelineConfig cfg;
      if (!pl_config_path.empty()) cfg = pipeline_config_from_json_file(pl_config_path);
      if (pl_manifest->count()) cfg.manifest = pl.manifest;
      if (pl_output->count()) cfg.output_dir = pl.output_dir;
      if (pl_mode->count()) cfg.crop_mode = pl.crop_mode;
      if (pl_size->count()) cfg.size_preset = pl.size_preset;
      if (pl_folds->count()) cfg.folds_file = pl.folds_file;
      if (pl_seed->count()) cfg.seed = pl.seed;
      if (pl_threshold->count()) cfg.threshold = pl.threshold;
      if (pl_workers->count()) cfg.workers = pl.workers;
      if (pl_epochs->count()) cfg.epochs = pl.epochs;
      if (pl_lr->count()) cfg.lr = pl.lr;
      if (pl_l2->count()) cfg.l2 = pl.l2;
      return run_pipeline(cfg);
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace covct
