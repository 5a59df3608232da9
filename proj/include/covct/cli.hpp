#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace covct {

struct PipelineConfig {
  std::string manifest;
  std::string output_dir;
  std::string crop_mode = "both";    // both|left|right
  std::string size_preset = "both";  // both|single
  std::string folds_file;            // computed from the manifest when empty
  uint64_t seed = 1;
  double threshold = 0.7;  // pseudo-label confidence threshold
  int workers = 1;
  int epochs = 300;  // baseline classifier training epochs
  double lr = 0.5;
  double l2 = 1e-4;

  void validate() const;
};

PipelineConfig pipeline_config_from_json_file(const std::string& path);

// ingest -> segment -> crop -> resample -> split -> per-fold baseline
// training -> ensemble over folds -> pseudo-labels -> fine-tune -> score.
// Per-scan failures are recorded and skipped; a stage only aborts the run
// when it would otherwise produce no output at all.
int run_pipeline(const PipelineConfig& config);

// argv without the program name. Exit code 0 on success, 1 on usage
// errors, 2 on data errors.
int run_subcommand(const std::vector<std::string>& args);

}  // namespace covct
