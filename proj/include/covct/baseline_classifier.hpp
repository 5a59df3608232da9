#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "covct/volume.hpp"

namespace covct {

inline constexpr int kHistogramBins = 32;
inline constexpr int kFeatureCount = kHistogramBins + 3;  // + mean, std, p90

// 32 histogram-bin frequencies over [0,1] (bin k covers [k/32,(k+1)/32),
// last bin closed), then mean, population std and the 90th-percentile
// intensity (nearest-rank).
using FeatureVector = std::array<double, kFeatureCount>;

FeatureVector extract_features(const Volume& v);

struct LinearModel {
  std::array<double, kFeatureCount> weights{};
  double bias = 0.0;
  // training metadata
  int epochs = 0;
  double lr = 0.0;
  double l2 = 0.0;
  uint64_t seed = 0;
};

// Mean binary cross-entropy plus 0.5*l2*|w|^2, on raw features.
double logistic_loss(const std::vector<FeatureVector>& features,
                     const std::vector<Label>& labels,
                     const std::array<double, kFeatureCount>& weights,
                     double bias, double l2);

// Analytic gradient of logistic_loss at (weights, bias).
void logistic_gradient(const std::vector<FeatureVector>& features,
                       const std::vector<Label>& labels,
                       const std::array<double, kFeatureCount>& weights,
                       double bias, double l2,
                       std::array<double, kFeatureCount>& grad_w, double& grad_b);

// Full-batch gradient descent on the L2-regularized logistic loss.
// Features are standardized internally per column (training-set mean/std)
// and the learned weights folded back to raw scale, so the stored model
// applies directly to raw feature vectors. Deterministic per seed.
// Requires at least one example of each class.
LinearModel train(const std::vector<FeatureVector>& features,
                  const std::vector<Label>& labels, int epochs, double lr,
                  double l2, uint64_t seed);

// Probability of COVID: logistic of the affine score, clamped away from
// exactly 0 and 1.
double predict(const LinearModel& m, const FeatureVector& f);

// Continues gradient descent from m's weights on the given (typically
// augmented) set. epochs < 0 means one third of m's base epochs. With
// epochs == 0 or a zero learning rate the model is returned unchanged.
LinearModel fine_tune(const LinearModel& m,
                      const std::vector<FeatureVector>& features,
                      const std::vector<Label>& labels, int epochs = -1,
                      std::optional<double> lr_override = std::nullopt);

// Model file: JSON {"weights": [...], "bias", "epochs", "lr", "l2", "seed"}
void save_model(const LinearModel& m, const std::string& path);
LinearModel load_model(const std::string& path);

// Feature CSV: scan_id,f00..f34
void save_features_csv(const std::vector<std::pair<std::string, FeatureVector>>& rows,
                       const std::string& path);
std::vector<std::pair<std::string, FeatureVector>> load_features_csv(const std::string& path);

}  // namespace covct
