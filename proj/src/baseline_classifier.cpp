#include "covct/baseline_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "covct/csv.hpp"
#include "covct/rng.hpp"

using nlohmann::json;

namespace covct {

namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) {
  if (z > 0.0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

double raw_score(const std::array<double, kFeatureCount>& w, double b,
                 const FeatureVector& f) {
  double z = b;
  for (int j = 0; j < kFeatureCount; ++j) z += w[j] * f[j];
  return z;
}

void check_training_set(const std::vector<FeatureVector>& features,
                        const std::vector<Label>& labels) {
  if (features.size() != labels.size()) {
    throw DataError("train: feature/label count mismatch");
  }
  if (features.empty()) throw DataError("train: empty training set");
  bool has_covid = false;
  bool has_non = false;
  for (const Label l : labels) {
    (l == Label::Covid ? has_covid : has_non) = true;
  }
  if (!has_covid || !has_non) {
    throw DataError("train: need at least one example of each class");
  }
}

struct Standardizer {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> scale{};  // population std, floored at 1

  static Standardizer fit(const std::vector<FeatureVector>& features) {
    Standardizer s;
    const double n = static_cast<double>(features.size());
    for (const auto& f : features) {
      for (int j = 0; j < kFeatureCount; ++j) s.mean[j] += f[j];
    }
    for (int j = 0; j < kFeatureCount; ++j) s.mean[j] /= n;
    for (const auto& f : features) {
      for (int j = 0; j < kFeatureCount; ++j) {
        const double d = f[j] - s.mean[j];
        s.scale[j] += d * d;
      }
    }
    for (int j = 0; j < kFeatureCount; ++j) {
      s.scale[j] = std::sqrt(s.scale[j] / n);
      if (s.scale[j] < 1e-12) s.scale[j] = 1.0;  // constant column
    }
    return s;
  }

  std::vector<FeatureVector> apply(const std::vector<FeatureVector>& features) const {
    std::vector<FeatureVector> out(features.size());
    for (size_t i = 0; i < features.size(); ++i) {
      for (int j = 0; j < kFeatureCount; ++j) {
        out[i][j] = (features[i][j] - mean[j]) / scale[j];
      }
    }
    return out;
  }

  // Raw-space params -> standardized-space params (same decision function).
  void to_standardized(const std::array<double, kFeatureCount>& w_raw, double b_raw,
                       std::array<double, kFeatureCount>& w_std, double& b_std) const {
    b_std = b_raw;
    for (int j = 0; j < kFeatureCount; ++j) {
      w_std[j] = w_raw[j] * scale[j];
      b_std += w_raw[j] * mean[j];
    }
  }

  void to_raw(const std::array<double, kFeatureCount>& w_std, double b_std,
              std::array<double, kFeatureCount>& w_raw, double& b_raw) const {
    b_raw = b_std;
    for (int j = 0; j < kFeatureCount; ++j) {
      w_raw[j] = w_std[j] / scale[j];
      b_raw -= w_raw[j] * mean[j];
    }
  }
};

void gradient_descent(const std::vector<FeatureVector>& xs,
                      const std::vector<Label>& labels, int epochs, double lr,
                      double l2, std::array<double, kFeatureCount>& w, double& b) {
  const size_t n = xs.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  std::array<double, kFeatureCount> grad{};
  for (int epoch = 0; epoch < epochs; ++epoch) {
    grad.fill(0.0);
    double grad_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double y = labels[i] == Label::Covid ? 1.0 : 0.0;
      const double err = stable_sigmoid(raw_score(w, b, xs[i])) - y;
      for (int j = 0; j < kFeatureCount; ++j) grad[j] += err * xs[i][j];
      grad_b += err;
    }
    for (int j = 0; j < kFeatureCount; ++j) {
      w[j] -= lr * (grad[j] * inv_n + l2 * w[j]);
    }
    b -= lr * grad_b * inv_n;
  }
}

}  // namespace

FeatureVector extract_features(const Volume& v) {
  if (v.voxels.empty()) throw DataError("extract_features: empty volume");

  FeatureVector f{};
  const size_t n = v.voxels.size();

  double sum = 0.0;
  for (const float x : v.voxels) {
    const int bin = std::clamp(
        static_cast<int>(static_cast<double>(x) * kHistogramBins), 0, kHistogramBins - 1);
    f[bin] += 1.0;
    sum += x;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int k = 0; k < kHistogramBins; ++k) f[k] *= inv_n;

  const double mean = sum * inv_n;
  double var = 0.0;
  for (const float x : v.voxels) {
    const double d = x - mean;
    var += d * d;
  }

  std::vector<float> sorted(v.voxels);
  const size_t rank = (9 * n + 9) / 10 - 1;  // nearest-rank 90th percentile
  std::nth_element(sorted.begin(), sorted.begin() + rank, sorted.end());

  f[kHistogramBins] = mean;
  f[kHistogramBins + 1] = std::sqrt(var * inv_n);
  f[kHistogramBins + 2] = sorted[rank];
  return f;
}

double logistic_loss(const std::vector<FeatureVector>& features,
                     const std::vector<Label>& labels,
                     const std::array<double, kFeatureCount>& weights,
                     double bias, double l2) {
  if (features.size() != labels.size() || features.empty()) {
    throw DataError("logistic_loss: bad inputs");
  }
  double loss = 0.0;
  for (size_t i = 0; i < features.size(); ++i) {
    const double z = raw_score(weights, bias, features[i]);
    const double y = labels[i] == Label::Covid ? 1.0 : 0.0;
    loss += softplus(z) - y * z;  // = -y log p - (1-y) log (1-p)
  }
  loss /= static_cast<double>(features.size());
  double reg = 0.0;
  for (const double w : weights) reg += w * w;
  return loss + 0.5 * l2 * reg;
}

void logistic_gradient(const std::vector<FeatureVector>& features,
                       const std::vector<Label>& labels,
                       const std::array<double, kFeatureCount>& weights,
                       double bias, double l2,
                       std::array<double, kFeatureCount>& grad_w, double& grad_b) {
  if (features.size() != labels.size() || features.empty()) {
    throw DataError("logistic_gradient: bad inputs");
  }
  grad_w.fill(0.0);
  grad_b = 0.0;
  for (size_t i = 0; i < features.size(); ++i) {
    const double y = labels[i] == Label::Covid ? 1.0 : 0.0;
    const double err = stable_sigmoid(raw_score(weights, bias, features[i])) - y;
    for (int j = 0; j < kFeatureCount; ++j) grad_w[j] += err * features[i][j];
    grad_b += err;
  }
  const double inv_n = 1.0 / static_cast<double>(features.size());
  for (int j = 0; j < kFeatureCount; ++j) {
    grad_w[j] = grad_w[j] * inv_n + l2 * weights[j];
  }
  grad_b *= inv_n;
}

LinearModel train(const std::vector<FeatureVector>& features,
                  const std::vector<Label>& labels, int epochs, double lr,
                  double l2, uint64_t seed) {
  check_training_set(features, labels);
  if (epochs < 0) throw DataError("train: negative epoch count");

  const Standardizer st = Standardizer::fit(features);
  const std::vector<FeatureVector> xs = st.apply(features);

  Rng rng(derive_stream(seed, 0x10d31));
  std::array<double, kFeatureCount> w{};
  for (int j = 0; j < kFeatureCount; ++j) w[j] = rng.normal(0.0, 0.01);
  double b = 0.0;

  gradient_descent(xs, labels, epochs, lr, l2, w, b);

  LinearModel m;
  st.to_raw(w, b, m.weights, m.bias);
  m.epochs = epochs;
  m.lr = lr;
  m.l2 = l2;
  m.seed = seed;
  return m;
}

double predict(const LinearModel& m, const FeatureVector& f) {
  const double p = stable_sigmoid(raw_score(m.weights, m.bias, f));
  return std::clamp(p, 1e-15, 1.0 - 1e-15);
}

LinearModel fine_tune(const LinearModel& m,
                      const std::vector<FeatureVector>& features,
                      const std::vector<Label>& labels, int epochs,
                      std::optional<double> lr_override) {
  if (epochs < 0) epochs = m.epochs / 3;
  const double lr = lr_override.value_or(m.lr);
  if (epochs == 0 || lr == 0.0) return m;
  check_training_set(features, labels);

  const Standardizer st = Standardizer::fit(features);
  const std::vector<FeatureVector> xs = st.apply(features);

  std::array<double, kFeatureCount> w{};
  double b = 0.0;
  st.to_standardized(m.weights, m.bias, w, b);

  gradient_descent(xs, labels, epochs, lr, m.l2, w, b);

  LinearModel out;
  st.to_raw(w, b, out.weights, out.bias);
  out.epochs = m.epochs + epochs;
  out.lr = m.lr;
  out.l2 = m.l2;
  out.seed = m.seed;
  return out;
}

void save_model(const LinearModel& m, const std::string& path) {
  json j = {{"weights", std::vector<double>(m.weights.begin(), m.weights.end())},
            {"bias", m.bias},
            {"epochs", m.epochs},
            {"lr", m.lr},
            {"l2", m.l2},
            {"seed", m.seed}};
  csv::write_text_file(path, j.dump(2) + "\n");
}

LinearModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("malformed model file " + path + ": " + e.what());
  }
  LinearModel m;
  try {
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != kFeatureCount) {
      throw DataError("model file " + path + " has " + std::to_string(w.size()) +
                      " weights (want " + std::to_string(kFeatureCount) + ")");
    }
    std::copy(w.begin(), w.end(), m.weights.begin());
    m.bias = j.at("bias").get<double>();
    m.epochs = j.at("epochs").get<int>();
    m.lr = j.at("lr").get<double>();
    m.l2 = j.at("l2").get<double>();
    m.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw DataError("malformed model file " + path + ": " + e.what());
  }
  for (const double w : m.weights) {
    if (!std::isfinite(w)) throw DataError("non-finite weight in " + path);
  }
  if (!std::isfinite(m.bias)) throw DataError("non-finite bias in " + path);
  return m;
}

void save_features_csv(const std::vector<std::pair<std::string, FeatureVector>>& rows,
                       const std::string& path) {
  std::string out = "scan_id";
  for (int j = 0; j < kFeatureCount; ++j) {
    out += ",f";
    out += (j < 10 ? "0" : "");
    out += std::to_string(j);
  }
  out += '\n';
  for (const auto& [id, f] : rows) {
    out += id;
    for (int j = 0; j < kFeatureCount; ++j) {
      out += ',';
      out += csv::format_double(f[j]);
    }
    out += '\n';
  }
  csv::write_text_file(path, out);
}

std::vector<std::pair<std::string, FeatureVector>> load_features_csv(const std::string& path) {
  const auto lines = csv::read_lines(path);
  if (lines.empty()) throw DataError("empty features CSV: " + path);
  const auto header = csv::split_line(lines[0]);
  if (header.size() != kFeatureCount + 1 || header[0] != "scan_id") {
    throw DataError("features CSV header mismatch: " + path);
  }
  std::vector<std::pair<std::string, FeatureVector>> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split_line(lines[i]);
    if (f.size() != kFeatureCount + 1) {
      throw DataError("features CSV row " + std::to_string(i + 1) + " malformed: " + path);
    }
    FeatureVector fv{};
    for (int j = 0; j < kFeatureCount; ++j) {
      fv[j] = csv::parse_double(f[j + 1], "features CSV " + path);
    }
    rows.emplace_back(f[0], fv);
  }
  return rows;
}

}  // namespace covct
