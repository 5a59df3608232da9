#include "covct/dataset_splits.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "covct/csv.hpp"
#include "covct/rng.hpp"

using nlohmann::json;

namespace covct {

namespace {

Label require_label(const ManifestEntry& e) {
  if (!e.label) {
    throw DataError("split requires labeled scans; '" + e.scan_id + "' is unlabeled");
  }
  return *e.label;
}

// Deals the class groups into `fold_count` folds. Per class the base quota
// is even; each remainder goes to the fold with the smallest running total
// (ties to the lower fold index), which balances totals and classes at once.
std::unordered_map<std::string, int> deal_folds(
    const std::vector<std::vector<std::string>>& class_groups, int fold_count) {
  std::vector<long long> totals(fold_count, 0);
  std::unordered_map<std::string, int> fold_of;

  for (const auto& group : class_groups) {
    const long long base = static_cast<long long>(group.size()) / fold_count;
    long long extras = static_cast<long long>(group.size()) % fold_count;

    std::vector<long long> quota(fold_count, base);
    std::vector<long long> projected = totals;
    for (long long f = 0; f < fold_count; ++f) projected[f] += base;
    while (extras-- > 0) {
      const auto it = std::min_element(projected.begin(), projected.end());
      const auto f = static_cast<size_t>(it - projected.begin());
      quota[f]++;
      projected[f]++;
    }

    size_t next = 0;
    for (int f = 0; f < fold_count; ++f) {
      for (long long k = 0; k < quota[f]; ++k) {
        fold_of[group[next++]] = f;
      }
      totals[f] = projected[f];
    }
  }
  return fold_of;
}

FoldAssignment assign_stratified(const ScanManifest& pool, int fold_count,
                                 uint64_t seed, SplitScheme scheme) {
  std::vector<std::string> covid;
  std::vector<std::string> non_covid;
  for (const auto& e : pool.entries) {
    (require_label(e) == Label::Covid ? covid : non_covid).push_back(e.scan_id);
  }

  Rng rng(derive_stream(seed, static_cast<uint64_t>(scheme)));
  rng.shuffle(covid);
  rng.shuffle(non_covid);

  const auto fold_of = deal_folds({covid, non_covid}, fold_count);

  FoldAssignment fa;
  fa.scheme = scheme;
  fa.seed = seed;
  fa.entries.reserve(pool.entries.size());
  for (const auto& e : pool.entries) {
    fa.entries.push_back({e.scan_id, *e.label, fold_of.at(e.scan_id)});
  }
  return fa;
}

}  // namespace

const char* split_scheme_to_string(SplitScheme s) {
  return s == SplitScheme::Challenge1 ? "CHALLENGE1" : "CHALLENGE2";
}

SplitScheme split_scheme_from_string(const std::string& s) {
  if (s == "CHALLENGE1") return SplitScheme::Challenge1;
  if (s == "CHALLENGE2") return SplitScheme::Challenge2;
  throw DataError("unknown split scheme '" + s + "'");
}

int FoldAssignment::fold_of(const std::string& scan_id) const {
  for (const auto& e : entries) {
    if (e.scan_id == scan_id) return e.fold;
  }
  throw DataError("scan_id '" + scan_id + "' has no fold assignment");
}

FoldAssignment split_challenge1(const ScanManifest& train,
                                const ScanManifest& official_val, uint64_t seed) {
  train.check_unique_ids();
  official_val.check_unique_ids();
  std::unordered_set<std::string> train_ids;
  for (const auto& e : train.entries) train_ids.insert(e.scan_id);
  for (const auto& e : official_val.entries) {
    if (train_ids.count(e.scan_id)) {
      throw DataError("scan_id '" + e.scan_id + "' appears in both train and validation");
    }
  }

  FoldAssignment fa =
      assign_stratified(train, kFoldCount - 1, seed, SplitScheme::Challenge1);
  for (const auto& e : official_val.entries) {
    fa.entries.push_back({e.scan_id, require_label(e), kFoldCount - 1});
  }
  return fa;
}

FoldAssignment split_challenge2(const ScanManifest& merged, uint64_t seed) {
  merged.check_unique_ids();
  return assign_stratified(merged, kFoldCount, seed, SplitScheme::Challenge2);
}

void save_folds(const FoldAssignment& fa, const std::string& csv_path) {
  std::string out = "scan_id,label,fold\n";
  for (const auto& e : fa.entries) {
    out += e.scan_id;
    out += ',';
    out += label_to_string(e.label);
    out += ',';
    out += std::to_string(e.fold);
    out += '\n';
  }
  csv::write_text_file(csv_path, out);

  const json meta = {{"scheme", split_scheme_to_string(fa.scheme)},
                     {"seed", fa.seed}};
  csv::write_text_file(csv_path + ".meta.json", meta.dump(2) + "\n");
}

FoldAssignment load_folds(const std::string& csv_path) {
  const auto lines = csv::read_lines(csv_path);
  if (lines.empty() || lines[0] != "scan_id,label,fold") {
    throw DataError("fold CSV header must be 'scan_id,label,fold': " + csv_path);
  }

  FoldAssignment fa;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = csv::split_line(lines[i]);
    if (f.size() != 3) {
      throw DataError("fold CSV row " + std::to_string(i + 1) + " malformed: " + csv_path);
    }
    const int fold = static_cast<int>(csv::parse_int(f[2], "fold CSV " + csv_path));
    if (fold < 0 || fold >= kFoldCount) {
      throw DataError("fold index " + f[2] + " out of range in " + csv_path);
    }
    fa.entries.push_back({f[0], label_from_string(f[1]), fold});
  }

  try {
    const auto meta_lines = csv::read_lines(csv_path + ".meta.json");
    std::string text;
    for (const auto& l : meta_lines) text += l + "\n";
    const json meta = json::parse(text);
    fa.scheme = split_scheme_from_string(meta.at("scheme").get<std::string>());
    fa.seed = meta.at("seed").get<uint64_t>();
  } catch (const DataError&) {
    // Sidecar missing: keep defaults, the CSV alone is still usable.
  } catch (const json::exception& e) {
    throw DataError("malformed fold sidecar " + csv_path + ".meta.json: " + e.what());
  }
  return fa;
}

}  // namespace covct
