#include <doctest.h>

#include <algorithm>
#include <map>

#include "covct/dataset_splits.hpp"
#include "covct/rng.hpp"
#include "test_util.hpp"

using namespace covct;
using testutil::TempDir;

namespace {

ScanManifest synthetic_manifest(const std::string& prefix, int covid, int non_covid) {
  ScanManifest m;
  for (int i = 0; i < covid; ++i) {
    m.entries.push_back({prefix + "_c" + std::to_string(i), "", Label::Covid, false});
  }
  for (int i = 0; i < non_covid; ++i) {
    m.entries.push_back({prefix + "_n" + std::to_string(i), "", Label::NonCovid, false});
  }
  return m;
}

struct FoldProfile {
  std::array<int, kFoldCount> total{};
  std::array<int, kFoldCount> covid{};
  std::array<int, kFoldCount> non_covid{};
};

FoldProfile profile_of(const FoldAssignment& fa) {
  FoldProfile p;
  for (const auto& e : fa.entries) {
    p.total[e.fold]++;
    (e.label == Label::Covid ? p.covid : p.non_covid)[e.fold]++;
  }
  return p;
}

int spread(const int* begin, const int* end) {
  return *std::max_element(begin, end) - *std::min_element(begin, end);
}

}  // namespace

TEST_CASE("challenge1 split at the competition scale") {
  const ScanManifest train = synthetic_manifest("tr", 703, 655);
  const ScanManifest val = synthetic_manifest("va", 170, 156);
  const FoldAssignment fa = split_challenge1(train, val, 42);

  const FoldProfile p = profile_of(fa);
  std::array<int, 4> train_sizes{p.total[0], p.total[1], p.total[2], p.total[3]};
  std::sort(train_sizes.begin(), train_sizes.end(), std::greater<>());
  CHECK(train_sizes == std::array<int, 4>{340, 340, 339, 339});
  CHECK(p.total[4] == 326);

  // Stratification: class counts across the four training folds differ by <= 1.
  CHECK(spread(p.covid.data(), p.covid.data() + 4) <= 1);
  CHECK(spread(p.non_covid.data(), p.non_covid.data() + 4) <= 1);

  // Fold 4 is exactly the official validation set.
  for (const auto& e : fa.entries) {
    const bool is_val = e.scan_id.rfind("va_", 0) == 0;
    CHECK((e.fold == 4) == is_val);
  }
}

TEST_CASE("challenge1 stratification on a small balanced set") {
  const ScanManifest train = synthetic_manifest("tr", 8, 12);
  const ScanManifest val = synthetic_manifest("va", 1, 1);
  const FoldAssignment fa = split_challenge1(train, val, 7);
  const FoldProfile p = profile_of(fa);
  for (int f = 0; f < 4; ++f) {
    CHECK(p.covid[f] == 2);
    CHECK(p.non_covid[f] == 3);
  }
}

TEST_CASE("challenge1 determinism and input validation") {
  const ScanManifest train = synthetic_manifest("tr", 20, 20);
  const ScanManifest val = synthetic_manifest("va", 5, 5);

  const FoldAssignment a = split_challenge1(train, val, 3);
  const FoldAssignment b = split_challenge1(train, val, 3);
  REQUIRE(a.entries.size() == b.entries.size());
  for (size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(a.entries[i].scan_id == b.entries[i].scan_id);
    CHECK(a.entries[i].fold == b.entries[i].fold);
  }

  SUBCASE("unlabeled entries are rejected") {
    ScanManifest bad = train;
    bad.entries[0].label.reset();
    CHECK_THROWS_AS(split_challenge1(bad, val, 3), DataError);
  }
  SUBCASE("overlapping ids are rejected") {
    ScanManifest bad_val = val;
    bad_val.entries[0].scan_id = train.entries[0].scan_id;
    CHECK_THROWS_AS(split_challenge1(train, bad_val, 3), DataError);
  }
}

TEST_CASE("challenge2 split at the competition scale") {
  // 240 train + 178 validation merged: 120+65 COVID, 120+113 NON_COVID.
  const ScanManifest merged = synthetic_manifest("m", 185, 233);
  const FoldAssignment fa = split_challenge2(merged, 9);
  const FoldProfile p = profile_of(fa);

  std::array<int, kFoldCount> sizes = p.total;
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  CHECK(sizes == std::array<int, kFoldCount>{84, 84, 84, 83, 83});
  CHECK(spread(p.covid.data(), p.covid.data() + kFoldCount) <= 1);
  CHECK(spread(p.non_covid.data(), p.non_covid.data() + kFoldCount) <= 1);
}

TEST_CASE("challenge2 on a small balanced set") {
  const ScanManifest merged = synthetic_manifest("m", 5, 5);
  const FoldAssignment fa = split_challenge2(merged, 1);
  const FoldProfile p = profile_of(fa);
  for (int f = 0; f < kFoldCount; ++f) {
    CHECK(p.total[f] == 2);
    CHECK(p.covid[f] == 1);
    CHECK(p.non_covid[f] == 1);
  }
}

TEST_CASE("changing the seed permutes members but keeps the count profile") {
  const ScanManifest merged = synthetic_manifest("m", 33, 47);
  const FoldAssignment a = split_challenge2(merged, 1);
  const FoldAssignment b = split_challenge2(merged, 2);

  const FoldProfile pa = profile_of(a);
  const FoldProfile pb = profile_of(b);
  CHECK(pa.total == pb.total);
  CHECK(pa.covid == pb.covid);

  bool any_moved = false;
  for (size_t i = 0; i < a.entries.size(); ++i) {
    if (a.entries[i].fold != b.entries[i].fold) any_moved = true;
  }
  CHECK(any_moved);
}

TEST_CASE("folds partition the input with balance <= 1 for random sizes") {
  Rng rng(321);
  for (int trial = 0; trial < 20; ++trial) {
    const int covid = 5 + static_cast<int>(rng.below(120));
    const int non_covid = 5 + static_cast<int>(rng.below(120));
    const ScanManifest merged = synthetic_manifest("m", covid, non_covid);
    const FoldAssignment fa = split_challenge2(merged, 1000 + trial);

    REQUIRE(fa.entries.size() == merged.entries.size());
    std::map<std::string, int> seen;
    for (const auto& e : fa.entries) {
      CHECK(e.fold >= 0);
      CHECK(e.fold < kFoldCount);
      seen[e.scan_id]++;
    }
    CHECK(seen.size() == merged.entries.size());  // disjoint cover

    const FoldProfile p = profile_of(fa);
    CHECK(spread(p.total.data(), p.total.data() + kFoldCount) <= 1);
    CHECK(spread(p.covid.data(), p.covid.data() + kFoldCount) <= 1);
    CHECK(spread(p.non_covid.data(), p.non_covid.data() + kFoldCount) <= 1);
  }
}

TEST_CASE("fold CSV and sidecar round-trip") {
  TempDir dir;
  const ScanManifest merged = synthetic_manifest("m", 6, 7);
  const FoldAssignment fa = split_challenge2(merged, 77);
  save_folds(fa, dir.str("folds.csv"));

  const FoldAssignment r = load_folds(dir.str("folds.csv"));
  CHECK(r.scheme == fa.scheme);
  CHECK(r.seed == fa.seed);
  REQUIRE(r.entries.size() == fa.entries.size());
  for (size_t i = 0; i < fa.entries.size(); ++i) {
    CHECK(r.entries[i].scan_id == fa.entries[i].scan_id);
    CHECK(r.entries[i].label == fa.entries[i].label);
    CHECK(r.entries[i].fold == fa.entries[i].fold);
  }
  CHECK(r.fold_of(fa.entries[3].scan_id) == fa.entries[3].fold);
  CHECK_THROWS_AS(r.fold_of("missing"), DataError);
}
