#include <doctest.h>

#include <cmath>

#include "covct/csv.hpp"
#include "covct/ensemble_metrics.hpp"
#include "covct/rng.hpp"
#include "test_util.hpp"

using namespace covct;
using testutil::TempDir;

namespace {

PredictionTable table(std::initializer_list<std::pair<std::string, double>> rows,
                      const std::string& tag = "t") {
  PredictionTable t;
  t.source_tag = tag;
  for (const auto& [id, p] : rows) t.entries[id] = p;
  return t;
}

PredictionTable random_table(uint64_t seed, int n) {
  Rng rng(seed);
  PredictionTable t;
  for (int i = 0; i < n; ++i) {
    t.entries["s" + std::to_string(i)] = rng.uniform();
  }
  return t;
}

// Builds matched prediction/truth tables realizing a confusion matrix.
std::pair<PredictionTable, std::map<std::string, Label>> realize_confusion(
    long long tp, long long fp, long long fn, long long tn) {
  PredictionTable pred;
  std::map<std::string, Label> truth;
  long long k = 0;
  auto add = [&](double p, Label l, long long count) {
    for (long long i = 0; i < count; ++i) {
      const std::string id = "r" + std::to_string(k++);
      pred.entries[id] = p;
      truth[id] = l;
    }
  };
  add(0.9, Label::Covid, tp);
  add(0.9, Label::NonCovid, fp);
  add(0.1, Label::Covid, fn);
  add(0.1, Label::NonCovid, tn);
  return {pred, truth};
}

}  // namespace

TEST_CASE("average_ensemble examples") {
  SUBCASE("mean of one table is the table") {
    const PredictionTable t = random_table(5, 10);
    const PredictionTable avg = average_ensemble({t});
    CHECK(avg.entries == t.entries);
  }
  SUBCASE("two tables average per scan") {
    const auto avg = average_ensemble({table({{"a", 0.6}}), table({{"a", 0.8}})});
    CHECK(avg.entries.at("a") == doctest::Approx(0.7).epsilon(1e-12));
  }
  SUBCASE("five tables") {
    std::vector<PredictionTable> ts;
    for (const double p : {0.9, 0.9, 0.9, 0.1, 0.1}) ts.push_back(table({{"a", p}}));
    CHECK(average_ensemble(ts).entries.at("a") == doctest::Approx(0.58).epsilon(1e-12));
  }
  SUBCASE("k copies of a table reproduce it exactly") {
    const PredictionTable t = random_table(6, 25);
    const PredictionTable avg = average_ensemble({t, t, t, t, t});
    CHECK(avg.entries == t.entries);
  }
  SUBCASE("means stay inside the per-scan envelope") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      std::vector<PredictionTable> ts;
      for (int k = 0; k < 4; ++k) ts.push_back(random_table(100 + seed * 4 + k, 15));
      const PredictionTable avg = average_ensemble(ts);
      for (const auto& [id, p] : avg.entries) {
        double lo = 1.0, hi = 0.0;
        for (const auto& t : ts) {
          lo = std::min(lo, t.entries.at(id));
          hi = std::max(hi, t.entries.at(id));
        }
        CHECK(p >= lo);
        CHECK(p <= hi);
      }
    }
  }
  SUBCASE("mismatched scan_ids report the difference") {
    try {
      average_ensemble({table({{"a", 0.5}, {"b", 0.5}}), table({{"a", 0.5}, {"c", 0.5}})});
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("b") != std::string::npos);
      CHECK(msg.find("c") != std::string::npos);
    }
  }
}

TEST_CASE("select_pseudo_labels applies the confidence rule") {
  const PredictionTable t =
      table({{"hi_cov", 0.72}, {"hi_non", 0.25}, {"low", 0.65}, {"edge", 0.7}});
  const PseudoLabelSet s = select_pseudo_labels(t, 0.7);

  REQUIRE(s.entries.count("hi_cov") == 1);
  CHECK(s.entries.at("hi_cov").label == Label::Covid);
  CHECK(s.entries.at("hi_cov").confidence == doctest::Approx(0.72));

  REQUIRE(s.entries.count("hi_non") == 1);
  CHECK(s.entries.at("hi_non").label == Label::NonCovid);
  CHECK(s.entries.at("hi_non").confidence == doctest::Approx(0.75));

  CHECK(s.entries.count("low") == 0);
  CHECK(s.entries.count("edge") == 1);  // the rule is >=, not >

  CHECK_THROWS_AS(select_pseudo_labels(t, 0.5), DataError);
  CHECK_THROWS_AS(select_pseudo_labels(t, 1.5), DataError);
}

TEST_CASE("confidence_filter examples and equivalence with selection") {
  const PredictionTable t = table({{"a", 0.9}, {"b", 0.6}, {"c", 0.2}});
  const PredictionTable f = confidence_filter(t, 0.7);
  CHECK(f.entries.size() == 2);
  CHECK(f.entries.count("a") == 1);
  CHECK(f.entries.count("c") == 1);

  SUBCASE("a threshold just above 0.5 keeps everything") {
    CHECK(confidence_filter(t, 0.500001).entries.size() == 3);
  }
  SUBCASE("empty table stays empty") {
    CHECK(confidence_filter(PredictionTable{}, 0.7).entries.empty());
  }
  SUBCASE("selected ids equal filtered ids for any threshold") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
      const PredictionTable r = random_table(seed, 40);
      for (const double thr : {0.55, 0.7, 0.9, 1.0}) {
        const auto sel = select_pseudo_labels(r, thr);
        const auto fil = confidence_filter(r, thr);
        REQUIRE(sel.entries.size() == fil.entries.size());
        for (const auto& [id, pl] : sel.entries) {
          CHECK(fil.entries.count(id) == 1);
        }
      }
    }
  }
  SUBCASE("raising the threshold never grows the selection") {
    const PredictionTable r = random_table(99, 60);
    size_t prev = select_pseudo_labels(r, 0.51).entries.size();
    for (double thr = 0.55; thr <= 1.0; thr += 0.05) {
      const size_t cur = select_pseudo_labels(r, thr).entries.size();
      CHECK(cur <= prev);
      prev = cur;
    }
  }
}

TEST_CASE("macro_f1 matches hand-computed confusions") {
  SUBCASE("perfect predictions") {
    const auto [pred, truth] = realize_confusion(3, 0, 0, 5);
    const MetricsReport m = macro_f1(pred, truth);
    CHECK(m.macro_f1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.accuracy == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("tp=3 fp=1 fn=1 tn=5") {
    const auto [pred, truth] = realize_confusion(3, 1, 1, 5);
    const MetricsReport m = macro_f1(pred, truth);
    CHECK(m.f1_covid == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(m.f1_non_covid == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
    CHECK(m.macro_f1 == doctest::Approx((0.75 + 5.0 / 6.0) / 2.0).epsilon(1e-9));
    CHECK(m.n_scored == 10);
  }
  SUBCASE("all-COVID predictor on the 170/156 validation profile") {
    const auto [pred, truth] = realize_confusion(170, 156, 0, 0);
    const MetricsReport m = macro_f1(pred, truth);
    CHECK(m.f1_covid == doctest::Approx(2.0 * 170 / (2.0 * 170 + 156)).epsilon(1e-9));
    CHECK(m.f1_non_covid == 0.0);
    CHECK(m.macro_f1 == doctest::Approx(170.0 / 496.0).epsilon(1e-9));
  }
  SUBCASE("missing truth label is an error") {
    const PredictionTable pred = table({{"a", 0.9}});
    CHECK_THROWS_AS(macro_f1(pred, {}), DataError);
  }
  SUBCASE("scan_id names do not matter") {
    const auto [pred_a, truth_a] = realize_confusion(4, 2, 3, 6);
    PredictionTable pred_b;
    std::map<std::string, Label> truth_b;
    for (const auto& [id, p] : pred_a.entries) {
      pred_b.entries["renamed_" + id] = p;
      truth_b["renamed_" + id] = truth_a.at(id);
    }
    const MetricsReport ma = macro_f1(pred_a, truth_a);
    const MetricsReport mb = macro_f1(pred_b, truth_b);
    CHECK(ma.macro_f1 == mb.macro_f1);
    CHECK(ma.f1_covid == mb.f1_covid);
  }
}

TEST_CASE("label swap exchanges the class F1s and keeps the macro") {
  Rng rng(888);
  for (int trial = 0; trial < 30; ++trial) {
    const long long tp = rng.below(50);
    const long long fp = rng.below(50);
    const long long fn = rng.below(50);
    const long long tn = rng.below(50);
    if (tp + fp + fn + tn == 0) continue;

    const auto [pred, truth] = realize_confusion(tp, fp, fn, tn);

    // Swap both sides: p -> 1-p and labels flipped.
    PredictionTable swapped_pred;
    std::map<std::string, Label> swapped_truth;
    for (const auto& [id, p] : pred.entries) swapped_pred.entries[id] = 1.0 - p;
    for (const auto& [id, l] : truth) {
      swapped_truth[id] = l == Label::Covid ? Label::NonCovid : Label::Covid;
    }

    const MetricsReport m = macro_f1(pred, truth);
    const MetricsReport s = macro_f1(swapped_pred, swapped_truth);
    CHECK(m.f1_covid == doctest::Approx(s.f1_non_covid).epsilon(1e-12));
    CHECK(m.f1_non_covid == doctest::Approx(s.f1_covid).epsilon(1e-12));
    CHECK(m.macro_f1 == doctest::Approx(s.macro_f1).epsilon(1e-12));
  }
}

TEST_CASE("build_finetune_manifest concatenates with origin flags") {
  ScanManifest labeled;
  for (int i = 0; i < 240; ++i) {
    labeled.entries.push_back({"lab" + std::to_string(i), "/p", Label::Covid, false});
  }
  PseudoLabelSet pseudo;
  for (int i = 0; i < 414; ++i) {
    pseudo.entries["un" + std::to_string(i)] = {Label::NonCovid, 0.8};
  }

  const ScanManifest merged = build_finetune_manifest(labeled, pseudo);
  CHECK(merged.entries.size() == 654);
  size_t pseudo_count = 0;
  for (const auto& e : merged.entries) {
    if (e.pseudo_labeled) {
      pseudo_count++;
      CHECK(e.label == Label::NonCovid);
    }
  }
  CHECK(pseudo_count == 414);

  SUBCASE("empty pseudo set leaves the manifest unchanged") {
    const ScanManifest same = build_finetune_manifest(labeled, {});
    CHECK(same.entries.size() == labeled.entries.size());
  }
  SUBCASE("id collision is an error naming the id") {
    PseudoLabelSet bad;
    bad.entries["lab3"] = {Label::Covid, 0.9};
    try {
      build_finetune_manifest(labeled, bad);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("lab3") != std::string::npos);
    }
  }
  SUBCASE("paths are joined from the unlabeled manifest") {
    ScanManifest unlabeled;
    for (int i = 0; i < 414; ++i) {
      unlabeled.entries.push_back(
          {"un" + std::to_string(i), "/vol/un" + std::to_string(i), std::nullopt, false});
    }
    const ScanManifest joined = build_finetune_manifest(labeled, pseudo, &unlabeled);
    CHECK(joined.find("un7")->path == "/vol/un7");

    PseudoLabelSet missing;
    missing.entries["ghost"] = {Label::Covid, 0.9};
    CHECK_THROWS_AS(build_finetune_manifest(labeled, missing, &unlabeled), DataError);
  }
}

TEST_CASE("prediction and pseudo-label CSVs round-trip exactly") {
  TempDir dir;
  const PredictionTable t = random_table(777, 30);
  save_predictions(t, dir.str("p.csv"));
  const PredictionTable r = load_predictions(dir.str("p.csv"));
  CHECK(r.entries == t.entries);

  const PseudoLabelSet s = select_pseudo_labels(t, 0.6);
  save_pseudo_labels(s, dir.str("pl.csv"));
  const PseudoLabelSet rs = load_pseudo_labels(dir.str("pl.csv"));
  REQUIRE(rs.entries.size() == s.entries.size());
  for (const auto& [id, pl] : s.entries) {
    CHECK(rs.entries.at(id).label == pl.label);
    CHECK(rs.entries.at(id).confidence == pl.confidence);
  }

  SUBCASE("probability out of range is rejected") {
    csv::write_text_file(dir.str("bad.csv"), "scan_id,p_covid\na,1.2\n");
    CHECK_THROWS_AS(load_predictions(dir.str("bad.csv")), DataError);
  }
}

TEST_CASE("load_truth_labels picks columns by header name") {
  TempDir dir;
  csv::write_text_file(dir.str("t.csv"),
                       "scan_id,label,fold\na,COVID,0\nb,NON_COVID,3\n");
  const auto truth = load_truth_labels(dir.str("t.csv"));
  CHECK(truth.at("a") == Label::Covid);
  CHECK(truth.at("b") == Label::NonCovid);

  csv::write_text_file(dir.str("m.csv"), "scan_id,path,label\nx,/p,\ny,/q,COVID\n");
  const auto partial = load_truth_labels(dir.str("m.csv"));
  CHECK(partial.size() == 1);  // unlabeled rows skipped
  CHECK(partial.at("y") == Label::Covid);
}
