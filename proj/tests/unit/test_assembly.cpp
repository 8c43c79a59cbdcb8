#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kdiag/assembly.hpp"

using namespace kdiag;
using namespace kdiag::assembly;

namespace {

ManifestRecord mrec(const std::string& id, std::map<std::string, int> labels) {
  ManifestRecord r;
  r.id = id;
  r.image = "images/" + id + ".pgm";
  r.labels = std::move(labels);
  return r;
}

DatasetManifest two_class(const std::string& name, const std::string& a, const std::string& b) {
  return manifest_from_records(
      name, {mrec(name + "-0", {{a, 1}, {b, 0}}), mrec(name + "-1", {{a, 0}, {b, 1}})});
}

}  // namespace

TEST_CASE("normalize_name: lowercase with collapsed whitespace") {
  CHECK(normalize_name("No Finding") == "no finding");
  CHECK(normalize_name("no finding") == "no finding");
  CHECK(normalize_name("  No \t Finding  ") == "no finding");
  CHECK(normalize_name("PNEUMONIA") == "pneumonia");
  CHECK(normalize_name("") == "");
}

TEST_CASE("vocabulary: union is sorted, normalized and order-independent") {
  DatasetManifest m1 = two_class("one", "pneumonia", "edema");
  DatasetManifest m2 = two_class("two", "edema", "mass");
  DiseaseVocabulary v = build_union_vocabulary({m1, m2});
  CHECK(v.names == std::vector<std::string>{"edema", "mass", "pneumonia"});
  DiseaseVocabulary rev = build_union_vocabulary({m2, m1});
  CHECK(rev.names == v.names);

  DiseaseVocabulary solo = build_union_vocabulary({m1});
  CHECK(solo.names == std::vector<std::string>{"edema", "pneumonia"});

  DatasetManifest cased = manifest_from_records("three", {mrec("x", {{"No Finding", 1}})});
  DatasetManifest spaced = manifest_from_records("four", {mrec("y", {{"no  finding", 0}})});
  DiseaseVocabulary folded = build_union_vocabulary({cased, spaced});
  CHECK(folded.names == std::vector<std::string>{"no finding"});

  CHECK_THROWS_AS(build_union_vocabulary({}), InputError);

  CHECK(v.index_of("mass") == 1);
  CHECK(v.index_of("fracture") == -1);
}

TEST_CASE("assemble: fills unobserved classes with -1 in vocabulary order") {
  DatasetManifest m = manifest_from_records("solo", {mrec("r0", {{"pneumonia", 1}})});
  DiseaseVocabulary v;
  v.names = {"edema", "mass", "pneumonia"};
  MergedDataset merged = assemble({m}, v);
  REQUIRE(merged.records.size() == 1);
  CHECK(merged.records[0].labels.values == std::vector<std::int8_t>{-1, -1, 1});
  CHECK(merged.records[0].source == "solo");
  CHECK(merged.records[0].id == "r0");
}

TEST_CASE("assemble: full labeling leaves no -1, counts are additive") {
  DatasetManifest m1 = two_class("one", "pneumonia", "edema");
  DatasetManifest m2 = two_class("two", "edema", "mass");
  DiseaseVocabulary v = build_union_vocabulary({m1, m2});
  MergedDataset merged = assemble({m1, m2}, v);
  CHECK(merged.records.size() == m1.records.size() + m2.records.size());

  DatasetManifest full = manifest_from_records(
      "full", {mrec("f0", {{"edema", 1}, {"mass", 0}, {"pneumonia", 0}})});
  MergedDataset all = assemble({full}, v);
  for (auto x : all.records[0].labels.values) CHECK(x != -1);

  // Record order: manifest order, manifests in input order.
  CHECK(merged.records[0].id == "one-0");
  CHECK(merged.records[2].id == "two-0");

  DatasetManifest alien = manifest_from_records("alien", {mrec("a0", {{"fracture", 1}})});
  CHECK_THROWS_AS(assemble({alien}, v), VocabularyError);
}

TEST_CASE("assemble: lossless restriction back to the source labels") {
  DatasetManifest m1 = two_class("one", "pneumonia", "edema");
  DatasetManifest m2 = two_class("two", "edema", "mass");
  DiseaseVocabulary v = build_union_vocabulary({m1, m2});
  MergedDataset merged = assemble({m1, m2}, v);

  std::size_t cursor = 0;
  for (const auto& m : {m1, m2})
    for (const auto& r : m.records) {
      const MergedRecord& mr = merged.records[cursor++];
      for (const auto& [cls, value] : r.labels) {
        int idx = v.index_of(normalize_name(cls));
        REQUIRE(idx >= 0);
        CHECK(static_cast<int>(mr.labels.values[static_cast<std::size_t>(idx)]) == value);
      }
      // Everything outside the source classes is unobserved.
      for (std::size_t q = 0; q < v.names.size(); ++q)
        if (!r.labels.count(v.names[q]))
          CHECK(mr.labels.values[q] == -1);
    }
}

TEST_CASE("split: floor-allocated sizes, remainder to train") {
  std::vector<ManifestRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(mrec("r" + std::to_string(i), {{"a", i % 2}}));
  DatasetManifest m = manifest_from_records("ten", recs);
  DiseaseVocabulary v = build_union_vocabulary({m});
  MergedDataset merged = assemble({m}, v);

  SplitResult s = split(merged, 0.7, 0.1, 0.2, 3);
  CHECK(s.train.records.size() == 7);
  CHECK(s.val.records.size() == 1);
  CHECK(s.test.records.size() == 2);

  SplitResult all_train = split(merged, 1.0, 0.0, 0.0, 3);
  CHECK(all_train.train.records.size() == 10);
  CHECK(all_train.val.records.empty());
  CHECK(all_train.test.records.empty());

  SplitResult again = split(merged, 0.7, 0.1, 0.2, 3);
  for (std::size_t i = 0; i < 7; ++i) CHECK(again.train.records[i].id == s.train.records[i].id);

  // Disjoint and covering by ids.
  std::multiset<std::string> ids;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const auto& r : part->records) ids.insert(r.id);
  std::multiset<std::string> expect;
  for (const auto& r : merged.records) expect.insert(r.id);
  CHECK(ids == expect);

  CHECK_THROWS_AS(split(merged, 0.8, 0.3, -0.1, 0), InputError);
  CHECK_THROWS_AS(split(merged, 0.5, 0.2, 0.2, 0), InputError);
}

TEST_CASE("arms: empty pool collapses all three to the target alone") {
  DatasetManifest target = two_class("target", "edema", "mass");
  DiversityArms arms = diversity_amount_arms(target, {}, 0);
  CHECK(arms.separation.size() == 1);
  CHECK(arms.plus_diversity.size() == 1);
  CHECK(arms.plus_diversity_amount.size() == 1);
  CHECK(arms.separation[0].name == "target");
}

TEST_CASE("arms: pool records labeling target classes are filtered from the diversity arm") {
  DatasetManifest target = two_class("target", "edema", "mass");
  // Every pool record observes a target class: diversity adds nothing.
  DatasetManifest touching = manifest_from_records(
      "touch", {mrec("t0", {{"edema", 0}, {"nodule", 1}}), mrec("t1", {{"mass", 1}})});
  DiversityArms arms = diversity_amount_arms(target, {touching}, 0);
  CHECK(arms.plus_diversity.size() == 1);  // target only
  CHECK(arms.plus_diversity_amount.size() == 2);

  // An explicit -1 on a target class does not count as observing it.
  DatasetManifest masked = manifest_from_records(
      "masked", {mrec("m0", {{"edema", -1}, {"nodule", 1}})});
  DiversityArms arms2 = diversity_amount_arms(target, {masked}, 0);
  REQUIRE(arms2.plus_diversity.size() == 2);
  CHECK(arms2.plus_diversity[1].records.size() == 1);

  CHECK_THROWS_AS(diversity_amount_arms(target, {target}, 0), InputError);
}

TEST_CASE("arms: diversity filter matches a brute-force oracle") {
  DatasetManifest target = two_class("target", "edema", "mass");
  // Half-overlapping pool: some records observe target classes, some do not.
  std::vector<ManifestRecord> recs;
  for (int i = 0; i < 12; ++i) {
    std::map<std::string, int> labels;
    if (i % 3 == 0) labels["edema"] = i % 2;
    labels["nodule"] = (i + 1) % 2;
    if (i % 4 == 0) labels["fracture"] = 1;
    recs.push_back(mrec("p" + std::to_string(i), std::move(labels)));
  }
  DatasetManifest pool = manifest_from_records("pool", recs);
  DiversityArms arms = diversity_amount_arms(target, {pool}, 0);

  std::size_t expect = 0;
  for (const auto& r : recs) {
    bool touches = false;
    for (const auto& [cls, v] : r.labels)
      if (v != -1 && (normalize_name(cls) == "edema" || normalize_name(cls) == "mass"))
        touches = true;
    if (!touches) ++expect;
  }
  REQUIRE(arms.plus_diversity.size() == 2);
  CHECK(arms.plus_diversity[1].records.size() == expect);

  // Arm ordering by total record count.
  auto total = [](const std::vector<DatasetManifest>& arm) {
    std::size_t n = 0;
    for (const auto& m : arm) n += m.records.size();
    return n;
  };
  CHECK(total(arms.separation) <= total(arms.plus_diversity));
  CHECK(total(arms.plus_diversity) <= total(arms.plus_diversity_amount));
}

TEST_CASE("manifest files: bit-exact round trip and strict parsing") {
  DatasetManifest m = manifest_from_records(
      "disk", {mrec("d0", {{"edema", 1}, {"mass", -1}}), mrec("d1", {{"edema", 0}})});
  m.records[1].split = "val";
  const std::string path = "test_manifest_roundtrip.jsonl";
  save_manifest(path, m);
  DatasetManifest back = load_manifest(path);
  CHECK(back.name == "test_manifest_roundtrip");
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[0].labels == m.records[0].labels);
  CHECK(back.records[1].split == "val");
  CHECK(back.class_names == m.class_names);

  DatasetManifest named = load_manifest(path, "renamed");
  CHECK(named.name == "renamed");
  std::remove(path.c_str());

  auto write = [](const std::string& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
  };
  const std::string bad = "test_manifest_bad.jsonl";
  write(bad, "{\"id\":\"x\",\"image\":\"x.pgm\",\"labels\":{},\"extra\":1}\n");
  CHECK_THROWS_AS(load_manifest(bad), InputError);
  write(bad, "{\"id\":\"x\",\"image\":\"x.pgm\",\"labels\":{\"a\":0.5}}\n");
  CHECK_THROWS_AS(load_manifest(bad), InputError);
  write(bad, "{\"id\":\"\",\"image\":\"x.pgm\",\"labels\":{}}\n");
  CHECK_THROWS_AS(load_manifest(bad), InputError);
  write(bad, "{\"id\":\"x\",\"image\":\"x.pgm\",\"labels\":{\"a\":7}}\n");
  CHECK_THROWS_AS(load_manifest(bad), InputError);
  std::remove(bad.c_str());
  CHECK_THROWS_AS(load_manifest("test_manifest_missing.jsonl"), InputError);
}

TEST_CASE("merged export: explicit -1 entries for audit") {
  DatasetManifest m = manifest_from_records("solo", {mrec("r0", {{"pneumonia", 1}})});
  DiseaseVocabulary v;
  v.names = {"edema", "pneumonia"};
  MergedDataset merged = assemble({m}, v);
  const std::string path = "test_merged_export.jsonl";
  save_merged(path, merged);

  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line.find("\"edema\":-1") != std::string::npos);
  CHECK(line.find("\"pneumonia\":1") != std::string::npos);
  f.close();

  // The export is itself a loadable manifest that assembles back losslessly.
  DatasetManifest back = load_manifest(path);
  MergedDataset again = assemble({back}, v);
  REQUIRE(again.records.size() == 1);
  CHECK(again.records[0].labels.values == merged.records[0].labels.values);
  std::remove(path.c_str());
}
