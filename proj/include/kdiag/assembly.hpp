#pragma once

#include "kdiag/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace kdiag::assembly {

// One dataset's record: labels map class name to 0/1; a key may also carry
// an explicit -1 (unobserved), which round-trips from merged exports. Absent
// keys are unobserved.
struct ManifestRecord {
  std::string id;
  std::string image;  // path relative to the manifest file, or a generator spec
  std::map<std::string, int> labels;
  std::string split;  // optional tag, empty if untagged
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> class_names;  // sorted union of label keys
  std::vector<ManifestRecord> records;
};

// Lowercases and collapses whitespace runs; the only reconciliation applied
// across datasets — synonyms deliberately stay distinct.
std::string normalize_name(const std::string& name);

// Wire format: one record per line, {"id","image","labels"} plus optional
// "split"; unknown fields are rejected.
DatasetManifest load_manifest(const std::string& path, const std::string& name = "");
void save_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest manifest_from_records(std::string name, std::vector<ManifestRecord> records);

struct DiseaseVocabulary {
  std::vector<std::string> names;  // unique, lexicographically sorted

  int index_of(const std::string& normalized) const;  // -1 when absent
};

DiseaseVocabulary build_union_vocabulary(const std::vector<DatasetManifest>& manifests);

struct MergedRecord {
  std::string source;  // manifest name
  std::string id;
  std::string image;
  LabelRecord labels;  // over the union vocabulary, -1 where unobserved
};

struct MergedDataset {
  DiseaseVocabulary vocabulary;
  std::vector<MergedRecord> records;
};

MergedDataset assemble(const std::vector<DatasetManifest>& manifests,
                       const DiseaseVocabulary& vocabulary);

// Audit export: same record format with every vocabulary class explicit,
// including -1 entries.
void save_merged(const std::string& path, const MergedDataset& merged);

// Deterministic shuffled partition; sizes floor(n*ratio) for val and test,
// remainder to train.
struct SplitResult {
  MergedDataset train, val, test;
};
SplitResult split(const MergedDataset& dataset, double train_ratio, double val_ratio,
                  double test_ratio, std::uint64_t seed);

// Experiment arms for the diversity-vs-amount decomposition. plus_diversity
// adds only pool records with no observed label in any target class, keeping
// the amount of target-class data constant. The seed parameter is accepted
// for interface stability; the construction is a deterministic filter.
struct DiversityArms {
  std::vector<DatasetManifest> separation, plus_diversity, plus_diversity_amount;
};
DiversityArms diversity_amount_arms(const DatasetManifest& target,
                                    const std::vector<DatasetManifest>& pool, std::uint64_t seed);

// Loads images referenced by a merged dataset into a training-ready Dataset.
// Relative image paths resolve against base_dir.
Dataset materialize(const MergedDataset& merged, const std::string& base_dir);

}  // namespace kdiag::assembly
