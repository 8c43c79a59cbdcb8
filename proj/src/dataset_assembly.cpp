#include "kdiag/assembly.hpp"

#include "kdiag/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <set>

namespace kdiag::assembly {

std::string normalize_name(const std::string& name) {
  std::string out;
  bool pending_space = false;
  for (unsigned char ch : name) {
    if (std::isspace(ch)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(ch)));
  }
  return out;
}

DatasetManifest manifest_from_records(std::string name, std::vector<ManifestRecord> records) {
  DatasetManifest m;
  m.name = std::move(name);
  m.records = std::move(records);
  std::set<std::string> classes;
  for (const auto& r : m.records)
    for (const auto& [cls, v] : r.labels) {
      if (v != 0 && v != 1 && v != -1)
        throw InputError("manifest " + m.name + ": label value outside {0,1,-1} for " + cls);
      classes.insert(cls);
    }
  m.class_names.assign(classes.begin(), classes.end());
  return m;
}

DatasetManifest load_manifest(const std::string& path, const std::string& name) {
  std::vector<ManifestRecord> records;
  int lineno = 0;
  for (const auto& rec : io::read_jsonl(path)) {
    ++lineno;
    for (auto it = rec.begin(); it != rec.end(); ++it) {
      const std::string& k = it.key();
      if (k != "id" && k != "image" && k != "labels" && k != "split")
        throw InputError(path + " record " + std::to_string(lineno) + ": unknown field '" + k + "'");
    }
    ManifestRecord r;
    try {
      r.id = rec.at("id").get<std::string>();
      r.image = rec.at("image").get<std::string>();
      for (const auto& [cls, v] : rec.at("labels").items()) {
        if (!v.is_number_integer())
          throw InputError(path + " record " + std::to_string(lineno) + ": non-integer label");
        r.labels[cls] = v.get<int>();
      }
      if (rec.contains("split")) r.split = rec.at("split").get<std::string>();
    } catch (const io::ordered_json::exception& e) {
      throw InputError(path + " record " + std::to_string(lineno) + ": " + e.what());
    }
    if (r.id.empty()) throw InputError(path + " record " + std::to_string(lineno) + ": empty id");
    records.push_back(std::move(r));
  }
  std::string manifest_name = name.empty() ? std::filesystem::path(path).stem().string() : name;
  return manifest_from_records(std::move(manifest_name), std::move(records));
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::vector<io::ordered_json> lines;
  lines.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    io::ordered_json rec;
    rec["id"] = r.id;
    rec["image"] = r.image;
    io::ordered_json labels = io::ordered_json::object();
    for (const auto& [cls, v] : r.labels) labels[cls] = v;
    rec["labels"] = std::move(labels);
    if (!r.split.empty()) rec["split"] = r.split;
    lines.push_back(std::move(rec));
  }
  io::write_jsonl(path, lines);
}

int DiseaseVocabulary::index_of(const std::string& normalized) const {
  auto it = std::lower_bound(names.begin(), names.end(), normalized);
  if (it == names.end() || *it != normalized) return -1;
  return static_cast<int>(it - names.begin());
}

DiseaseVocabulary build_union_vocabulary(const std::vector<DatasetManifest>& manifests) {
  if (manifests.empty()) throw InputError("build_union_vocabulary: no manifests");
  std::set<std::string> names;
  for (const auto& m : manifests)
    for (const auto& cls : m.class_names) names.insert(normalize_name(cls));
  DiseaseVocabulary vocab;
  vocab.names.assign(names.begin(), names.end());
  return vocab;
}

MergedDataset assemble(const std::vector<DatasetManifest>& manifests,
                       const DiseaseVocabulary& vocabulary) {
  MergedDataset out;
  out.vocabulary = vocabulary;
  const int Q = static_cast<int>(vocabulary.names.size());
  for (const auto& m : manifests) {
    for (const auto& r : m.records) {
      MergedRecord mr;
      mr.source = m.name;
      mr.id = r.id;
      mr.image = r.image;
      mr.labels.values.assign(static_cast<std::size_t>(Q), -1);
      for (const auto& [cls, v] : r.labels) {
        const int idx = vocabulary.index_of(normalize_name(cls));
        if (idx < 0)
          throw VocabularyError("assemble: class '" + cls + "' outside the vocabulary");
        mr.labels.values[static_cast<std::size_t>(idx)] = static_cast<std::int8_t>(v);
      }
      out.records.push_back(std::move(mr));
    }
  }
  return out;
}

void save_merged(const std::string& path, const MergedDataset& merged) {
  std::vector<io::ordered_json> lines;
  lines.reserve(merged.records.size());
  for (const auto& r : merged.records) {
    io::ordered_json rec;
    rec["id"] = r.id;
    rec["image"] = r.image;
    io::ordered_json labels = io::ordered_json::object();
    for (std::size_t q = 0; q < merged.vocabulary.names.size(); ++q)
      labels[merged.vocabulary.names[q]] = static_cast<int>(r.labels.values[q]);
    rec["labels"] = std::move(labels);
    lines.push_back(std::move(rec));
  }
  io::write_jsonl(path, lines);
}

SplitResult split(const MergedDataset& dataset, double train_ratio, double val_ratio,
                  double test_ratio, std::uint64_t seed) {
  if (train_ratio < 0 || val_ratio < 0 || test_ratio < 0)
    throw InputError("split: ratios must be non-negative");
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
    throw InputError("split: ratios must sum to 1");
  const std::size_t n = dataset.records.size();
  const std::size_t n_val = static_cast<std::size_t>(std::floor(n * val_ratio));
  const std::size_t n_test = static_cast<std::size_t>(std::floor(n * test_ratio));
  const std::size_t n_train = n - n_val - n_test;

  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  Rng rng(mix_seed(seed, 0x5B117));
  rng.shuffle(order);

  SplitResult out;
  out.train.vocabulary = out.val.vocabulary = out.test.vocabulary = dataset.vocabulary;
  for (std::size_t i = 0; i < n; ++i) {
    const MergedRecord& r = dataset.records[static_cast<std::size_t>(order[i])];
    if (i < n_train)
      out.train.records.push_back(r);
    else if (i < n_train + n_val)
      out.val.records.push_back(r);
    else
      out.test.records.push_back(r);
  }
  return out;
}

DiversityArms diversity_amount_arms(const DatasetManifest& target,
                                    const std::vector<DatasetManifest>& pool, std::uint64_t seed) {
  (void)seed;
  for (const auto& m : pool)
    if (m.name == target.name) throw InputError("diversity_amount_arms: target appears in the pool");

  std::set<std::string> target_classes;
  for (const auto& cls : target.class_names) target_classes.insert(normalize_name(cls));

  DiversityArms arms;
  arms.separation = {target};
  arms.plus_diversity = {target};
  arms.plus_diversity_amount = {target};
  for (const auto& m : pool) {
    std::vector<ManifestRecord> diverse;
    for (const auto& r : m.records) {
      bool touches_target = false;
      for (const auto& [cls, v] : r.labels)
        if (v != -1 && target_classes.count(normalize_name(cls))) touches_target = true;
      if (!touches_target) diverse.push_back(r);
    }
    if (!diverse.empty())
      arms.plus_diversity.push_back(manifest_from_records(m.name, std::move(diverse)));
    arms.plus_diversity_amount.push_back(m);
  }
  return arms;
}

Dataset materialize(const MergedDataset& merged, const std::string& base_dir) {
  Dataset ds;
  ds.class_names = merged.vocabulary.names;
  for (const auto& r : merged.records) {
    Sample s;
    s.id = r.id;
    std::filesystem::path p(r.image);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    s.pixels = io::read_pgm(p.string());
    s.labels = r.labels;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace kdiag::assembly
