#include "kdiag/synth.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kdiag::synth {
namespace {

using ordered_json = nlohmann::ordered_json;

const char* kAttributeWords[] = {
    "banded",  "mottled",   "nodular",  "streaked", "stippled", "wedged",
    "ringed",  "patchy",    "coarse",   "granular", "curved",   "angular",
    "dense",   "faint",     "lobed",    "reticular", "linear",  "rounded",
    "clustered", "diffuse", "marginal", "central",  "flared",   "tapered"};

const char* kFeatureNouns[] = {"texture", "pattern", "margin", "opacity", "shading", "contour"};

std::string attribute_word(int i) {
  constexpr int n = static_cast<int>(sizeof(kAttributeWords) / sizeof(kAttributeWords[0]));
  if (i < n) return kAttributeWords[i];
  return "trait" + std::to_string(i);
}

std::string make_name(const std::vector<std::uint8_t>& code) {
  std::string name;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (!code[i]) continue;
    if (!name.empty()) name += ' ';
    name += attribute_word(static_cast<int>(i));
  }
  return name;
}

std::string make_definition(const std::vector<std::uint8_t>& code) {
  std::string body;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (!code[i]) continue;
    if (!body.empty()) body += " and ";
    body += attribute_word(static_cast<int>(i));
    body += ' ';
    body += kFeatureNouns[i % 6];
  }
  return "A finding characterized by " + body + ".";
}

std::string code_key(const std::vector<std::uint8_t>& code) {
  std::string k(code.size(), '0');
  for (std::size_t i = 0; i < code.size(); ++i)
    if (code[i]) k[i] = '1';
  return k;
}

std::vector<std::uint8_t> draw_code(Rng& rng, int attribute_len) {
  int max_active = std::min(3, attribute_len);
  int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_active)));
  std::vector<int> idx(attribute_len);
  for (int i = 0; i < attribute_len; ++i) idx[i] = i;
  rng.shuffle(idx);
  std::vector<std::uint8_t> code(attribute_len, 0);
  for (int i = 0; i < k; ++i) code[idx[i]] = 1;
  return code;
}

Concept make_concept(int index, std::vector<std::uint8_t> code) {
  Concept c;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "cpt-%04d", index);
  c.id = buf;
  c.name = make_name(code);
  c.definition = make_definition(code);
  c.attributes = std::move(code);
  return c;
}

}  // namespace

ConceptCatalog generate_catalog(int num_concepts, int attribute_len, std::uint64_t seed) {
  if (num_concepts < 2) throw ParameterError("generate_catalog: num_concepts must be >= 2");
  if (attribute_len < 2) throw ParameterError("generate_catalog: attribute_len must be >= 2");
  ConceptCatalog cat;
  cat.seed = seed;
  cat.attribute_len = static_cast<std::size_t>(attribute_len);
  Rng rng(mix_seed(seed, 0xCA7A106));
  std::set<std::string> used;
  for (int i = 0; i < num_concepts; ++i) {
    std::vector<std::uint8_t> code;
    int tries = 0;
    do {
      code = draw_code(rng, attribute_len);
      if (++tries > 10000) throw ParameterError("generate_catalog: attribute space exhausted");
    } while (used.count(code_key(code)));
    used.insert(code_key(code));
    cat.concepts.push_back(make_concept(i, std::move(code)));
  }
  return cat;
}

ConceptCatalog generate_zero_shot_catalog(int num_seen, int num_unseen, int num_background,
                                          int attribute_len, std::uint64_t seed) {
  if (num_seen < 2) throw ParameterError("zero_shot_catalog: num_seen must be >= 2");
  if (num_unseen < 0 || num_background < 0) throw ParameterError("zero_shot_catalog: negative counts");
  if (attribute_len < 2) throw ParameterError("zero_shot_catalog: attribute_len must be >= 2");
  ConceptCatalog cat;
  cat.seed = seed;
  cat.attribute_len = static_cast<std::size_t>(attribute_len);
  Rng rng(mix_seed(seed, 0x25EED));
  std::set<std::string> used;
  auto push = [&](std::vector<std::uint8_t> code) {
    used.insert(code_key(code));
    cat.concepts.push_back(make_concept(static_cast<int>(cat.concepts.size()), std::move(code)));
  };
  for (int i = 0; i < num_seen; ++i) {
    std::vector<std::uint8_t> code;
    int tries = 0;
    do {
      code = draw_code(rng, attribute_len);
      if (++tries > 10000) throw ParameterError("zero_shot_catalog: attribute space exhausted");
    } while (used.count(code_key(code)));
    push(std::move(code));
  }
  for (int i = 0; i < num_unseen; ++i) {
    std::vector<std::uint8_t> code;
    int tries = 0;
    while (true) {
      if (++tries > 10000) throw ParameterError("zero_shot_catalog: no novel union found");
      int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_seen)));
      int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_seen)));
      if (a == b) continue;
      const auto& ca = cat.concepts[a].attributes;
      const auto& cb = cat.concepts[b].attributes;
      code.assign(ca.size(), 0);
      for (std::size_t j = 0; j < ca.size(); ++j) code[j] = (ca[j] || cb[j]) ? 1 : 0;
      // the union must extend both parts, otherwise it is not a new finding
      if (code == ca || code == cb) continue;
      if (!used.count(code_key(code))) break;
    }
    push(std::move(code));
  }
  for (int i = 0; i < num_background; ++i) {
    std::vector<std::uint8_t> code;
    int tries = 0;
    do {
      code = draw_code(rng, attribute_len);
      if (++tries > 10000) throw ParameterError("zero_shot_catalog: attribute space exhausted");
    } while (used.count(code_key(code)));
    push(std::move(code));
  }
  return cat;
}

std::string catalog_to_string(const ConceptCatalog& catalog) {
  std::ostringstream out;
  for (const auto& c : catalog.concepts) {
    ordered_json rec;
    rec["id"] = c.id;
    rec["name"] = c.name;
    rec["definition"] = c.definition;
    rec["attributes"] = code_key(c.attributes);
    out << rec.dump() << '\n';
  }
  return out.str();
}

void save_catalog(const ConceptCatalog& catalog, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write catalog: " + path);
  f << catalog_to_string(catalog);
}

ConceptCatalog catalog_from_string(const std::string& text) {
  ConceptCatalog cat;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw InputError("catalog line " + std::to_string(lineno) + ": " + e.what());
    }
    for (auto it = rec.begin(); it != rec.end(); ++it) {
      const std::string& k = it.key();
      if (k != "id" && k != "name" && k != "definition" && k != "attributes")
        throw InputError("catalog line " + std::to_string(lineno) + ": unknown field '" + k + "'");
    }
    Concept c;
    try {
      c.id = rec.at("id").get<std::string>();
      c.name = rec.at("name").get<std::string>();
      c.definition = rec.at("definition").get<std::string>();
      std::string bits = rec.at("attributes").get<std::string>();
      for (char ch : bits) {
        if (ch != '0' && ch != '1')
          throw InputError("catalog line " + std::to_string(lineno) + ": attributes must be 0/1");
        c.attributes.push_back(ch == '1' ? 1 : 0);
      }
    } catch (const ordered_json::exception& e) {
      throw InputError("catalog line " + std::to_string(lineno) + ": " + e.what());
    }
    if (c.name.empty() || c.definition.empty())
      throw InputError("catalog line " + std::to_string(lineno) + ": empty name or definition");
    if (!ids.insert(c.id).second)
      throw InputError("catalog line " + std::to_string(lineno) + ": duplicate id " + c.id);
    if (!cat.concepts.empty() && c.attributes.size() != cat.attribute_len)
      throw InputError("catalog line " + std::to_string(lineno) + ": inconsistent attribute length");
    cat.attribute_len = c.attributes.size();
    cat.concepts.push_back(std::move(c));
  }
  return cat;
}

ConceptCatalog load_catalog(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read catalog: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return catalog_from_string(ss.str());
}

MatD primitive_pattern(int attr_index, int attribute_len, int image_size) {
  if (attr_index < 0 || attr_index >= attribute_len)
    throw ParameterError("primitive_pattern: attribute index out of range");
  int ncols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(attribute_len))));
  int nrows = (attribute_len + ncols - 1) / ncols;
  int cell_h = image_size / nrows;
  int cell_w = image_size / ncols;
  if (cell_h < 2 || cell_w < 2)
    throw ParameterError("primitive_pattern: image too small for the attribute grid");
  int cr = attr_index / ncols, cc = attr_index % ncols;
  int r0 = cr * cell_h, c0 = cc * cell_w;
  MatD img = MatD::Zero(image_size, image_size);
  switch (attr_index % 3) {
    case 0:  // horizontal stripes
      for (int r = r0; r < r0 + cell_h; r += 2)
        for (int c = c0; c < c0 + cell_w; ++c) img(r, c) = 0.9;
      break;
    case 1: {  // centered blob
      double rc = r0 + (cell_h - 1) / 2.0, cc2 = c0 + (cell_w - 1) / 2.0;
      double radius = std::max(1.0, std::min(cell_h, cell_w) / 2.0 - 0.5);
      for (int r = r0; r < r0 + cell_h; ++r)
        for (int c = c0; c < c0 + cell_w; ++c) {
          double dr = r - rc, dc = c - cc2;
          if (dr * dr + dc * dc <= radius * radius) img(r, c) = 1.0;
        }
      break;
    }
    default: {  // corner wedge
      int extent = std::min(cell_h, cell_w);
      for (int r = r0; r < r0 + cell_h; ++r)
        for (int c = c0; c < c0 + cell_w; ++c)
          if ((r - r0) + (c - c0) < extent) img(r, c) = 0.75;
      break;
    }
  }
  return img;
}

MatD concept_pattern(const Concept& cpt, int attribute_len, int image_size) {
  MatD img = MatD::Zero(image_size, image_size);
  for (int a = 0; a < attribute_len; ++a)
    if (cpt.attributes[static_cast<std::size_t>(a)])
      img += primitive_pattern(a, attribute_len, image_size);
  return img;
}

MatD concept_support(const Concept& cpt, int attribute_len, int image_size) {
  MatD img = concept_pattern(cpt, attribute_len, image_size);
  return (img.array() > 0.0).cast<double>();
}

MatD support_to_token_grid(const MatD& pixel_mask, int token_h, int token_w) {
  MatD grid = MatD::Zero(token_h, token_w);
  const int H = static_cast<int>(pixel_mask.rows()), W = static_cast<int>(pixel_mask.cols());
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c)
      if (pixel_mask(r, c) > 0.0) {
        int tr = std::min(token_h - 1, r * token_h / H);
        int tc = std::min(token_w - 1, c * token_w / W);
        grid(tr, tc) = 1.0;
      }
  return grid;
}

Dataset render_dataset(const ConceptCatalog& catalog, const SyntheticWorldSpec& spec) {
  if (spec.num_classes > static_cast<int>(catalog.concepts.size()))
    throw ParameterError("render_dataset: num_classes exceeds catalog size");
  if (spec.image_size < 8) throw ParameterError("render_dataset: image_size must be >= 8");
  if (spec.noise_sigma < 0) throw ParameterError("render_dataset: noise_sigma must be >= 0");
  if (spec.samples_per_class < 1) throw ParameterError("render_dataset: samples_per_class must be >= 1");

  const int Q = spec.num_classes;
  const int A = static_cast<int>(catalog.attribute_len);
  Dataset ds;
  for (int q = 0; q < Q; ++q) ds.class_names.push_back(catalog.concepts[q].name);

  std::vector<MatD> base(Q);
  for (int q = 0; q < Q; ++q) base[q] = concept_pattern(catalog.concepts[q], A, spec.image_size);

  for (int c = 0; c < Q; ++c) {
    LabelRecord labels;
    labels.values.resize(Q);
    for (int q = 0; q < Q; ++q)
      labels.values[q] = catalog.concepts[q].attr_subset_of(catalog.concepts[c]) ? 1 : 0;
    for (int s = 0; s < spec.samples_per_class; ++s) {
      Sample sample;
      sample.id = "c" + std::to_string(c) + "-s" + std::to_string(s);
      sample.pixels = base[c];
      if (spec.noise_sigma > 0) {
        Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(s)));
        for (int r = 0; r < spec.image_size; ++r)
          for (int col = 0; col < spec.image_size; ++col)
            sample.pixels(r, col) =
                std::clamp(sample.pixels(r, col) + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0);
      }
      sample.labels = labels;
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

Dataset hide_labels(const Dataset& dataset, const std::set<std::string>& visible_classes) {
  std::set<std::string> known(dataset.class_names.begin(), dataset.class_names.end());
  for (const auto& v : visible_classes)
    if (!known.count(v)) throw VocabularyError("hide_labels: unknown class '" + v + "'");
  Dataset out = dataset;
  std::vector<bool> visible(dataset.class_names.size(), false);
  for (std::size_t q = 0; q < dataset.class_names.size(); ++q)
    visible[q] = visible_classes.count(dataset.class_names[q]) > 0;
  for (auto& s : out.samples)
    for (std::size_t q = 0; q < s.labels.values.size(); ++q)
      if (!visible[q]) s.labels.values[q] = -1;
  return out;
}

}  // namespace kdiag::synth
