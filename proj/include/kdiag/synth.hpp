#pragma once

#include "kdiag/types.hpp"

#include <set>

namespace kdiag::synth {

// A named concept with a definition sentence and a binary semantic code.
// The code drives both the generated text and the rendered pixels, so
// knowledge transfer between related concepts is causally checkable.
struct Concept {
  std::string id;
  std::string name;
  std::string definition;
  std::vector<std::uint8_t> attributes;  // 0/1, same length catalog-wide

  bool attr_subset_of(const Concept& other) const {
    for (std::size_t i = 0; i < attributes.size(); ++i)
      if (attributes[i] && !other.attributes[i]) return false;
    return true;
  }
};

struct ConceptCatalog {
  std::vector<Concept> concepts;
  std::uint64_t seed = 0;
  std::size_t attribute_len = 0;
};

// Deterministic catalog with 1..3 active attributes per concept and
// pairwise-distinct codes.
ConceptCatalog generate_catalog(int num_concepts, int attribute_len, std::uint64_t seed);

// Catalog layout for open-set experiments: first num_seen concepts carry
// random codes, the next num_unseen carry unions of two seen codes (strict
// supersets of both parts), followed by num_background filler concepts.
ConceptCatalog generate_zero_shot_catalog(int num_seen, int num_unseen, int num_background,
                                          int attribute_len, std::uint64_t seed);

// One record per line, UTF-8, field order id / name / definition /
// attributes (0-1 string). The generation seed is not part of the wire
// format; run manifests carry it.
void save_catalog(const ConceptCatalog& catalog, const std::string& path);
ConceptCatalog load_catalog(const std::string& path);
std::string catalog_to_string(const ConceptCatalog& catalog);
ConceptCatalog catalog_from_string(const std::string& text);

struct SyntheticWorldSpec {
  int image_size = 32;
  int num_classes = 16;
  int samples_per_class = 200;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
};

// Fixed procedural pattern of one attribute (stripes / blob / wedge inside
// its grid cell). Supports of distinct attributes are pairwise disjoint.
MatD primitive_pattern(int attr_index, int attribute_len, int image_size);

// Union of the active attributes' patterns for one concept.
MatD concept_pattern(const Concept& cpt, int attribute_len, int image_size);

// 0/1 support mask of concept_pattern.
MatD concept_support(const Concept& cpt, int attribute_len, int image_size);

// Reduces a pixel support mask to a token-grid mask: a token cell is active
// if any pixel of its patch is.
MatD support_to_token_grid(const MatD& pixel_mask, int token_h, int token_w);

// Renders samples_per_class images per class. An image of class c is the
// pattern union of c's attributes plus clamped Gaussian noise. Labels are
// complete: class q is positive iff q's attribute code is a subset of c's.
Dataset render_dataset(const ConceptCatalog& catalog, const SyntheticWorldSpec& spec);

// Replaces label entries outside visible_classes with -1.
Dataset hide_labels(const Dataset& dataset, const std::set<std::string>& visible_classes);

}  // namespace kdiag::synth
