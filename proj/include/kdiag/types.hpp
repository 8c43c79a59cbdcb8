#pragma once

#include "kdiag/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace kdiag {

// Per-sample class labels over an ordered vocabulary: 1 present, 0 absent,
// -1 unobserved. Unobserved entries are excluded from losses and metrics.
struct LabelRecord {
  std::vector<std::int8_t> values;

  static void validate_value(int v) {
    if (v != 0 && v != 1 && v != -1) throw InputError("label value outside {0,1,-1}");
  }
};

struct Sample {
  std::string id;
  MatD pixels;  // H x W in [0,1]
  LabelRecord labels;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  std::size_t num_classes() const { return class_names.size(); }
};

}  // namespace kdiag
