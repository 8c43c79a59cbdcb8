#pragma once

#include "kdiag/common.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

namespace kdiag::io {

using ordered_json = nlohmann::ordered_json;

// Binary 8-bit grayscale PGM (P5). Values are mapped [0,1] <-> 0..255.
void write_pgm(const std::string& path, const MatD& image);
MatD read_pgm(const std::string& path);

// Writes an h x w matrix as line-delimited rows of decimal floats; the exact
// numeric sidecar for exported heatmaps.
void write_matrix_text(const std::string& path, const MatD& m);
MatD read_matrix_text(const std::string& path);

std::vector<ordered_json> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<ordered_json>& records);
void append_jsonl(const std::string& path, const ordered_json& record);

// Checkpoint container: magic "KDIAGCK1", u64 little-endian manifest length,
// JSON manifest, then the parameter blobs — row-major little-endian float32,
// concatenated in manifest order. The manifest's "params" array lists
// name / rows / cols / offset (bytes into the blob region) per array.
struct Checkpoint {
  ordered_json manifest;
  std::map<std::string, MatF> arrays;
};

void save_checkpoint(const std::string& path, ordered_json manifest,
                     const std::vector<std::pair<std::string, const MatF*>>& arrays);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace kdiag::io
