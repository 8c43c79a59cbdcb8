#pragma once

#include "kdiag/common.hpp"

#include <set>
#include <string>

namespace kdiag::config {

// INI-style run configuration. Defaults follow the reference protocol where
// it states values; the desk-scale step and epoch counts are deliberately
// smaller. Unknown sections or keys are rejected, and every run echoes the
// fully resolved config so outputs are self-describing.
struct RunConfig {
  struct Knowledge {
    double tau = 0.07;
    long long steps = 2000;
    int batch_pairs = 64;
    double lr = 1e-4;
    double warmup_lr = 1e-5;
    int max_seq_len = 256;
  } knowledge;

  struct Model {
    int d = 256;
    int prompt_count = 64;
    int decoder_layers = 4;
    int heads = 4;
    std::string mode = "ke_lp";
  } model;

  struct Train {
    int epochs = 30;
    int batch_size = 32;
    double lr = 1e-4;
    double warmup_lr = 1e-5;
    std::uint64_t seed = 0;
  } train;

  struct Eval {
    int bootstrap = 1000;
    int min_cases = 50;
  } eval;

  // Keys that appeared explicitly, as "section.key"; lets validation tell a
  // default apart from a stated value (baseline mode forbids prompt_count).
  std::set<std::string> keys_set;

  bool operator==(const RunConfig& other) const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Full resolved echo; parse_config_text(config_to_string(c)) == c up to
// keys_set, which the echo marks in full.
std::string config_to_string(const RunConfig& config);

// Seed precedence: explicit CLI value, then [train] seed from the file, then
// the KDIAG_SEED environment variable, then zero.
std::uint64_t resolve_seed(const RunConfig& config, const std::uint64_t* cli_seed);

}  // namespace kdiag::config
