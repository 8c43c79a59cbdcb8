#include "kdiag/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace kdiag::config {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad seed for " + key + ": '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + value + "'");
  }
}

}  // namespace

bool RunConfig::operator==(const RunConfig& other) const {
  return knowledge.tau == other.knowledge.tau && knowledge.steps == other.knowledge.steps &&
         knowledge.batch_pairs == other.knowledge.batch_pairs && knowledge.lr == other.knowledge.lr &&
         knowledge.warmup_lr == other.knowledge.warmup_lr &&
         knowledge.max_seq_len == other.knowledge.max_seq_len && model.d == other.model.d &&
         model.prompt_count == other.model.prompt_count &&
         model.decoder_layers == other.model.decoder_layers && model.heads == other.model.heads &&
         model.mode == other.model.mode && train.epochs == other.train.epochs &&
         train.batch_size == other.train.batch_size && train.lr == other.train.lr &&
         train.warmup_lr == other.train.warmup_lr && train.seed == other.train.seed &&
         eval.bootstrap == other.eval.bootstrap && eval.min_cases == other.eval.min_cases;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "knowledge" && section != "model" && section != "train" && section != "eval")
        throw ConfigError("config: unknown section [" + section + "]");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string full = section + "." + key;
    if (!cfg.keys_set.insert(full).second)
      throw ConfigError("config: duplicate key " + full);

    if (full == "knowledge.tau") cfg.knowledge.tau = parse_real(full, value);
    else if (full == "knowledge.steps") cfg.knowledge.steps = parse_int(full, value);
    else if (full == "knowledge.batch_pairs") cfg.knowledge.batch_pairs = static_cast<int>(parse_int(full, value));
    else if (full == "knowledge.lr") cfg.knowledge.lr = parse_real(full, value);
    else if (full == "knowledge.warmup_lr") cfg.knowledge.warmup_lr = parse_real(full, value);
    else if (full == "knowledge.max_seq_len") cfg.knowledge.max_seq_len = static_cast<int>(parse_int(full, value));
    else if (full == "model.d") cfg.model.d = static_cast<int>(parse_int(full, value));
    else if (full == "model.prompt_count") cfg.model.prompt_count = static_cast<int>(parse_int(full, value));
    else if (full == "model.decoder_layers") cfg.model.decoder_layers = static_cast<int>(parse_int(full, value));
    else if (full == "model.heads") cfg.model.heads = static_cast<int>(parse_int(full, value));
    else if (full == "model.mode") cfg.model.mode = value;
    else if (full == "train.epochs") cfg.train.epochs = static_cast<int>(parse_int(full, value));
    else if (full == "train.batch_size") cfg.train.batch_size = static_cast<int>(parse_int(full, value));
    else if (full == "train.lr") cfg.train.lr = parse_real(full, value);
    else if (full == "train.warmup_lr") cfg.train.warmup_lr = parse_real(full, value);
    else if (full == "train.seed") cfg.train.seed = parse_u64(full, value);
    else if (full == "eval.bootstrap") cfg.eval.bootstrap = static_cast<int>(parse_int(full, value));
    else if (full == "eval.min_cases") cfg.eval.min_cases = static_cast<int>(parse_int(full, value));
    else throw ConfigError("config: unknown key " + full);
  }

  if (cfg.model.mode != "baseline" && cfg.model.mode != "ke" && cfg.model.mode != "ke_lp")
    throw ConfigError("config: unknown mode '" + cfg.model.mode + "'");
  if (cfg.model.mode == "baseline" && cfg.keys_set.count("model.prompt_count"))
    throw ConfigError("config: baseline mode forbids prompt_count");
  if (cfg.knowledge.warmup_lr > cfg.knowledge.lr || cfg.train.warmup_lr > cfg.train.lr)
    throw ConfigError("config: warmup_lr must not exceed lr");
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_config_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string config_to_string(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "[knowledge]\n";
  out << "tau = " << c.knowledge.tau << "\n";
  out << "steps = " << c.knowledge.steps << "\n";
  out << "batch_pairs = " << c.knowledge.batch_pairs << "\n";
  out << "lr = " << c.knowledge.lr << "\n";
  out << "warmup_lr = " << c.knowledge.warmup_lr << "\n";
  out << "max_seq_len = " << c.knowledge.max_seq_len << "\n";
  out << "[model]\n";
  out << "d = " << c.model.d << "\n";
  if (c.model.mode != "baseline") out << "prompt_count = " << c.model.prompt_count << "\n";
  out << "decoder_layers = " << c.model.decoder_layers << "\n";
  out << "heads = " << c.model.heads << "\n";
  out << "mode = " << c.model.mode << "\n";
  out << "[train]\n";
  out << "epochs = " << c.train.epochs << "\n";
  out << "batch_size = " << c.train.batch_size << "\n";
  out << "lr = " << c.train.lr << "\n";
  out << "warmup_lr = " << c.train.warmup_lr << "\n";
  out << "seed = " << c.train.seed << "\n";
  out << "[eval]\n";
  out << "bootstrap = " << c.eval.bootstrap << "\n";
  out << "min_cases = " << c.eval.min_cases << "\n";
  return out.str();
}

std::uint64_t resolve_seed(const RunConfig& config, const std::uint64_t* cli_seed) {
  if (cli_seed) return *cli_seed;
  if (config.keys_set.count("train.seed")) return config.train.seed;
  if (const char* env = std::getenv("KDIAG_SEED")) {
    return parse_u64("KDIAG_SEED", env);
  }
  return 0;
}

}  // namespace kdiag::config
