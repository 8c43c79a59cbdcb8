#pragma once

#include "kdiag/train.hpp"

#include <optional>

namespace kdiag::eval {

// Mann-Whitney AUC with midranks for ties: the probability that a random
// positive outscores a random negative, ties counting one half. Entries
// labeled -1 are excluded first; returns nullopt when either class is empty.
std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Percentile bootstrap interval over record resamples. Resamples whose AUC
// is undefined are redrawn up to a retry cap; the full-sample AUC must be
// defined. Deterministic: resample b draws from mix_seed(seed, b).
std::pair<double, double> bootstrap_ci(const std::vector<double>& scores,
                                       const std::vector<int>& labels, int n_boot, double level,
                                       std::uint64_t seed);

struct ClassEval {
  std::string name;
  std::optional<double> auc;
  int n_pos = 0;
  int n_neg = 0;
  std::optional<std::pair<double, double>> ci;
  bool excluded_min_cases = false;  // true: dropped from the mean by the case filter
};

struct EvalReport {
  std::vector<ClassEval> classes;

  // Unweighted mean over classes with a defined AUC that pass the case
  // filter; throws when no class qualifies.
  double mean_auc() const;
  bool has_defined() const;
};

struct EvalOptions {
  int n_boot = 0;        // 0 disables intervals
  double level = 0.95;
  int min_cases = 0;     // classes with n_pos <= min_cases are excluded from the mean
  std::uint64_t seed = 0;
};

// Per-class evaluation of a score matrix (n samples x Q classes) against
// label records over the same class order.
EvalReport evaluate_scores(const Mat<real>& scores, const std::vector<const LabelRecord*>& labels,
                           const std::vector<std::string>& class_names, const EvalOptions& opts);
EvalReport evaluate_dataset(train::ClassifierModel& model, const knowledge::TextEncoder* ke,
                            const Dataset& data, const EvalOptions& opts);

// Open-set protocol: embeds the unseen names with the frozen encoder, runs
// them through the model's query pathway next to the seen classes, and
// reports the unseen classes only. Purely inferential — no parameter moves.
EvalReport zero_shot_eval(train::ClassifierModel& model, const knowledge::TextEncoder* ke,
                          const std::vector<std::string>& unseen_names, const Dataset& test_data,
                          const EvalOptions& opts);

// Report wire format: one line per class, then a summary line. A non-empty
// run_config string is carried on the summary line.
void save_report(const std::string& path, const EvalReport& report,
                 const std::string& run_config = "");
EvalReport load_report(const std::string& path);

}  // namespace kdiag::eval
