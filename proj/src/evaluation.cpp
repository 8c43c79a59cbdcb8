#include "kdiag/eval.hpp"

#include "kdiag/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace kdiag::eval {

std::optional<double> auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: score/label length mismatch");
  std::vector<double> s;
  std::vector<int> y;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == -1) continue;
    if (labels[i] != 0 && labels[i] != 1) throw InputError("auc: label outside {0,1,-1}");
    s.push_back(scores[i]);
    y.push_back(labels[i]);
  }
  std::size_t pos = 0;
  for (int v : y) pos += static_cast<std::size_t>(v);
  const std::size_t neg = y.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

  // Midranks over tie groups, 1-based.
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && s[order[j + 1]] == s[order[i]]) ++j;
    const double midrank = static_cast<double>(i + j) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (y[order[k]] == 1) rank_sum_pos += midrank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1) / 2.0) / (p * static_cast<double>(neg));
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& scores,
                                       const std::vector<int>& labels, int n_boot, double level,
                                       std::uint64_t seed) {
  if (n_boot < 1) throw ParameterError("bootstrap_ci: n_boot must be positive");
  if (!(level > 0 && level < 1)) throw ParameterError("bootstrap_ci: level must be in (0,1)");
  if (!auc(scores, labels)) throw NumericError("bootstrap_ci: AUC undefined on the full sample");
  const std::size_t n = scores.size();

  constexpr int kRetryCap = 1000;
  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(n_boot));
  std::vector<double> rs(n);
  std::vector<int> ry(n);
  for (int b = 0; b < n_boot; ++b) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(b)));
    std::optional<double> value;
    for (int attempt = 0; attempt < kRetryCap && !value; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(rng.below(n));
        rs[i] = scores[k];
        ry[i] = labels[k];
      }
      value = auc(rs, ry);
    }
    if (!value) throw NumericError("bootstrap_ci: resample retry cap exhausted");
    boot.push_back(*value);
  }
  std::sort(boot.begin(), boot.end());

  auto quantile = [&](double p) {
    // Linear interpolation at h = p * (n - 1).
    const double h = p * static_cast<double>(boot.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, boot.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return boot[lo] * (1.0 - frac) + boot[hi] * frac;
  };
  const double alpha = 1.0 - level;
  return {quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

double EvalReport::mean_auc() const {
  double sum = 0;
  int count = 0;
  for (const auto& c : classes) {
    if (!c.auc || c.excluded_min_cases) continue;
    sum += *c.auc;
    ++count;
  }
  if (!count) throw NumericError("mean_auc: no class has a defined AUC");
  return sum / count;
}

bool EvalReport::has_defined() const {
  for (const auto& c : classes)
    if (c.auc && !c.excluded_min_cases) return true;
  return false;
}

EvalReport evaluate_scores(const Mat<real>& scores, const std::vector<const LabelRecord*>& labels,
                           const std::vector<std::string>& class_names, const EvalOptions& opts) {
  const int Q = static_cast<int>(class_names.size());
  if (scores.cols() != Q) throw ShapeError("evaluate_scores: class count mismatch");
  if (scores.rows() != static_cast<Eigen::Index>(labels.size()))
    throw ShapeError("evaluate_scores: record count mismatch");

  EvalReport report;
  for (int q = 0; q < Q; ++q) {
    std::vector<double> s(labels.size());
    std::vector<int> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
      s[i] = static_cast<double>(scores(static_cast<Eigen::Index>(i), q));
      y[i] = labels[i]->values[static_cast<std::size_t>(q)];
    }
    ClassEval ce;
    ce.name = class_names[static_cast<std::size_t>(q)];
    for (int v : y) {
      if (v == 1) ++ce.n_pos;
      if (v == 0) ++ce.n_neg;
    }
    ce.auc = auc(s, y);
    ce.excluded_min_cases = ce.n_pos <= opts.min_cases;
    if (ce.auc && !ce.excluded_min_cases && opts.n_boot > 0)
      ce.ci = bootstrap_ci(s, y, opts.n_boot, opts.level, mix_seed(opts.seed, fnv1a64(ce.name)));
    report.classes.push_back(std::move(ce));
  }
  return report;
}

EvalReport evaluate_dataset(train::ClassifierModel& model, const knowledge::TextEncoder* ke,
                            const Dataset& data, const EvalOptions& opts) {
  // The model's stored vocabulary drives the query order; the dataset must
  // carry labels for each of those classes.
  std::vector<int> col_of(model.class_names.size(), -1);
  for (std::size_t q = 0; q < model.class_names.size(); ++q) {
    for (std::size_t c = 0; c < data.class_names.size(); ++c)
      if (data.class_names[c] == model.class_names[q]) col_of[q] = static_cast<int>(c);
    if (col_of[q] < 0)
      throw VocabularyError("evaluate_dataset: dataset lacks class '" + model.class_names[q] + "'");
  }
  Mat<real> queries = train::build_queries(model, ke, {});
  Mat<real> scores = train::score_dataset(model, queries, data);

  std::vector<LabelRecord> projected(data.samples.size());
  std::vector<const LabelRecord*> labels(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    projected[i].values.resize(model.class_names.size());
    for (std::size_t q = 0; q < model.class_names.size(); ++q)
      projected[i].values[q] = data.samples[i].labels.values[static_cast<std::size_t>(col_of[q])];
    labels[i] = &projected[i];
  }
  return evaluate_scores(scores, labels, model.class_names, opts);
}

EvalReport zero_shot_eval(train::ClassifierModel& model, const knowledge::TextEncoder* ke,
                          const std::vector<std::string>& unseen_names, const Dataset& test_data,
                          const EvalOptions& opts) {
  std::set<std::string> seen(model.class_names.begin(), model.class_names.end());
  for (const auto& name : unseen_names)
    if (seen.count(name))
      throw ProtocolError("zero_shot_eval: '" + name + "' is part of the training vocabulary");
  EvalReport report;
  if (unseen_names.empty()) return report;

  std::vector<int> col_of;
  for (const auto& name : unseen_names) {
    int idx = -1;
    for (std::size_t c = 0; c < test_data.class_names.size(); ++c)
      if (test_data.class_names[c] == name) idx = static_cast<int>(c);
    if (idx < 0) throw VocabularyError("zero_shot_eval: test data lacks class '" + name + "'");
    col_of.push_back(idx);
  }

  const int Q = model.num_classes();
  Mat<real> queries = train::build_queries(model, ke, unseen_names);
  Mat<real> all_scores = train::score_dataset(model, queries, test_data);
  Mat<real> unseen_scores(all_scores.rows(), static_cast<Eigen::Index>(unseen_names.size()));
  for (std::size_t e = 0; e < unseen_names.size(); ++e)
    unseen_scores.col(static_cast<Eigen::Index>(e)) = all_scores.col(Q + static_cast<Eigen::Index>(e));

  std::vector<LabelRecord> projected(test_data.samples.size());
  std::vector<const LabelRecord*> labels(test_data.samples.size());
  for (std::size_t i = 0; i < test_data.samples.size(); ++i) {
    projected[i].values.resize(unseen_names.size());
    for (std::size_t e = 0; e < unseen_names.size(); ++e)
      projected[i].values[e] = test_data.samples[i].labels.values[static_cast<std::size_t>(col_of[e])];
    labels[i] = &projected[i];
  }
  return evaluate_scores(unseen_scores, labels, unseen_names, opts);
}

void save_report(const std::string& path, const EvalReport& report,
                 const std::string& run_config) {
  std::vector<io::ordered_json> lines;
  for (const auto& c : report.classes) {
    io::ordered_json rec;
    rec["class"] = c.name;
    rec["auc"] = c.auc ? io::ordered_json(*c.auc) : io::ordered_json(nullptr);
    rec["n_pos"] = c.n_pos;
    rec["n_neg"] = c.n_neg;
    rec["ci_low"] = c.ci ? io::ordered_json(c.ci->first) : io::ordered_json(nullptr);
    rec["ci_high"] = c.ci ? io::ordered_json(c.ci->second) : io::ordered_json(nullptr);
    rec["excluded_min_cases"] = c.excluded_min_cases;
    lines.push_back(std::move(rec));
  }
  io::ordered_json summary;
  summary["summary"] = true;
  summary["classes"] = report.classes.size();
  summary["mean_auc"] =
      report.has_defined() ? io::ordered_json(report.mean_auc()) : io::ordered_json(nullptr);
  summary["ci_method"] = "percentile bootstrap over record resamples";
  if (!run_config.empty()) summary["run_config"] = run_config;
  lines.push_back(std::move(summary));
  io::write_jsonl(path, lines);
}

EvalReport load_report(const std::string& path) {
  EvalReport report;
  for (const auto& rec : io::read_jsonl(path)) {
    if (rec.value("summary", false)) continue;
    ClassEval ce;
    try {
      ce.name = rec.at("class").get<std::string>();
      if (!rec.at("auc").is_null()) ce.auc = rec.at("auc").get<double>();
      ce.n_pos = rec.at("n_pos").get<int>();
      ce.n_neg = rec.at("n_neg").get<int>();
      if (!rec.at("ci_low").is_null())
        ce.ci = std::make_pair(rec.at("ci_low").get<double>(), rec.at("ci_high").get<double>());
      ce.excluded_min_cases = rec.at("excluded_min_cases").get<bool>();
    } catch (const std::exception& e) {
      throw InputError(path + ": bad report record: " + e.what());
    }
    report.classes.push_back(std::move(ce));
  }
  return report;
}

}  // namespace kdiag::eval
