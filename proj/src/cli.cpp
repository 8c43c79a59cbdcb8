#include "kdiag/cli.hpp"

#include "kdiag/assembly.hpp"
#include "kdiag/config.hpp"
#include "kdiag/eval.hpp"
#include "kdiag/io.hpp"
#include "kdiag/knowledge.hpp"
#include "kdiag/synth.hpp"
#include "kdiag/train.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace kdiag::cli {
namespace {

namespace fs = std::filesystem;

// Options shared by every subcommand. The seed option keeps its CLI11 handle
// so an explicit --seed 0 still beats the config file.
struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "INI run configuration");
  c.seed_opt = cmd->add_option("--seed", c.seed, "seed (beats [train] seed and KDIAG_SEED)");
}

// Loads the config (defaults when no file is given), applies per-command
// overrides, resolves the seed, folds it back into [train] seed and prints
// the fully resolved echo. The same echo string is embedded into the
// command's output manifest so artifacts are self-describing.
struct Resolved {
  config::RunConfig cfg;
  std::uint64_t seed = 0;
  std::string echo;
};

Resolved resolve(const Common& c, const std::function<void(config::RunConfig&)>& tweak = {}) {
  Resolved r;
  if (!c.config_path.empty()) r.cfg = config::parse_config_file(c.config_path);
  if (tweak) tweak(r.cfg);
  if (c.seed_opt != nullptr && c.seed_opt->count() > 0) {
    r.seed = config::resolve_seed(r.cfg, &c.seed);
  } else {
    r.seed = config::resolve_seed(r.cfg, nullptr);
  }
  r.cfg.train.seed = r.seed;
  r.echo = config::config_to_string(r.cfg);
  std::cout << r.echo << std::flush;
  return r;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << text;
  if (!out.good()) throw InputError("write failed: " + path);
}

// Loads manifests, enforcing unique names (they key merged records). With
// resolve_images, relative image paths are resolved against each manifest's
// directory so a later materialize needs no common base.
std::vector<assembly::DatasetManifest> load_manifests(const std::vector<std::string>& paths,
                                                      bool resolve_images) {
  std::vector<assembly::DatasetManifest> out;
  std::set<std::string> names;
  for (const auto& p : paths) {
    assembly::DatasetManifest m = assembly::load_manifest(p);
    if (!names.insert(m.name).second) throw InputError("duplicate manifest name: " + m.name);
    if (resolve_images) {
      const fs::path dir = fs::path(p).parent_path();
      for (auto& rec : m.records) {
        fs::path img(rec.image);
        if (img.is_relative()) rec.image = (dir / img).string();
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

Dataset materialized_dataset(const std::string& manifest_path) {
  auto manifests = load_manifests({manifest_path}, true);
  assembly::MergedDataset merged =
      assembly::assemble(manifests, assembly::build_union_vocabulary(manifests));
  return assembly::materialize(merged, "");
}

// 64-row bar chart, one 6px bar per class, bottom-aligned. Undefined AUCs
// render as empty columns; case-filtered classes render dimmed.
void write_auc_chart(const std::string& path, const eval::EvalReport& report) {
  const int kH = 64, kBar = 6, kGap = 2;
  const int Q = static_cast<int>(report.classes.size());
  const int width = std::max(kBar + 2 * kGap, Q * (kBar + kGap) + kGap);
  MatD img = MatD::Zero(kH, width);
  for (int q = 0; q < Q; ++q) {
    const auto& c = report.classes[static_cast<std::size_t>(q)];
    if (!c.auc) continue;
    const int h = std::max<int>(1, static_cast<int>(std::lround(*c.auc * (kH - 2))));
    const int x0 = kGap + q * (kBar + kGap);
    const double shade = c.excluded_min_cases ? 0.4 : 1.0;
    for (int y = kH - h; y < kH; ++y)
      for (int x = x0; x < x0 + kBar; ++x) img(y, x) = shade;
  }
  io::write_pgm(path, img);
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  Common common;
  std::string out;
  int classes = 16;
  int unseen = 4;
  int attr_len = 12;
  int samples = 200;
  int image_size = 32;
  double noise = 0.05;
  int datasets = 3;
};

void cmd_synth(const SynthArgs& a) {
  if (a.unseen < 0) throw ParameterError("synth: --unseen must be >= 0");
  const int seen = a.classes - a.unseen;
  if (seen < 1) throw ParameterError("synth: --unseen must leave at least one seen class");
  if (a.datasets < 1 || a.datasets > seen)
    throw ParameterError("synth: --datasets must be between 1 and the seen-class count");
  Resolved r = resolve(a.common);

  synth::ConceptCatalog catalog =
      synth::generate_zero_shot_catalog(seen, a.unseen, 0, a.attr_len, r.seed);
  synth::SyntheticWorldSpec world;
  world.image_size = a.image_size;
  world.num_classes = a.classes;
  world.samples_per_class = a.samples;
  world.noise_sigma = a.noise;
  world.seed = r.seed;
  Dataset ds = synth::render_dataset(catalog, world);

  fs::create_directories(fs::path(a.out) / "images");
  for (const auto& s : ds.samples)
    io::write_pgm((fs::path(a.out) / "images" / (s.id + ".pgm")).string(), s.pixels);

  // Train/val carry only images generated from seen classes; images of the
  // held-out classes go to the test pool alone, so zero-shot queries face
  // pixels the classifier never trained on. Render order is class-major.
  std::vector<std::size_t> seen_idx, unseen_idx;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const int generator = static_cast<int>(i) / a.samples;
    (generator < seen ? seen_idx : unseen_idx).push_back(i);
  }
  Rng shuffle_rng(mix_seed(r.seed, 0x5B117));
  shuffle_rng.shuffle(seen_idx);
  const std::size_t n = seen_idx.size();
  const auto n_val = static_cast<std::size_t>(0.1 * static_cast<double>(n));
  const auto n_test = static_cast<std::size_t>(0.2 * static_cast<double>(n));
  const std::size_t n_train = n - n_val - n_test;

  std::vector<std::string> seen_names, unseen_names;
  for (int q = 0; q < a.classes; ++q)
    (q < seen ? seen_names : unseen_names).push_back(catalog.concepts[static_cast<std::size_t>(q)].name);

  auto record_for = [&](std::size_t idx, const std::vector<std::string>& visible,
                        const std::vector<int>& visible_q) {
    const Sample& s = ds.samples[idx];
    assembly::ManifestRecord rec;
    rec.id = s.id;
    rec.image = "images/" + s.id + ".pgm";
    for (std::size_t k = 0; k < visible.size(); ++k)
      rec.labels[visible[k]] = s.labels.values[static_cast<std::size_t>(visible_q[k])];
    return rec;
  };

  // Disjoint visible-label subsets across the training manifests simulate
  // datasets annotated for different disease lists.
  std::vector<std::vector<std::string>> group_names(static_cast<std::size_t>(a.datasets));
  std::vector<std::vector<int>> group_q(static_cast<std::size_t>(a.datasets));
  for (int q = 0; q < seen; ++q) {
    const auto g = static_cast<std::size_t>(q % a.datasets);
    group_names[g].push_back(seen_names[static_cast<std::size_t>(q)]);
    group_q[g].push_back(q);
  }
  std::vector<std::vector<assembly::ManifestRecord>> shards(static_cast<std::size_t>(a.datasets));
  for (std::size_t i = 0; i < n_train; ++i) {
    const auto j = i % static_cast<std::size_t>(a.datasets);
    shards[j].push_back(record_for(seen_idx[i], group_names[j], group_q[j]));
  }

  std::vector<int> all_seen_q(static_cast<std::size_t>(seen));
  for (int q = 0; q < seen; ++q) all_seen_q[static_cast<std::size_t>(q)] = q;
  std::vector<int> all_q(static_cast<std::size_t>(a.classes));
  for (int q = 0; q < a.classes; ++q) all_q[static_cast<std::size_t>(q)] = q;
  std::vector<std::string> all_names = seen_names;
  all_names.insert(all_names.end(), unseen_names.begin(), unseen_names.end());

  std::vector<assembly::ManifestRecord> val_recs, test_recs;
  for (std::size_t i = n_train; i < n_train + n_val; ++i)
    val_recs.push_back(record_for(seen_idx[i], seen_names, all_seen_q));
  for (std::size_t i = n_train + n_val; i < n; ++i)
    test_recs.push_back(record_for(seen_idx[i], all_names, all_q));
  for (std::size_t idx : unseen_idx) test_recs.push_back(record_for(idx, all_names, all_q));

  for (int j = 0; j < a.datasets; ++j) {
    const std::string name = "train" + std::to_string(j);
    assembly::save_manifest(
        (fs::path(a.out) / (name + ".jsonl")).string(),
        assembly::manifest_from_records(name, std::move(shards[static_cast<std::size_t>(j)])));
  }
  assembly::save_manifest((fs::path(a.out) / "val.jsonl").string(),
                          assembly::manifest_from_records("val", std::move(val_recs)));
  assembly::save_manifest((fs::path(a.out) / "test.jsonl").string(),
                          assembly::manifest_from_records("test", std::move(test_recs)));
  synth::save_catalog(catalog, (fs::path(a.out) / "catalog.jsonl").string());

  std::string unseen_txt;
  for (const auto& name : unseen_names) unseen_txt += name + "\n";
  write_text_file((fs::path(a.out) / "unseen.txt").string(), unseen_txt);

  io::ordered_json manifest;
  manifest["seed"] = r.seed;
  manifest["classes"] = a.classes;
  manifest["seen"] = seen;
  manifest["unseen"] = a.unseen;
  manifest["attribute_len"] = a.attr_len;
  manifest["image_size"] = a.image_size;
  manifest["samples_per_class"] = a.samples;
  manifest["noise_sigma"] = a.noise;
  manifest["datasets"] = a.datasets;
  manifest["seen_names"] = seen_names;
  manifest["unseen_names"] = unseen_names;
  manifest["run_config"] = r.echo;
  write_text_file((fs::path(a.out) / "world.json").string(), manifest.dump(2) + "\n");

  std::printf("synth: %zu images, %d train manifests, %d seen / %d unseen classes -> %s\n",
              ds.samples.size(), a.datasets, seen, a.unseen, a.out.c_str());
}

// ---------------------------------------------------------------------------
// train-ke

struct TrainKeArgs {
  Common common;
  std::string catalog_path;
  std::string out;
};

void cmd_train_ke(const TrainKeArgs& a) {
  Resolved r = resolve(a.common);
  synth::ConceptCatalog catalog = synth::load_catalog(a.catalog_path);

  knowledge::ContrastiveConfig kc;
  kc.tau = r.cfg.knowledge.tau;
  kc.batch_pairs = r.cfg.knowledge.batch_pairs;
  kc.steps = r.cfg.knowledge.steps;
  kc.max_seq_len = r.cfg.knowledge.max_seq_len;
  kc.lr = r.cfg.knowledge.lr;
  kc.warmup_lr = r.cfg.knowledge.warmup_lr;
  kc.seed = r.seed;

  knowledge::KeTrainResult result =
      knowledge::train_knowledge_encoder(catalog, kc, r.cfg.model.d, r.cfg.model.heads);
  knowledge::save_encoder(a.out, result.encoder, kc, r.echo);

  std::vector<io::ordered_json> log;
  for (const auto& e : result.log)
    log.push_back({{"step", e.step}, {"loss", e.loss}, {"lr", e.lr}});
  log.push_back({{"summary", true},
                 {"probe_loss_initial", result.probe_loss_initial},
                 {"probe_loss_final", result.probe_loss_final}});
  io::write_jsonl(a.out + ".log.jsonl", log);

  std::printf("train-ke: probe loss %.6f -> %.6f over %lld steps -> %s\n",
              result.probe_loss_initial, result.probe_loss_final, kc.steps, a.out.c_str());
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  Common common;
  std::vector<std::string> manifests;
  std::string ke_path;
  std::string out;
  std::string mode;
  int prompt_count = 0;
  CLI::Option* mode_opt = nullptr;
  CLI::Option* pc_opt = nullptr;
  CLI::Option* ke_opt = nullptr;
};

void cmd_train(const TrainArgs& a) {
  Resolved r = resolve(a.common, [&](config::RunConfig& cfg) {
    if (a.mode_opt->count() > 0) cfg.model.mode = a.mode;
    if (a.pc_opt->count() > 0) cfg.model.prompt_count = a.prompt_count;
    train::parse_mode(cfg.model.mode);  // fail fast on a bad --mode
    if (cfg.model.mode == "baseline" &&
        (a.pc_opt->count() > 0 || cfg.keys_set.count("model.prompt_count") > 0))
      throw ConfigError("baseline mode takes no prompt bank; drop prompt_count");
  });
  const train::Mode mode = train::parse_mode(r.cfg.model.mode);

  auto manifests = load_manifests(a.manifests, true);
  assembly::DiseaseVocabulary vocab = assembly::build_union_vocabulary(manifests);
  assembly::MergedDataset merged = assembly::assemble(manifests, vocab);
  Dataset data = assembly::materialize(merged, "");

  std::optional<knowledge::TextEncoder> enc;
  if (mode == train::Mode::baseline) {
    if (a.ke_opt->count() > 0) throw ConfigError("train: baseline mode takes no knowledge encoder");
  } else {
    if (a.ke_opt->count() == 0)
      throw ConfigError("train: --ke is required in mode " + r.cfg.model.mode);
    enc = knowledge::load_encoder(a.ke_path);
    enc->freeze();
  }

  train::ModelConfig mc;
  mc.mode = mode;
  mc.d = r.cfg.model.d;
  mc.decoder_layers = r.cfg.model.decoder_layers;
  mc.heads = r.cfg.model.heads;
  mc.prompt_count = r.cfg.model.prompt_count;
  train::TrainConfig tc;
  tc.epochs = r.cfg.train.epochs;
  tc.batch_size = r.cfg.train.batch_size;
  tc.lr = r.cfg.train.lr;
  tc.warmup_lr = r.cfg.train.warmup_lr;
  tc.seed = r.seed;

  std::vector<train::TrainLogEntry> log;
  train::ClassifierModel model = train::train_classifier(data, enc ? &*enc : nullptr, mc, tc, &log);
  train::save_classifier(a.out, model, tc, r.echo);

  std::vector<io::ordered_json> jl;
  for (const auto& e : log)
    jl.push_back({{"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}, {"lr", e.lr}});
  io::write_jsonl(a.out + ".log.jsonl", jl);

  std::printf("train: mode %s, %zu records, %d classes, final epoch loss %.6f -> %s\n",
              train::mode_name(mode).c_str(), data.samples.size(), model.num_classes(),
              log.empty() ? 0.0 : log.back().loss, a.out.c_str());
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  Common common;
  std::string model_path;
  std::string manifest_path;
  std::string out;
};

void cmd_eval(const EvalArgs& a) {
  Resolved r = resolve(a.common);
  train::ClassifierModel model = train::load_classifier(a.model_path);
  Dataset data = materialized_dataset(a.manifest_path);

  eval::EvalOptions opts;
  opts.n_boot = r.cfg.eval.bootstrap;
  opts.min_cases = r.cfg.eval.min_cases;
  opts.seed = r.seed;
  eval::EvalReport report = eval::evaluate_dataset(model, nullptr, data, opts);
  eval::save_report(a.out, report, r.echo);
  write_auc_chart(a.out + ".auc.pgm", report);

  if (report.has_defined())
    std::printf("eval: mean AUC %.4f over %zu classes -> %s\n", report.mean_auc(),
                report.classes.size(), a.out.c_str());
  else
    std::printf("eval: no class with a defined AUC -> %s\n", a.out.c_str());
}

// ---------------------------------------------------------------------------
// zeroshot

struct ZeroshotArgs {
  Common common;
  std::string model_path;
  std::string ke_path;
  std::string manifest_path;
  std::string out;
  std::string names;
  std::string names_file;
  CLI::Option* ke_opt = nullptr;
};

std::vector<std::string> parse_name_list(const ZeroshotArgs& a) {
  std::vector<std::string> out;
  auto push = [&](const std::string& s) {
    std::string n = assembly::normalize_name(s);
    if (!n.empty()) out.push_back(std::move(n));
  };
  std::stringstream ss(a.names);
  std::string item;
  while (std::getline(ss, item, ',')) push(item);
  if (!a.names_file.empty()) {
    std::ifstream in(a.names_file);
    if (!in) throw InputError("cannot read names file: " + a.names_file);
    std::string line;
    while (std::getline(in, line)) push(line);
  }
  if (out.empty()) throw ParameterError("zeroshot: no class names given");
  std::set<std::string> uniq(out.begin(), out.end());
  if (uniq.size() != out.size()) throw InputError("zeroshot: duplicate class name");
  return out;
}

void cmd_zeroshot(const ZeroshotArgs& a) {
  Resolved r = resolve(a.common);
  train::ClassifierModel model = train::load_classifier(a.model_path);

  std::optional<knowledge::TextEncoder> enc;
  if (model.cfg.mode == train::Mode::baseline) {
    if (a.ke_opt->count() > 0)
      throw ConfigError("zeroshot: a baseline model takes no knowledge encoder");
  } else {
    if (a.ke_opt->count() == 0)
      throw ConfigError("zeroshot: --ke is required for knowledge-based models");
    enc = knowledge::load_encoder(a.ke_path);
    enc->freeze();
  }
  std::vector<std::string> names = parse_name_list(a);
  Dataset data = materialized_dataset(a.manifest_path);

  eval::EvalOptions opts;
  opts.n_boot = r.cfg.eval.bootstrap;
  opts.min_cases = r.cfg.eval.min_cases;
  opts.seed = r.seed;
  eval::EvalReport report = eval::zero_shot_eval(model, enc ? &*enc : nullptr, names, data, opts);
  eval::save_report(a.out, report, r.echo);
  write_auc_chart(a.out + ".auc.pgm", report);

  if (report.has_defined())
    std::printf("zeroshot: mean unseen AUC %.4f over %zu classes -> %s\n", report.mean_auc(),
                report.classes.size(), a.out.c_str());
  else
    std::printf("zeroshot: no class with a defined AUC -> %s\n", a.out.c_str());
}

// ---------------------------------------------------------------------------
// assemble

struct AssembleArgs {
  Common common;
  std::vector<std::string> manifests;
  std::string out;
  std::string split_spec;
  CLI::Option* split_opt = nullptr;
};

void cmd_assemble(const AssembleArgs& a) {
  Resolved r = resolve(a.common);
  // Pure textual merge: image paths pass through untouched so the export
  // does not depend on where the command ran.
  auto manifests = load_manifests(a.manifests, false);
  assembly::DiseaseVocabulary vocab = assembly::build_union_vocabulary(manifests);
  assembly::MergedDataset merged = assembly::assemble(manifests, vocab);
  assembly::save_merged(a.out, merged);
  std::printf("assemble: %zu records, %zu classes -> %s\n", merged.records.size(),
              vocab.names.size(), a.out.c_str());

  if (a.split_opt->count() > 0) {
    double tr = 0, va = 0, te = 0;
    int consumed = 0;
    if (std::sscanf(a.split_spec.c_str(), "%lf ,%lf ,%lf%n", &tr, &va, &te, &consumed) != 3 ||
        consumed != static_cast<int>(a.split_spec.size()))
      throw ParameterError("assemble: --split wants three comma-separated ratios");
    assembly::SplitResult sp = assembly::split(merged, tr, va, te, r.seed);
    const fs::path base(a.out);
    const std::string stem = (base.parent_path() / base.stem()).string();
    const std::string ext = base.extension().string();
    assembly::save_merged(stem + "_train" + ext, sp.train);
    assembly::save_merged(stem + "_val" + ext, sp.val);
    assembly::save_merged(stem + "_test" + ext, sp.test);
    std::printf("assemble: split %zu/%zu/%zu -> %s_{train,val,test}%s\n", sp.train.records.size(),
                sp.val.records.size(), sp.test.records.size(), stem.c_str(), ext.c_str());
  }
}

// ---------------------------------------------------------------------------
// attn

struct AttnArgs {
  Common common;
  std::string model_path;
  std::string manifest_path;
  std::string sample_id;
  std::string class_name;
  std::string out;
};

void cmd_attn(const AttnArgs& a) {
  resolve(a.common);
  train::ClassifierModel model = train::load_classifier(a.model_path);
  if (model.cfg.baseline_plain_head)
    throw ProtocolError("attn: the plain-head baseline has no attention to export");

  assembly::DatasetManifest m = load_manifests({a.manifest_path}, true)[0];
  const assembly::ManifestRecord* rec = nullptr;
  for (const auto& mr : m.records)
    if (mr.id == a.sample_id) {
      rec = &mr;
      break;
    }
  if (rec == nullptr) throw InputError("attn: sample id not found: " + a.sample_id);

  const std::string wanted = assembly::normalize_name(a.class_name);
  int q = -1;
  for (std::size_t i = 0; i < model.class_names.size(); ++i)
    if (model.class_names[i] == wanted) {
      q = static_cast<int>(i);
      break;
    }
  if (q < 0) throw VocabularyError("attn: class not in the training vocabulary: " + wanted);

  MatD pixels = io::read_pgm(rec->image);
  visual::VisualBackbone<real>::Cache vc;
  Mat<real> tokens = model.backbone.forward({pixels}, vc, true);
  Mat<real> queries = train::build_queries(model, nullptr, {});
  query::PredictionBundle<real> bundle = model.head.decode(queries, tokens);
  Mat<real> heat = query::attention_heatmap(bundle, q, vc.h, vc.w);

  MatD exact = heat.cast<double>();
  io::write_matrix_text(a.out + ".txt", exact);

  // Nearest-neighbour upscale to pixel resolution, peak-normalized for
  // visibility; the sidecar holds the raw attention values.
  MatD up(pixels.rows(), pixels.cols());
  const double peak = std::max(exact.maxCoeff(), 1e-12);
  const int stride = visual::VisualBackbone<real>::kStride;
  for (Eigen::Index y = 0; y < up.rows(); ++y)
    for (Eigen::Index x = 0; x < up.cols(); ++x) {
      const int ty = std::min<int>(vc.h - 1, static_cast<int>(y) / stride);
      const int tx = std::min<int>(vc.w - 1, static_cast<int>(x) / stride);
      up(y, x) = exact(ty, tx) / peak;
    }
  io::write_pgm(a.out, up);

  std::printf("attn: sample %s, class '%s', score %.4f -> %s\n", a.sample_id.c_str(),
              wanted.c_str(), static_cast<double>(bundle.scores(q)), a.out.c_str());
}

int fail(int code, const std::exception& e) {
  std::cerr << "kdiag: " << e.what() << "\n";
  return code;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"knowledge-enhanced multi-label disease classification on a synthetic testbed"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic world: catalog, images, manifests");
  synth_cmd->add_option("--out", synth_args.out, "output directory")->required();
  synth_cmd->add_option("--classes", synth_args.classes, "total concept count (seen + unseen)");
  synth_cmd->add_option("--unseen", synth_args.unseen, "classes held out of all training labels");
  synth_cmd->add_option("--attr-len", synth_args.attr_len, "attribute code length");
  synth_cmd->add_option("--samples", synth_args.samples, "images per class");
  synth_cmd->add_option("--image-size", synth_args.image_size, "square image edge, pixels");
  synth_cmd->add_option("--noise", synth_args.noise, "pixel noise sigma");
  synth_cmd->add_option("--datasets", synth_args.datasets,
                        "training manifests with disjoint label subsets");
  add_common(synth_cmd, synth_args.common);
  synth_cmd->callback([&synth_args] { cmd_synth(synth_args); });

  TrainKeArgs ke_args;
  auto* ke_cmd = app.add_subcommand("train-ke", "contrastively train the knowledge encoder");
  ke_cmd->add_option("--catalog", ke_args.catalog_path, "concept catalog JSONL")->required();
  ke_cmd->add_option("--out", ke_args.out, "encoder checkpoint path")->required();
  add_common(ke_cmd, ke_args.common);
  ke_cmd->callback([&ke_args] { cmd_train_ke(ke_args); });

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a classifier from labeled manifests");
  train_cmd->add_option("--manifest", train_args.manifests, "training manifest (repeatable)")->required();
  train_args.ke_opt = train_cmd->add_option("--ke", train_args.ke_path, "encoder checkpoint");
  train_cmd->add_option("--out", train_args.out, "classifier checkpoint path")->required();
  train_args.mode_opt = train_cmd->add_option("--mode", train_args.mode, "baseline | ke | ke_lp");
  train_args.pc_opt =
      train_cmd->add_option("--prompt-count", train_args.prompt_count, "prompt bank rows (ke_lp)");
  add_common(train_cmd, train_args.common);
  train_cmd->callback([&train_args] { cmd_train(train_args); });

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a classifier on a manifest");
  eval_cmd->add_option("--model", eval_args.model_path, "classifier checkpoint")->required();
  eval_cmd->add_option("--manifest", eval_args.manifest_path, "evaluation manifest")->required();
  eval_cmd->add_option("--out", eval_args.out, "report JSONL path")->required();
  add_common(eval_cmd, eval_args.common);
  eval_cmd->callback([&eval_args] { cmd_eval(eval_args); });

  ZeroshotArgs zs_args;
  auto* zs_cmd = app.add_subcommand("zeroshot", "evaluate unseen class names via the encoder");
  zs_cmd->add_option("--model", zs_args.model_path, "classifier checkpoint")->required();
  zs_args.ke_opt =
      zs_cmd->add_option("--ke", zs_args.ke_path, "encoder checkpoint");
  zs_cmd->add_option("--manifest", zs_args.manifest_path, "test manifest with unseen labels")->required();
  zs_cmd->add_option("--names", zs_args.names, "comma-separated unseen class names");
  zs_cmd->add_option("--names-file", zs_args.names_file, "file with one class name per line");
  zs_cmd->add_option("--out", zs_args.out, "report JSONL path")->required();
  add_common(zs_cmd, zs_args.common);
  zs_cmd->callback([&zs_args] { cmd_zeroshot(zs_args); });

  AssembleArgs asm_args;
  auto* asm_cmd = app.add_subcommand("assemble", "merge manifests over the union vocabulary");
  asm_cmd->add_option("--manifest", asm_args.manifests, "manifest (repeatable)")->required();
  asm_cmd->add_option("--out", asm_args.out, "merged JSONL path")->required();
  asm_args.split_opt = asm_cmd->add_option("--split", asm_args.split_spec,
                                           "train,val,test ratios, e.g. 0.7,0.1,0.2");
  add_common(asm_cmd, asm_args.common);
  asm_cmd->callback([&asm_args] { cmd_assemble(asm_args); });

  AttnArgs attn_args;
  auto* attn_cmd = app.add_subcommand("attn", "export a cross-attention heatmap for one sample");
  attn_cmd->add_option("--model", attn_args.model_path, "classifier checkpoint")->required();
  attn_cmd->add_option("--manifest", attn_args.manifest_path, "manifest holding the sample")->required();
  attn_cmd->add_option("--sample", attn_args.sample_id, "record id")->required();
  attn_cmd->add_option("--class", attn_args.class_name, "class name to visualize")->required();
  attn_cmd->add_option("--out", attn_args.out, "heatmap PGM path (numeric sidecar: <out>.txt)")->required();
  add_common(attn_cmd, attn_args.common);
  attn_cmd->callback([&attn_args] { cmd_attn(attn_args); });

  try {
    app.parse(argc, argv);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ParameterError& e) {
    return fail(2, e);
  } catch (const ConfigError& e) {
    return fail(2, e);
  } catch (const ProtocolError& e) {
    return fail(2, e);
  } catch (const ContractError& e) {
    return fail(2, e);
  } catch (const InputError& e) {
    return fail(3, e);
  } catch (const VocabularyError& e) {
    return fail(3, e);
  } catch (const ShapeError& e) {
    return fail(3, e);
  } catch (const DivergenceError& e) {
    return fail(4, e);
  } catch (const NumericError& e) {
    return fail(4, e);
  } catch (const std::exception& e) {
    return fail(1, e);
  }
}

}  // namespace kdiag::cli
