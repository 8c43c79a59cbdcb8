#include "kdiag/train.hpp"

#include "kdiag/io.hpp"

#include <cmath>

namespace kdiag::train {

Mode parse_mode(const std::string& name) {
  if (name == "baseline") return Mode::baseline;
  if (name == "ke") return Mode::ke;
  if (name == "ke_lp") return Mode::ke_lp;
  throw ConfigError("unknown mode '" + name + "' (expected baseline, ke or ke_lp)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::baseline: return "baseline";
    case Mode::ke: return "ke";
    case Mode::ke_lp: return "ke_lp";
  }
  throw ParameterError("mode_name: bad enum value");
}

namespace {

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.d < 4 || cfg.d % 4 != 0) throw ConfigError("model config: d must be a multiple of 4");
  if (cfg.d % cfg.heads != 0) throw ConfigError("model config: d must be divisible by heads");
  if (cfg.decoder_layers < 1) throw ConfigError("model config: decoder_layers must be >= 1");
  if (cfg.c1 < 1 || cfg.c2 < 1) throw ConfigError("model config: channel widths must be positive");
  if (cfg.mode == Mode::ke_lp && cfg.prompt_count < 1)
    throw ConfigError("model config: ke_lp needs prompt_count >= 1");
  if (cfg.baseline_plain_head && cfg.mode != Mode::baseline)
    throw ConfigError("model config: baseline_plain_head requires baseline mode");
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(cfg.lr > 0) || !(cfg.warmup_lr > 0)) throw ConfigError("train config: rates must be positive");
  if (cfg.warmup_lr > cfg.lr) throw ConfigError("train config: warmup_lr must not exceed lr");
}

bool uses_decoder(const ModelConfig& cfg) { return !cfg.baseline_plain_head; }

}  // namespace

nn::ParamList<real> ClassifierModel::trainable_params() {
  nn::ParamList<real> out;
  backbone.collect(out, "backbone");
  if (uses_decoder(cfg)) head.collect(out, "decoder");
  if (cfg.baseline_plain_head) plain_head.collect(out, "plain_head");
  if (cfg.mode == Mode::baseline && !cfg.baseline_plain_head)
    out.push_back({"class_table", &class_table, &gclass_table});
  if (cfg.mode == Mode::ke_lp) prompt_adapter.collect(out, "prompt");
  return out;
}

ClassifierModel build_classifier(const ModelConfig& cfg, std::vector<std::string> class_names,
                                 const knowledge::TextEncoder* ke, std::uint64_t seed) {
  validate_model_config(cfg);
  if (class_names.empty()) throw ParameterError("build_classifier: no classes");
  if (cfg.mode == Mode::baseline) {
    if (ke) throw ConfigError("baseline mode takes no knowledge encoder");
  } else {
    if (!ke) throw ConfigError(mode_name(cfg.mode) + " mode requires a knowledge encoder");
    if (!ke->frozen()) throw ContractError("classifier training requires a frozen encoder");
    if (ke->dim() != cfg.d) throw ShapeError("encoder width differs from model d");
  }

  ClassifierModel m;
  m.cfg = cfg;
  m.class_names = std::move(class_names);
  const int Q = m.num_classes();

  // One stream per component keeps a component's init independent of which
  // other components the mode instantiates.
  Rng rng_backbone(mix_seed(seed, 10));
  visual::BackboneConfig bc;
  bc.c1 = cfg.c1;
  bc.c2 = cfg.c2;
  bc.d = cfg.d;
  m.backbone = visual::VisualBackbone<real>(bc, rng_backbone);

  if (uses_decoder(cfg)) {
    Rng rng_head(mix_seed(seed, 11));
    query::QueryHeadConfig qc;
    qc.layers = cfg.decoder_layers;
    qc.heads = cfg.heads;
    qc.d = cfg.d;
    qc.self_attention = cfg.self_attention;
    qc.two_layer_head = cfg.two_layer_head;
    m.head = query::QueryHead<real>(qc, rng_head);
  } else {
    Rng rng_plain(mix_seed(seed, 14));
    m.plain_head = nn::Linear<real>(cfg.d, 2 * Q, rng_plain, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
  }

  if (cfg.mode == Mode::baseline) {
    if (!cfg.baseline_plain_head) {
      Rng rng_table(mix_seed(seed, 13));
      m.class_table = gaussian_matrix<real>(rng_table, Q, cfg.d, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
      m.gclass_table = Mat<real>::Zero(Q, cfg.d);
    }
  } else {
    m.T = ke->embed_texts(m.class_names);
    m.ke_hash = ke->params_hash();
    if (cfg.mode == Mode::ke_lp) {
      Rng rng_prompt(mix_seed(seed, 12));
      m.prompt_adapter = prompt::PromptAdapter<real>(cfg.prompt_count, cfg.d, rng_prompt);
    }
  }
  return m;
}

Mat<real> model_forward(ClassifierModel& model, const std::vector<MatD>& images, ForwardCtx& ctx) {
  ctx.B = static_cast<int>(images.size());
  ctx.tokens = model.backbone.forward(images, ctx.vc);
  const int Q = model.num_classes();

  if (model.cfg.baseline_plain_head) {
    const int T = ctx.vc.h * ctx.vc.w;
    ctx.pooled.resize(ctx.B, model.cfg.d);
    for (int b = 0; b < ctx.B; ++b)
      ctx.pooled.row(b) = ctx.tokens.middleRows(static_cast<Eigen::Index>(b) * T, T).colwise().mean();
    Mat<real> flat = model.plain_head.forward(ctx.pooled);  // B x 2Q
    Mat<real> logits(static_cast<Eigen::Index>(ctx.B) * Q, 2);
    for (int b = 0; b < ctx.B; ++b)
      for (int q = 0; q < Q; ++q) {
        logits(static_cast<Eigen::Index>(b) * Q + q, 0) = flat(b, 2 * q);
        logits(static_cast<Eigen::Index>(b) * Q + q, 1) = flat(b, 2 * q + 1);
      }
    return logits;
  }

  switch (model.cfg.mode) {
    case Mode::baseline: ctx.queries = model.class_table; break;
    case Mode::ke: ctx.queries = model.T; break;
    case Mode::ke_lp: ctx.queries = model.prompt_adapter.adapt(model.T, ctx.pc); break;
  }
  Mat<real> tiled(static_cast<Eigen::Index>(ctx.B) * Q, model.cfg.d);
  for (int b = 0; b < ctx.B; ++b) tiled.middleRows(static_cast<Eigen::Index>(b) * Q, Q) = ctx.queries;
  return model.head.forward(tiled, ctx.tokens, ctx.B, ctx.qc);
}

void model_backward(ClassifierModel& model, ForwardCtx& ctx, const Mat<real>& glogits) {
  const int Q = model.num_classes();
  Mat<real> gtokens = Mat<real>::Zero(ctx.tokens.rows(), ctx.tokens.cols());

  if (model.cfg.baseline_plain_head) {
    Mat<real> gflat(ctx.B, 2 * Q);
    for (int b = 0; b < ctx.B; ++b)
      for (int q = 0; q < Q; ++q) {
        gflat(b, 2 * q) = glogits(static_cast<Eigen::Index>(b) * Q + q, 0);
        gflat(b, 2 * q + 1) = glogits(static_cast<Eigen::Index>(b) * Q + q, 1);
      }
    Mat<real> gpooled = Mat<real>::Zero(ctx.B, model.cfg.d);
    model.plain_head.backward(ctx.pooled, gflat, &gpooled);
    const int T = ctx.vc.h * ctx.vc.w;
    const real inv_t = real(1) / static_cast<real>(T);
    for (int b = 0; b < ctx.B; ++b)
      gtokens.middleRows(static_cast<Eigen::Index>(b) * T, T).rowwise() += gpooled.row(b) * inv_t;
    model.backbone.backward(ctx.vc, gtokens);
    return;
  }

  Mat<real> gtiled = Mat<real>::Zero(static_cast<Eigen::Index>(ctx.B) * Q, model.cfg.d);
  model.head.backward(ctx.qc, ctx.tokens, glogits, gtiled, gtokens);
  model.backbone.backward(ctx.vc, gtokens);

  Mat<real> gq = Mat<real>::Zero(Q, model.cfg.d);
  for (int b = 0; b < ctx.B; ++b) gq += gtiled.middleRows(static_cast<Eigen::Index>(b) * Q, Q);
  switch (model.cfg.mode) {
    case Mode::baseline: model.gclass_table += gq; break;
    case Mode::ke: break;  // T is frozen
    case Mode::ke_lp: model.prompt_adapter.backward(ctx.pc, gq, nullptr); break;
  }
}

Mat<real> build_queries(const ClassifierModel& model, const knowledge::TextEncoder* ke,
                        const std::vector<std::string>& extra_names) {
  if (model.cfg.baseline_plain_head && !extra_names.empty())
    throw ProtocolError("plain-head baseline cannot score unseen classes");
  const int Q = model.num_classes();
  const int E = static_cast<int>(extra_names.size());
  Mat<real> base(Q + E, model.cfg.d);

  if (model.cfg.mode == Mode::baseline) {
    if (!model.cfg.baseline_plain_head) base.topRows(Q) = model.class_table;
    for (int e = 0; e < E; ++e) {
      // No text pathway exists in this arm; unseen names get a fixed random
      // direction so they are scored at chance, which is the point of the
      // control.
      Rng rng(fnv1a64(extra_names[static_cast<std::size_t>(e)]));
      base.row(Q + e) =
          gaussian_matrix<real>(rng, 1, model.cfg.d, 1.0 / std::sqrt(static_cast<double>(model.cfg.d)));
    }
    return base;
  }

  base.topRows(Q) = model.T;
  if (E > 0) {
    if (!ke) throw ConfigError("zero-shot scoring in ke modes requires the knowledge encoder");
    if (!ke->frozen()) throw ContractError("zero-shot scoring requires a frozen encoder");
    if (model.ke_hash && ke->params_hash() != model.ke_hash)
      throw ProtocolError("encoder differs from the one used for training");
    base.bottomRows(E) = ke->embed_texts(extra_names);
  }
  if (model.cfg.mode == Mode::ke_lp) {
    prompt::PromptAdapter<real>::Cache pc;
    return model.prompt_adapter.adapt(base, pc);
  }
  return base;
}

Mat<real> score_dataset(ClassifierModel& model, const Mat<real>& queries, const Dataset& data,
                        int batch_size) {
  if (batch_size < 1) throw ParameterError("score_dataset: batch_size must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(data.samples.size());
  const int Qe = model.cfg.baseline_plain_head ? model.num_classes() : static_cast<int>(queries.rows());
  Mat<real> scores(n, Qe);
  for (Eigen::Index start = 0; start < n; start += batch_size) {
    const int B = static_cast<int>(std::min<Eigen::Index>(batch_size, n - start));
    std::vector<MatD> images;
    images.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) images.push_back(data.samples[static_cast<std::size_t>(start + b)].pixels);

    ForwardCtx ctx;
    Mat<real> logits;
    if (model.cfg.baseline_plain_head) {
      logits = model_forward(model, images, ctx);
    } else {
      ctx.B = B;
      ctx.tokens = model.backbone.forward(images, ctx.vc);
      Mat<real> tiled(static_cast<Eigen::Index>(B) * Qe, model.cfg.d);
      for (int b = 0; b < B; ++b) tiled.middleRows(static_cast<Eigen::Index>(b) * Qe, Qe) = queries;
      logits = model.head.forward(tiled, ctx.tokens, B, ctx.qc);
    }
    for (int b = 0; b < B; ++b)
      for (int q = 0; q < Qe; ++q) {
        const real e0 = std::exp(logits(static_cast<Eigen::Index>(b) * Qe + q, 0));
        const real e1 = std::exp(logits(static_cast<Eigen::Index>(b) * Qe + q, 1));
        scores(start + b, q) = e1 / (e0 + e1);
      }
  }
  return scores;
}

ClassifierModel train_classifier(const Dataset& data, const knowledge::TextEncoder* ke,
                                 const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                 std::vector<TrainLogEntry>* log) {
  validate_train_config(train_cfg);
  if (data.samples.empty()) throw InputError("train_classifier: empty dataset");
  const int Q = static_cast<int>(data.num_classes());
  for (const auto& s : data.samples)
    if (static_cast<int>(s.labels.values.size()) != Q)
      throw ShapeError("train_classifier: label length differs from vocabulary");

  ClassifierModel model = build_classifier(model_cfg, data.class_names, ke, train_cfg.seed);
  const std::uint64_t ke_hash_before = ke ? ke->params_hash() : 0;

  nn::ParamList<real> params = model.trainable_params();
  nn::AdamW<real> opt(params);

  const long long n = static_cast<long long>(data.samples.size());
  const long long batches_per_epoch = (n + train_cfg.batch_size - 1) / train_cfg.batch_size;
  const long long total_steps = batches_per_epoch * train_cfg.epochs;
  const long long warmup =
      train_cfg.warmup_steps >= 0 ? train_cfg.warmup_steps : total_steps * 5 / 100;

  std::vector<int> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  long long global_step = 0;
  double lr = train_cfg.warmup_lr;
  for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(train_cfg.seed, 2, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0;
    long long epoch_batches = 0;
    for (long long start = 0; start < n; start += train_cfg.batch_size) {
      const int B = static_cast<int>(std::min<long long>(train_cfg.batch_size, n - start));
      std::vector<MatD> images;
      images.reserve(static_cast<std::size_t>(B));
      std::vector<const LabelRecord*> labels;
      for (int b = 0; b < B; ++b) {
        const Sample& s = data.samples[static_cast<std::size_t>(order[static_cast<std::size_t>(start + b)])];
        images.push_back(s.pixels);
        labels.push_back(&s.labels);
      }

      ForwardCtx ctx;
      Mat<real> logits = model_forward(model, images, ctx);

      // First pass: count contributing samples so each gets weight 1/M.
      int contributing = 0;
      for (int b = 0; b < B; ++b) {
        bool observed = false;
        for (std::int8_t v : labels[static_cast<std::size_t>(b)]->values)
          if (v != -1) observed = true;
        if (observed) ++contributing;
      }
      if (contributing == 0) continue;  // nothing to learn from; no step

      Mat<real> glogits = Mat<real>::Zero(logits.rows(), 2);
      real batch_loss = 0;
      for (int b = 0; b < B; ++b) {
        Mat<real> block = logits.middleRows(static_cast<Eigen::Index>(b) * Q, Q);
        Mat<real> gblock = Mat<real>::Zero(Q, 2);
        auto [sample_loss, observed] = masked_cross_entropy<real>(
            block, *labels[static_cast<std::size_t>(b)], &gblock,
            real(1) / static_cast<real>(contributing));
        if (observed) batch_loss += sample_loss / static_cast<real>(contributing);
        glogits.middleRows(static_cast<Eigen::Index>(b) * Q, Q) = gblock;
      }
      if (!std::isfinite(static_cast<double>(batch_loss)))
        throw DivergenceError("non-finite training loss", global_step);

      model_backward(model, ctx, glogits);
      lr = nn::lr_at_step(global_step, warmup, train_cfg.warmup_lr, train_cfg.lr);
      opt.step(params, lr);
      nn::zero_grads(params);
      ++global_step;
      epoch_loss += static_cast<double>(batch_loss);
      ++epoch_batches;
    }
    if (log)
      log->push_back({epoch, global_step, epoch_batches ? epoch_loss / epoch_batches : 0.0, lr});
  }

  if (ke && ke->params_hash() != ke_hash_before)
    throw ContractError("frozen encoder parameters changed during training");
  return model;
}

void save_classifier(const std::string& path, const ClassifierModel& model,
                     const TrainConfig& train_cfg, const std::string& run_config) {
  nn::ParamList<real> params = const_cast<ClassifierModel&>(model).trainable_params();
  std::vector<std::pair<std::string, const MatF*>> arrays;
  for (const auto& p : params) arrays.emplace_back(p.name, p.value);
  if (model.cfg.mode != Mode::baseline) arrays.emplace_back("frozen.T", &model.T);

  io::ordered_json manifest;
  manifest["version"] = 1;
  manifest["kind"] = "classifier";
  manifest["mode"] = mode_name(model.cfg.mode);
  manifest["d"] = model.cfg.d;
  manifest["c1"] = model.cfg.c1;
  manifest["c2"] = model.cfg.c2;
  manifest["decoder_layers"] = model.cfg.decoder_layers;
  manifest["heads"] = model.cfg.heads;
  manifest["prompt_count"] = model.cfg.prompt_count;
  manifest["self_attention"] = model.cfg.self_attention;
  manifest["two_layer_head"] = model.cfg.two_layer_head;
  manifest["baseline_plain_head"] = model.cfg.baseline_plain_head;
  manifest["class_names"] = model.class_names;
  manifest["ke_hash"] = model.ke_hash;
  manifest["config"] = {{"epochs", train_cfg.epochs},   {"batch_size", train_cfg.batch_size},
                        {"lr", train_cfg.lr},           {"warmup_lr", train_cfg.warmup_lr},
                        {"warmup_steps", train_cfg.warmup_steps}, {"seed", train_cfg.seed}};
  if (!run_config.empty()) manifest["run_config"] = run_config;
  io::save_checkpoint(path, std::move(manifest), arrays);
}

ClassifierModel load_classifier(const std::string& path) {
  io::Checkpoint ck = io::load_checkpoint(path);
  if (ck.manifest.value("kind", "") != "classifier")
    throw InputError("not a classifier checkpoint: " + path);
  ModelConfig cfg;
  std::vector<std::string> class_names;
  std::uint64_t ke_hash = 0;
  try {
    cfg.mode = parse_mode(ck.manifest.at("mode").get<std::string>());
    cfg.d = ck.manifest.at("d").get<int>();
    cfg.c1 = ck.manifest.at("c1").get<int>();
    cfg.c2 = ck.manifest.at("c2").get<int>();
    cfg.decoder_layers = ck.manifest.at("decoder_layers").get<int>();
    cfg.heads = ck.manifest.at("heads").get<int>();
    cfg.prompt_count = ck.manifest.at("prompt_count").get<int>();
    cfg.self_attention = ck.manifest.at("self_attention").get<bool>();
    cfg.two_layer_head = ck.manifest.at("two_layer_head").get<bool>();
    cfg.baseline_plain_head = ck.manifest.at("baseline_plain_head").get<bool>();
    class_names = ck.manifest.at("class_names").get<std::vector<std::string>>();
    ke_hash = ck.manifest.at("ke_hash").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw InputError(std::string("bad classifier manifest: ") + e.what());
  }

  ClassifierModel model;
  model.cfg = cfg;
  model.class_names = class_names;
  const int Q = model.num_classes();
  Rng rng_backbone(mix_seed(0, 10));
  visual::BackboneConfig bc;
  bc.c1 = cfg.c1;
  bc.c2 = cfg.c2;
  bc.d = cfg.d;
  model.backbone = visual::VisualBackbone<real>(bc, rng_backbone);
  if (!cfg.baseline_plain_head) {
    Rng rng_head(mix_seed(0, 11));
    query::QueryHeadConfig qc;
    qc.layers = cfg.decoder_layers;
    qc.heads = cfg.heads;
    qc.d = cfg.d;
    qc.self_attention = cfg.self_attention;
    qc.two_layer_head = cfg.two_layer_head;
    model.head = query::QueryHead<real>(qc, rng_head);
  } else {
    Rng rng_plain(mix_seed(0, 14));
    model.plain_head = nn::Linear<real>(cfg.d, 2 * Q, rng_plain, 1.0);
  }
  if (cfg.mode == Mode::baseline) {
    if (!cfg.baseline_plain_head) {
      model.class_table = Mat<real>::Zero(Q, cfg.d);
      model.gclass_table = Mat<real>::Zero(Q, cfg.d);
    }
  } else {
    if (cfg.mode == Mode::ke_lp) {
      Rng rng_prompt(mix_seed(0, 12));
      model.prompt_adapter = prompt::PromptAdapter<real>(cfg.prompt_count, cfg.d, rng_prompt);
    }
    model.T = Mat<real>::Zero(Q, cfg.d);
  }
  model.ke_hash = ke_hash;

  nn::ParamList<real> params = model.trainable_params();
  std::size_t expected = params.size() + (cfg.mode != Mode::baseline ? 1 : 0);
  if (ck.arrays.size() != expected)
    throw InputError("classifier checkpoint parameter count mismatch: " + path);
  for (auto& p : params) {
    auto it = ck.arrays.find(p.name);
    if (it == ck.arrays.end()) throw InputError("classifier checkpoint missing array: " + p.name);
    if (it->second.rows() != p.value->rows() || it->second.cols() != p.value->cols())
      throw ShapeError("classifier checkpoint shape mismatch: " + p.name);
    *p.value = it->second;
  }
  if (cfg.mode != Mode::baseline) {
    auto it = ck.arrays.find("frozen.T");
    if (it == ck.arrays.end()) throw InputError("classifier checkpoint missing array: frozen.T");
    if (it->second.rows() != Q || it->second.cols() != cfg.d)
      throw ShapeError("classifier checkpoint shape mismatch: frozen.T");
    model.T = it->second;
  }
  return model;
}

}  // namespace kdiag::train
