#include "kdiag/knowledge.hpp"

#include "kdiag/io.hpp"

#include <cmath>

namespace kdiag::knowledge {
namespace {

void validate(const ContrastiveConfig& c) {
  if (!(c.tau > 0)) throw ParameterError("knowledge config: tau must be positive");
  if (c.batch_pairs < 1) throw ParameterError("knowledge config: batch_pairs must be positive");
  if (c.steps < 0) throw ParameterError("knowledge config: steps must be non-negative");
  if (c.max_seq_len < 1) throw ParameterError("knowledge config: max_seq_len must be positive");
  if (!(c.lr > 0) || !(c.warmup_lr > 0)) throw ParameterError("knowledge config: rates must be positive");
  if (c.warmup_lr > c.lr) throw ParameterError("knowledge config: warmup_lr must not exceed lr");
}

struct PairTexts {
  std::vector<std::string> names, defs;
};

PairTexts gather(const synth::ConceptCatalog& catalog, const std::vector<int>& idx) {
  PairTexts t;
  for (int i : idx) {
    t.names.push_back(catalog.concepts[static_cast<std::size_t>(i)].name);
    t.defs.push_back(catalog.concepts[static_cast<std::size_t>(i)].definition);
  }
  return t;
}

}  // namespace

KeTrainResult train_knowledge_encoder(const synth::ConceptCatalog& catalog,
                                      const ContrastiveConfig& config, int d, int heads) {
  validate(config);
  if (catalog.concepts.empty()) throw ParameterError("train_knowledge_encoder: empty catalog");

  KeTrainResult result;
  text::TextEncoderModel<real> model(d, heads, config.max_seq_len, config.seed);

  // Hold out every fifth concept as a probe batch when there is room.
  std::vector<int> probe_idx, pool;
  const int n = static_cast<int>(catalog.concepts.size());
  for (int i = 0; i < n; ++i) {
    if (n >= 10 && i % 5 == 4)
      probe_idx.push_back(i);
    else
      pool.push_back(i);
  }
  if (probe_idx.empty()) probe_idx = pool;
  const PairTexts probe = gather(catalog, probe_idx);

  auto probe_loss = [&] {
    Mat<real> ne = model.embed_texts(probe.names);
    Mat<real> de = model.embed_texts(probe.defs);
    return static_cast<double>(contrastive_loss<real>(ne, de, config.tau));
  };
  result.probe_loss_initial = probe_loss();

  nn::ParamList<real> params;
  model.collect(params, "ke");
  nn::AdamW<real> opt(params);
  const long long warmup =
      config.warmup_steps >= 0 ? config.warmup_steps : config.steps * 5 / 100;

  for (long long step = 0; step < config.steps; ++step) {
    Rng rng(mix_seed(config.seed, 0xBA7C4, static_cast<std::uint64_t>(step)));
    std::vector<int> batch;
    if (static_cast<int>(pool.size()) >= config.batch_pairs) {
      std::vector<int> shuffled = pool;
      rng.shuffle(shuffled);
      batch.assign(shuffled.begin(), shuffled.begin() + config.batch_pairs);
    } else {
      // Small catalogs sample with replacement; in-batch duplicates are
      // genuine false negatives and are accepted.
      for (int i = 0; i < config.batch_pairs; ++i)
        batch.push_back(pool[rng.below(pool.size())]);
    }
    const PairTexts texts = gather(catalog, batch);

    text::TextEncoderModel<real>::Cache cn, cd;
    Mat<real> ne = model.embed_texts(texts.names, &cn);
    Mat<real> de = model.embed_texts(texts.defs, &cd);
    Mat<real> gn = Mat<real>::Zero(ne.rows(), ne.cols());
    Mat<real> gd = Mat<real>::Zero(de.rows(), de.cols());
    real loss = contrastive_loss<real>(ne, de, config.tau, &gn, &gd);
    if (!std::isfinite(static_cast<double>(loss)))
      throw DivergenceError("non-finite contrastive loss", step);
    model.backward(cn, gn);
    model.backward(cd, gd);
    const double lr = nn::lr_at_step(step, warmup, config.warmup_lr, config.lr);
    opt.step(params, lr);
    nn::zero_grads(params);
    if (step % 50 == 0 || step + 1 == config.steps)
      result.log.push_back({step, static_cast<double>(loss), lr});
  }

  result.probe_loss_final = probe_loss();
  result.encoder = TextEncoder(std::move(model));
  return result;
}

void save_encoder(const std::string& path, const TextEncoder& encoder,
                  const ContrastiveConfig& config, const std::string& run_config) {
  nn::ParamList<real> params;
  const_cast<text::TextEncoderModel<real>&>(encoder.model()).collect(params, "ke");
  std::vector<std::pair<std::string, const MatF*>> arrays;
  for (const auto& p : params) arrays.emplace_back(p.name, p.value);

  io::ordered_json manifest;
  manifest["version"] = 1;
  manifest["kind"] = "knowledge_encoder";
  manifest["d"] = encoder.model().d;
  manifest["heads"] = encoder.model().heads;
  manifest["max_seq_len"] = encoder.model().max_seq_len;
  manifest["vocab_size"] = encoder.model().tokenizer.vocab_size;
  manifest["tokenizer_hash"] = encoder.model().tokenizer.spec_hash();
  manifest["seed"] = config.seed;
  manifest["config"] = {{"tau", config.tau},
                        {"batch_pairs", config.batch_pairs},
                        {"steps", config.steps},
                        {"max_seq_len", config.max_seq_len},
                        {"lr", config.lr},
                        {"warmup_lr", config.warmup_lr},
                        {"warmup_steps", config.warmup_steps}};
  if (!run_config.empty()) manifest["run_config"] = run_config;
  io::save_checkpoint(path, std::move(manifest), arrays);
}

TextEncoder load_encoder(const std::string& path) {
  io::Checkpoint ck = io::load_checkpoint(path);
  if (ck.manifest.value("kind", "") != "knowledge_encoder")
    throw InputError("not a knowledge-encoder checkpoint: " + path);
  int d = 0, heads = 0, max_seq_len = 0;
  try {
    d = ck.manifest.at("d").get<int>();
    heads = ck.manifest.at("heads").get<int>();
    max_seq_len = ck.manifest.at("max_seq_len").get<int>();
  } catch (const std::exception& e) {
    throw InputError(std::string("bad encoder manifest: ") + e.what());
  }
  text::TextEncoderModel<real> model(d, heads, max_seq_len, 0);
  if (ck.manifest.value("tokenizer_hash", std::uint64_t(0)) != model.tokenizer.spec_hash())
    throw InputError("encoder checkpoint uses a different tokenizer: " + path);
  nn::ParamList<real> params;
  model.collect(params, "ke");
  if (params.size() != ck.arrays.size())
    throw InputError("encoder checkpoint parameter count mismatch: " + path);
  for (auto& p : params) {
    auto it = ck.arrays.find(p.name);
    if (it == ck.arrays.end()) throw InputError("encoder checkpoint missing array: " + p.name);
    if (it->second.rows() != p.value->rows() || it->second.cols() != p.value->cols())
      throw ShapeError("encoder checkpoint shape mismatch: " + p.name);
    *p.value = it->second;
  }
  return TextEncoder(std::move(model));
}

}  // namespace kdiag::knowledge
