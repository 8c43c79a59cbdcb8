#pragma once

#include "kdiag/knowledge.hpp"
#include "kdiag/prompt.hpp"
#include "kdiag/query_head.hpp"
#include "kdiag/types.hpp"
#include "kdiag/visual.hpp"

namespace kdiag::train {

// Ablation arms: baseline swaps the knowledge embeddings for a learned
// per-class table; ke feeds frozen name embeddings straight to the decoder;
// ke_lp routes them through the prompt adapter first.
enum class Mode { baseline, ke, ke_lp };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct ModelConfig {
  Mode mode = Mode::ke_lp;
  int d = 256;
  int c1 = 32;  // backbone stage widths; the last stage always emits d
  int c2 = 64;
  int decoder_layers = 4;
  int heads = 4;
  int prompt_count = 64;
  bool self_attention = true;
  bool two_layer_head = false;
  // Control-arm variant: skip the decoder and score mean-pooled tokens with
  // one linear map. Only valid in baseline mode.
  bool baseline_plain_head = false;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double lr = 1e-4;
  double warmup_lr = 1e-5;
  long long warmup_steps = -1;  // negative: 5% of total steps
  std::uint64_t seed = 0;
};

// Mean two-way cross-entropy over the observed entries of one label vector;
// entries with value -1 contribute neither loss nor gradient. Returns
// (loss, observed_count); loss is 0 when nothing is observed. When glogits
// is given, grad_scale * d(loss)/d(logits) is accumulated into it.
template <class S>
std::pair<S, int> masked_cross_entropy(const Mat<S>& logits, const LabelRecord& label,
                                       Mat<S>* glogits = nullptr, S grad_scale = S(1)) {
  if (logits.cols() != 2) throw ShapeError("masked_cross_entropy: logits must be Q x 2");
  if (static_cast<Eigen::Index>(label.values.size()) != logits.rows())
    throw ShapeError("masked_cross_entropy: label length mismatch");
  S sum = 0;
  int count = 0;
  for (Eigen::Index q = 0; q < logits.rows(); ++q) {
    const int v = label.values[static_cast<std::size_t>(q)];
    LabelRecord::validate_value(v);
    if (v == -1) continue;
    const S l0 = logits(q, 0), l1 = logits(q, 1);
    const S m = std::max(l0, l1);
    const S lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
    sum += lse - logits(q, v);
    ++count;
  }
  const S loss = count ? sum / static_cast<S>(count) : S(0);
  if (glogits && count) {
    const S scale = grad_scale / static_cast<S>(count);
    for (Eigen::Index q = 0; q < logits.rows(); ++q) {
      const int v = label.values[static_cast<std::size_t>(q)];
      if (v == -1) continue;
      const S l0 = logits(q, 0), l1 = logits(q, 1);
      const S m = std::max(l0, l1);
      const S e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
      const S p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
      (*glogits)(q, 0) += scale * (p0 - (v == 0 ? S(1) : S(0)));
      (*glogits)(q, 1) += scale * (p1 - (v == 1 ? S(1) : S(0)));
    }
  }
  return {loss, count};
}

struct ClassifierModel {
  ModelConfig cfg;
  std::vector<std::string> class_names;  // training vocabulary, fixed order
  visual::VisualBackbone<real> backbone;
  query::QueryHead<real> head;
  prompt::PromptAdapter<real> prompt_adapter;  // mode ke_lp
  Mat<real> class_table, gclass_table;         // mode baseline
  nn::Linear<real> plain_head;                 // baseline_plain_head: d -> 2Q
  Mat<real> T;  // Q x d frozen knowledge embeddings of class_names (ke modes)
  std::uint64_t ke_hash = 0;  // parameter hash of the encoder that produced T

  int num_classes() const { return static_cast<int>(class_names.size()); }
  nn::ParamList<real> trainable_params();
};

// Builds an initialized model. In ke modes the frozen encoder supplies T.
ClassifierModel build_classifier(const ModelConfig& cfg, std::vector<std::string> class_names,
                                 const knowledge::TextEncoder* ke, std::uint64_t seed);

struct ForwardCtx {
  visual::VisualBackbone<real>::Cache vc;
  query::QueryHead<real>::Cache qc;
  prompt::PromptAdapter<real>::Cache pc;
  Mat<real> queries;  // Q x d, after mode dispatch (empty in plain-head path)
  Mat<real> tokens;
  Mat<real> pooled;   // plain-head path
  int B = 0;
};

// Batched forward to per-sample logits, stacked (B*Q) x 2.
Mat<real> model_forward(ClassifierModel& model, const std::vector<MatD>& images, ForwardCtx& ctx);
void model_backward(ClassifierModel& model, ForwardCtx& ctx, const Mat<real>& glogits);

// Query matrix for inference over the training vocabulary plus optional
// extra (zero-shot) names, passed through the mode's query pathway. In
// baseline mode extra names get deterministic name-hashed Gaussian rows —
// the no-knowledge control has no text pathway to embed them with.
Mat<real> build_queries(const ClassifierModel& model, const knowledge::TextEncoder* ke,
                        const std::vector<std::string>& extra_names);

// Positive-class scores for every sample, n x Q_total, using the literal
// two-way softmax on the logits.
Mat<real> score_dataset(ClassifierModel& model, const Mat<real>& queries, const Dataset& data,
                        int batch_size = 32);

struct TrainLogEntry {
  int epoch = 0;       // 1-based
  long long step = 0;  // optimizer steps taken so far
  double loss = 0;     // mean batch loss of the epoch
  double lr = 0;
};

// Full classifier training. Requires a frozen encoder in ke modes and none
// in baseline mode. Batch reduction: mean of per-sample masked means over
// the samples of the batch that observe at least one label.
ClassifierModel train_classifier(const Dataset& data, const knowledge::TextEncoder* ke,
                                 const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                                 std::vector<TrainLogEntry>* log = nullptr);

void save_classifier(const std::string& path, const ClassifierModel& model,
                     const TrainConfig& train_cfg, const std::string& run_config = "");
ClassifierModel load_classifier(const std::string& path);

}  // namespace kdiag::train
