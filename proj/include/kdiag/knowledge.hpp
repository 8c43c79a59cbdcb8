#pragma once

#include "kdiag/synth.hpp"
#include "kdiag/text.hpp"

namespace kdiag::knowledge {

// Bidirectional temperature-scaled contrastive loss over matched rows of two
// embedding matrices. Rows are L2-normalized, similarity is cosine / tau, and
// the loss is the mean over both softmax directions:
//   -(1/2N) sum_i [ log softmax_row(i)_i + log softmax_col(i)_i ].
// When gradient outputs are supplied they are accumulated.
template <class S>
S contrastive_loss(const Mat<S>& name_emb, const Mat<S>& def_emb, double tau,
                   Mat<S>* gname = nullptr, Mat<S>* gdef = nullptr) {
  if (name_emb.rows() != def_emb.rows() || name_emb.cols() != def_emb.cols())
    throw ShapeError("contrastive_loss: embedding shapes differ");
  if (name_emb.rows() < 1) throw ParameterError("contrastive_loss: empty batch");
  if (!(tau > 0)) throw ParameterError("contrastive_loss: tau must be positive");
  const Eigen::Index N = name_emb.rows();

  auto normalize = [](const Mat<S>& x, Vec<S>& norms) {
    Mat<S> a = x;
    norms.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      S n = x.row(i).norm();
      if (!(n > S(1e-12))) throw NumericError("contrastive_loss: zero-norm embedding row");
      norms(i) = n;
      a.row(i) /= n;
    }
    return a;
  };
  Vec<S> norm_a, norm_b;
  Mat<S> A = normalize(name_emb, norm_a);
  Mat<S> B = normalize(def_emb, norm_b);

  Mat<S> Z = (A * B.transpose()) / static_cast<S>(tau);
  auto lse = [](const Eigen::Ref<const Vec<S>>& v) {
    S m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
  };
  S total = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    Vec<S> row = Z.row(i).transpose();
    Vec<S> col = Z.col(i);
    total += (Z(i, i) - lse(row)) + (Z(i, i) - lse(col));
  }
  S loss = -total / static_cast<S>(2 * N);
  if (!gname && !gdef) return loss;

  // dL/dZ = (P + Qc - 2I) / 2N with P row-softmax and Qc column-softmax.
  Mat<S> P = Z;
  nn::softmax_rows(P);
  Mat<S> Qc = Z.transpose();
  nn::softmax_rows(Qc);
  Mat<S> G = P + Qc.transpose();
  for (Eigen::Index i = 0; i < N; ++i) G(i, i) -= S(2);
  G /= static_cast<S>(2 * N);

  Mat<S> gA = (G * B) / static_cast<S>(tau);
  Mat<S> gB = (G.transpose() * A) / static_cast<S>(tau);
  auto unnormalize = [](const Mat<S>& a, const Vec<S>& norms, const Mat<S>& ga, Mat<S>& gx) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      S dot = a.row(i).dot(ga.row(i));
      gx.row(i) += (ga.row(i) - a.row(i) * dot) / norms(i);
    }
  };
  if (gname) unnormalize(A, norm_a, gA, *gname);
  if (gdef) unnormalize(B, norm_b, gB, *gdef);
  return loss;
}

struct ContrastiveConfig {
  double tau = 0.07;
  int batch_pairs = 64;
  long long steps = 2000;
  int max_seq_len = 256;
  double lr = 1e-4;
  double warmup_lr = 1e-5;
  long long warmup_steps = -1;  // negative: 5% of steps
  std::uint64_t seed = 0;
};

// Production-scalar text encoder with a freeze bit. All mutation goes through
// trainable_params() / backward(), both of which refuse once frozen.
class TextEncoder {
 public:
  TextEncoder() = default;
  explicit TextEncoder(text::TextEncoderModel<real> model) : model_(std::move(model)) {}

  Mat<real> embed_texts(const std::vector<std::string>& texts) const {
    return model_.embed_texts(texts);
  }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }
  int dim() const { return model_.d; }

  const text::TextEncoderModel<real>& model() const { return model_; }

  text::TextEncoderModel<real>& mutable_model() {
    if (frozen_) throw ContractError("text encoder is frozen");
    return model_;
  }

  nn::ParamList<real> trainable_params() {
    if (frozen_) throw ContractError("text encoder is frozen");
    nn::ParamList<real> out;
    model_.collect(out, "ke");
    return out;
  }

  std::uint64_t params_hash() const {
    // collect() hands out mutable views; hashing only reads them.
    nn::ParamList<real> out;
    const_cast<text::TextEncoderModel<real>&>(model_).collect(out, "ke");
    return nn::param_hash(out);
  }

 private:
  text::TextEncoderModel<real> model_;
  bool frozen_ = false;
};

struct KeStepLog {
  long long step = 0;
  double loss = 0;
  double lr = 0;
};

struct KeTrainResult {
  TextEncoder encoder;
  double probe_loss_initial = 0;
  double probe_loss_final = 0;
  std::vector<KeStepLog> log;
};

// Contrastive training over (name, definition) pairs of the catalog. A fixed
// probe subset (every fifth concept when the catalog has >= 10 entries) is
// held out of the sampling pool and used to report before/after loss.
KeTrainResult train_knowledge_encoder(const synth::ConceptCatalog& catalog,
                                      const ContrastiveConfig& config, int d = 256, int heads = 4);

// Checkpoint round trip. The loaded encoder is returned unfrozen; callers
// that feed it to the classifier freeze it first. A non-empty run_config
// string is embedded verbatim in the manifest so outputs are self-describing.
void save_encoder(const std::string& path, const TextEncoder& encoder,
                  const ContrastiveConfig& config, const std::string& run_config = "");
TextEncoder load_encoder(const std::string& path);

}  // namespace kdiag::knowledge
