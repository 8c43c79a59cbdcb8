#include <doctest.h>

#include <cmath>
#include <vector>

#include "kdiag/knowledge.hpp"

#include "test_util.hpp"

using namespace kdiag;
using knowledge::ContrastiveConfig;
using knowledge::contrastive_loss;
using knowledge::train_knowledge_encoder;

TEST_CASE("contrastive: a single pair has exactly zero loss") {
  MatD a(1, 4), b(1, 4);
  a << 1, 2, 3, 4;
  b << -2, 0.5, 1, 0;
  CHECK(contrastive_loss<double>(a, b, 0.07) == 0.0);
}

TEST_CASE("contrastive: orthogonal matched pairs at tau 1 give log(1+e^-1)") {
  MatD a = MatD::Identity(2, 2);
  MatD b = MatD::Identity(2, 2);
  double loss = contrastive_loss<double>(a, b, 1.0);
  CHECK(loss == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("contrastive: matched pairing beats a shuffled one") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    MatD a = gaussian_matrix<double>(rng, 3, 6, 1.0);
    MatD matched = a;
    MatD shuffled(3, 6);
    shuffled.row(0) = a.row(1);
    shuffled.row(1) = a.row(2);
    shuffled.row(2) = a.row(0);
    CHECK(contrastive_loss<double>(a, matched, 0.07) <
          contrastive_loss<double>(a, shuffled, 0.07));
  }
}

TEST_CASE("contrastive: symmetric in its arguments") {
  Rng rng(3);
  MatD a = gaussian_matrix<double>(rng, 5, 7, 1.0);
  MatD b = gaussian_matrix<double>(rng, 5, 7, 1.0);
  CHECK(contrastive_loss<double>(a, b, 0.2) ==
        doctest::Approx(contrastive_loss<double>(b, a, 0.2)).epsilon(1e-12));
}

TEST_CASE("contrastive: finite on random batches") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    MatD a = gaussian_matrix<double>(rng, 4, 5, 2.0);
    MatD b = gaussian_matrix<double>(rng, 4, 5, 2.0);
    CHECK(std::isfinite(contrastive_loss<double>(a, b, 0.07)));
  }
}

TEST_CASE("contrastive: temperature is monotone at a well-separated point") {
  // Orthogonal matched pairs: similarity is the identity matrix, and raising
  // tau flattens the softmax, so the loss must increase.
  MatD a = MatD::Identity(4, 4);
  double prev = -1.0;
  for (double tau : {0.05, 0.1, 0.5, 1.0}) {
    double loss = contrastive_loss<double>(a, a, tau);
    CHECK(loss > prev);
    prev = loss;
  }
}

TEST_CASE("contrastive: shape and parameter guards") {
  MatD a = MatD::Ones(2, 3), b = MatD::Ones(3, 3);
  CHECK_THROWS_AS(contrastive_loss<double>(a, b, 0.07), ShapeError);
  MatD c = MatD::Ones(2, 3);
  CHECK_THROWS_AS(contrastive_loss<double>(a, c, 0.0), ParameterError);
  CHECK_THROWS_AS(contrastive_loss<double>(a, c, -1.0), ParameterError);
  MatD zero = MatD::Zero(2, 3);
  CHECK_THROWS_AS(contrastive_loss<double>(a, zero, 0.07), NumericError);
  MatD empty(0, 3);
  CHECK_THROWS_AS(contrastive_loss<double>(empty, empty, 0.07), ParameterError);
}

TEST_CASE("contrastive: analytic gradients match central differences (4x8)") {
  Rng rng(17);
  MatD a = gaussian_matrix<double>(rng, 4, 8, 1.0);
  MatD b = gaussian_matrix<double>(rng, 4, 8, 1.0);
  auto loss_fn = [&] { return contrastive_loss<double>(a, b, 0.07); };

  MatD ga = MatD::Zero(4, 8), gb = MatD::Zero(4, 8);
  contrastive_loss<double>(a, b, 0.07, &ga, &gb);
  KDIAG_CHECK_GRAD(ga, test::numeric_grad(a, loss_fn));
  KDIAG_CHECK_GRAD(gb, test::numeric_grad(b, loss_fn));

  // Gradient outputs accumulate rather than overwrite.
  MatD ga2 = ga;
  contrastive_loss<double>(a, b, 0.07, &ga2, nullptr);
  CHECK(ga2.isApprox(2.0 * ga, 1e-12));
}

namespace {

knowledge::KeTrainResult tiny_run(long long steps, std::uint64_t seed) {
  synth::ConceptCatalog cat = synth::generate_catalog(12, 10, 21);
  ContrastiveConfig cfg;
  cfg.steps = steps;
  cfg.batch_pairs = 6;
  cfg.max_seq_len = 64;
  cfg.seed = seed;
  return train_knowledge_encoder(cat, cfg, 32, 4);
}

}  // namespace

TEST_CASE("ke training: matched probe pairs pull ahead of mismatched ones") {
  knowledge::KeTrainResult r = tiny_run(300, 1);
  CHECK(r.probe_loss_final < r.probe_loss_initial);
  // The step log samples every 50th step plus the last one.
  REQUIRE(!r.log.empty());
  CHECK(r.log.front().step == 0);
  CHECK(r.log.back().step == 299);
  CHECK(std::isfinite(r.log.back().loss));

  // Mean cosine of matched (name, definition) pairs on the held-out probe
  // concepts must clear the mismatched mean by a wide margin.
  synth::ConceptCatalog cat = synth::generate_catalog(12, 10, 21);
  std::vector<std::string> names, defs;
  for (std::size_t i = 0; i < cat.concepts.size(); i += 5) {
    names.push_back(cat.concepts[i].name);
    defs.push_back(cat.concepts[i].definition);
  }
  MatD n = r.encoder.embed_texts(names).cast<double>();
  MatD d = r.encoder.embed_texts(defs).cast<double>();
  for (Eigen::Index i = 0; i < n.rows(); ++i) {
    n.row(i).normalize();
    d.row(i).normalize();
  }
  double matched = 0.0, mismatched = 0.0;
  int mm = 0;
  for (Eigen::Index i = 0; i < n.rows(); ++i) {
    matched += n.row(i).dot(d.row(i));
    for (Eigen::Index j = 0; j < n.rows(); ++j)
      if (i != j) {
        mismatched += n.row(i).dot(d.row(j));
        ++mm;
      }
  }
  matched /= static_cast<double>(n.rows());
  mismatched /= static_cast<double>(mm);
  CHECK(matched - mismatched >= 0.2);
}

TEST_CASE("ke training: seeded runs are bit-identical, zero steps is the init") {
  knowledge::KeTrainResult a = tiny_run(40, 2);
  knowledge::KeTrainResult b = tiny_run(40, 2);
  CHECK(a.encoder.params_hash() == b.encoder.params_hash());
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);

  knowledge::KeTrainResult c = tiny_run(0, 2);
  text::TextEncoderModel<real> init(32, 4, 64, 2);
  knowledge::TextEncoder wrapped(std::move(init));
  CHECK(c.encoder.params_hash() == wrapped.params_hash());
  CHECK(c.log.empty());
}

TEST_CASE("ke freeze: embeddings unchanged, training access refused") {
  knowledge::KeTrainResult r = tiny_run(20, 3);
  std::vector<std::string> texts{"mottled film", "dense streak"};
  MatD before = r.encoder.embed_texts(texts).cast<double>();
  std::uint64_t h = r.encoder.params_hash();
  r.encoder.freeze();
  CHECK(r.encoder.frozen());
  MatD after = r.encoder.embed_texts(texts).cast<double>();
  CHECK(before == after);
  CHECK(r.encoder.params_hash() == h);
  CHECK_THROWS_AS(r.encoder.trainable_params(), ContractError);
  CHECK_THROWS_AS(r.encoder.mutable_model(), ContractError);
}
