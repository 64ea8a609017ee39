#include <gtest/gtest.h>

#include "lvg/latent_init.hpp"
#include "support.hpp"

namespace lvg {
namespace {

using testing::random_matrix;

TEST(SemanticDropout, MatchesReferenceWithLengthTransform) {
  Rng data(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = data.uniform_int(1, 8);
    const Index k = data.uniform_int(1, 6);
    const Matrix tokens = random_matrix(m, 5, data);
    const Matrix phi = random_matrix(k, 8, data);
    const double p = data.uniform(0.0, 0.9);
    const std::uint64_t seed = derive_seed(3, static_cast<std::uint64_t>(trial));

    ad::Tape tape(false);
    Rng r1(seed);
    const ad::Var out = length_transform(
        semantic_dropout(tape.constant(tokens), p, true, r1), tape.constant(phi));
    Rng r2(seed);
    const auto expect = testing::dropout_length_ref(testing::to_grid(tokens),
                                                    testing::to_grid(phi.leftCols(m)), p, r2);
    EXPECT_LT(testing::max_abs_diff(out.value(), expect), 1e-12);
  }
}

TEST(SemanticDropout, OffAtInference) {
  ad::Tape tape(false);
  Rng rng(1);
  const ad::Var t = tape.constant(Matrix::Ones(4, 3));
  EXPECT_EQ(semantic_dropout(t, 0.9, false, rng).value(), Matrix::Ones(4, 3));
}

TEST(SemanticDropout, ZeroesWholeRowsWithoutRescaling) {
  ad::Tape tape(false);
  Rng rng(2);
  const Matrix out = semantic_dropout(tape.constant(Matrix::Ones(200, 3)), 0.5, true, rng).value();
  int dropped = 0;
  for (Index r = 0; r < out.rows(); ++r) {
    const double v = out(r, 0);
    EXPECT_TRUE(v == 0.0 || v == 1.0);
    EXPECT_EQ(out.row(r).minCoeff(), out.row(r).maxCoeff());
    dropped += v == 0.0;
  }
  EXPECT_GT(dropped, 60);
  EXPECT_LT(dropped, 140);
}

TEST(LengthTransform, Shapes) {
  ad::Tape tape(false);
  const ad::Var phi = tape.constant(Matrix::Ones(4, 6));
  EXPECT_EQ(length_transform(tape.constant(Matrix::Ones(3, 5)), phi).rows(), 4);
  EXPECT_THROW(length_transform(tape.constant(Matrix::Ones(7, 5)), phi), ShapeMismatch);
  EXPECT_THROW(length_transform(tape.constant(Matrix::Zero(0, 5)), phi), ShapeMismatch);
}

TEST(SubjectSelection, HardForwardSoftBackward) {
  Rng rng(3);
  ParameterStore store;
  Parameter& w = store.add("w", 4, 1);
  Parameter& b = store.add("b", 1, 1);
  w.value = random_matrix(4, 1, rng);
  const Matrix tokens = random_matrix(5, 4, rng);

  ad::Tape tape;
  store.zero_grad();
  Rng noise(9);
  const SubjectSelection sel =
      select_subject(tape.constant(tokens), tape.parameter(w), tape.parameter(b), 1.0, true, false, noise);
  EXPECT_NEAR(sel.soft_weights.sum(), 1.0, 1e-12);
  EXPECT_EQ(sel.hard_weights.sum(), 1.0);
  EXPECT_EQ(sel.hard_weights(0, sel.index), 1.0);
  EXPECT_LT((sel.subject.value() - tokens.row(sel.index)).cwiseAbs().maxCoeff(), 1e-12);
  tape.backward(ad::sum(sel.subject));
  EXPECT_GT(w.grad.cwiseAbs().sum(), 0.0);
}

TEST(SubjectSelection, ArgmaxIgnoresNoiseAtInference) {
  ad::Tape tape(false);
  Matrix tokens = Matrix::Zero(3, 2);
  tokens(1, 0) = 5;
  Matrix w(2, 1);
  w << 1, 0;
  Rng rng(1);
  const auto sel = select_subject(tape.constant(tokens), tape.constant(w),
                                  tape.constant(Matrix::Zero(1, 1)), 1.0, false, false, rng);
  EXPECT_EQ(sel.index, 1);
}

TEST(SubjectSelection, OutputMovesOnlyWhenArgmaxFlips) {
  // Nudging the selector without flipping the choice leaves the hard
  // forward output unchanged while the soft weights move.
  Rng rng(5);
  const Matrix tokens = random_matrix(4, 3, rng);
  Matrix w = random_matrix(3, 1, rng);
  auto run = [&](const Matrix& wv) {
    ad::Tape tape(false);
    Rng noise(17);
    return select_subject(tape.constant(tokens), tape.constant(wv), tape.constant(Matrix::Zero(1, 1)),
                          1.0, true, false, noise);
  };
  const auto base = run(w);
  Matrix w2 = w;
  w2(0, 0) += 1e-4;
  const auto moved = run(w2);
  ASSERT_EQ(base.index, moved.index);
  EXPECT_EQ(base.subject.value(), moved.subject.value());
  EXPECT_GT((base.soft_weights - moved.soft_weights).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LatentExpressions, ShapesAndSharedSubject) {
  const ModelConfig cfg = testing::tiny_config();
  ParameterStore store;
  Rng rng(6);
  const LatentParams params = LatentParams::create(store, cfg, rng);
  ad::Tape tape(false);
  const ad::Var text = tape.constant(random_matrix(5, cfg.d, rng));
  const LatentInit li = build_latent_expressions(text, params, cfg, true, rng);
  ASSERT_EQ(li.latents.size(), 2u);
  for (std::size_t i = 0; i < li.latents.size(); ++i) {
    EXPECT_EQ(li.latents[i].rows(), cfg.k_list[i] + 2);
    EXPECT_EQ(li.latents[i].value().row(1), li.subject.subject.value().row(0));
    EXPECT_EQ(li.latents[i].value().row(0), params.latent_cls[i]->value.row(0));
  }
  // Subject comes from the word tokens, never the class row.
  EXPECT_EQ(li.subject.hard_weights.cols(), 4);
  const ad::Var vis = tape.constant(random_matrix(17, cfg.d, rng));
  EXPECT_EQ(install_visual_subject(vis, li.subject.subject).value().row(0),
            li.subject.subject.value().row(0));
}

TEST(LatentExpressions, NeedWordTokens) {
  const ModelConfig cfg = testing::tiny_config();
  ParameterStore store;
  Rng rng(6);
  const LatentParams params = LatentParams::create(store, cfg, rng);
  ad::Tape tape(false);
  EXPECT_THROW(build_latent_expressions(tape.constant(Matrix::Zero(1, cfg.d)), params, cfg, false, rng),
               ShapeMismatch);
}

TEST(LatentExpressions, NoParametersWithoutExpressions) {
  ModelConfig cfg = testing::tiny_config();
  cfg.k_list.clear();
  cfg.p_drop_list.clear();
  ParameterStore store;
  Rng rng(1);
  LatentParams::create(store, cfg, rng);
  EXPECT_EQ(store.size(), 0u);
}

}  // namespace
}  // namespace lvg
