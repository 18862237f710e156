#include "mtu/errors.hpp"
#include "mtu/loss.hpp"
#include "mtu/model.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace mtu;

namespace {

const ModelSpec kBigram{ModelKind::Bigram, 4, 1, 0};
const ModelSpec kMlp{ModelKind::Mlp, 5, 3, 4};

TokenDataset random_batch(std::mt19937_64& gen, const ModelSpec& spec, int count, int len) {
  return TokenDataset::from_sequences(oracle::random_sequences(gen, spec.vocab_size, count, len),
                                      spec.context_len, DatasetRole::Forget);
}

}  // namespace

TEST(ModelSpec, ParamCountAndLayout) {
  EXPECT_EQ(kBigram.param_count(), 16u);
  EXPECT_EQ(kMlp.param_count(), 4u * 15 + 4 + 5 * 4 + 5);
  for (const auto& spec : {kBigram, kMlp}) {
    const auto layout = param_layout(spec);
    std::size_t next = 0;
    for (const auto& s : layout) {
      EXPECT_EQ(s.offset, next);
      next += s.size;
    }
    EXPECT_EQ(next, spec.param_count());
  }
}

TEST(ModelSpec, Validation) {
  EXPECT_THROW((ModelSpec{ModelKind::Bigram, 1, 1, 0}.validate()), ConfigError);
  EXPECT_THROW((ModelSpec{ModelKind::Mlp, 4, 2, 0}.validate()), ConfigError);
  EXPECT_EQ(parse_model_kind("mlp"), ModelKind::Mlp);
  EXPECT_THROW(parse_model_kind("transformer"), ConfigError);
}

TEST(Logits, BigramExamples) {
  EXPECT_EQ(logits(kBigram, Vector::Zero(16), {2}), Vector::Zero(4));
  const ModelSpec v2{ModelKind::Bigram, 2, 1, 0};
  Vector theta(4);
  theta << 1, 2, 3, 4;
  Vector want(2);
  want << 3, 4;
  EXPECT_EQ(logits(v2, theta, {0, 1}), want);
}

TEST(Logits, OutOfVocabularyThrows) {
  EXPECT_THROW(logits(kBigram, Vector::Zero(16), {4}), ConfigError);
}

TEST(Logits, MlpMatchesIndependentForward) {
  const Vector theta = init_params(kMlp, 7).coords;
  for (const Sequence& x : {Sequence{1}, Sequence{0, 4}, Sequence{3, 2, 1, 0, 4}}) {
    const Vector got = logits(kMlp, theta, x);
    const Vector want = oracle::mlp_logits(kMlp, theta, x);
    EXPECT_LE((got - want).norm(), 1e-14);
  }
}

TEST(Logits, MlpGoldenValue) {
  const Vector theta = init_params(kMlp, 7).coords;
  const Vector h = logits(kMlp, theta, {1, 4, 2});
  const double want[] = {-0.015015695279609243, 0.072498495766208565, -0.085466662873868116,
                         0.01237143717172867, -0.037489369736473342};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(h[i], want[i], 1e-15);
  EXPECT_LE((h - oracle::mlp_logits(kMlp, theta, {1, 4, 2})).norm(), 1e-15);
}

TEST(Params, InitIsSeededAndBounded) {
  const auto a = init_params(kMlp, 3);
  const auto b = init_params(kMlp, 3);
  EXPECT_EQ(a.coords, b.coords);
  EXPECT_LE(a.coords.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_NE(a.coords, init_params(kMlp, 4).coords);
}

TEST(Params, DumpRoundTripsBitwise) {
  const auto path = std::filesystem::temp_directory_path() / "mtu_params_roundtrip.params";
  std::mt19937_64 gen(1);
  const Vector theta = oracle::random_vector(gen, 33, 5.0);
  save_params(path, theta);
  EXPECT_EQ(load_params(path), theta);
  std::filesystem::remove(path);
}

TEST(GradLoss, NllStationaryAtSaturatedOptimum) {
  Vector theta = Vector::Zero(16);
  theta[1 * 4 + 3] = 40.0;
  const auto batch = TokenDataset::from_sequences({{1, 3}}, 1, DatasetRole::Forget);
  const Vector g = grad_loss(kBigram, theta, batch, [](const Vector& h, Token y) {
    return nll_grad(h, y);
  });
  EXPECT_LE(g.norm(), 1e-6);
}

TEST(GradLoss, LlIsNegatedNll) {
  std::mt19937_64 gen(2);
  const auto batch = random_batch(gen, kMlp, 3, 5);
  const Vector theta = oracle::random_vector(gen, static_cast<Eigen::Index>(kMlp.param_count()));
  const Vector gl = grad_loss(kMlp, theta, batch, [](const Vector& h, Token y) { return ll_grad(h, y); });
  const Vector gn = grad_loss(kMlp, theta, batch, [](const Vector& h, Token y) { return nll_grad(h, y); });
  EXPECT_EQ(gl, -gn);
}

TEST(GradLoss, EmptyBatchThrows) {
  TokenDataset empty;
  EXPECT_THROW(grad_loss(kBigram, Vector::Zero(16), empty,
                         [](const Vector& h, Token y) { return nll_grad(h, y); }),
               PreconditionError);
}

TEST(GradLoss, MatchesFiniteDifferences) {
  std::mt19937_64 gen(11);
  for (const auto& spec : {kBigram, kMlp}) {
    for (int draw = 0; draw < 5; ++draw) {
      const auto batch = random_batch(gen, spec, 2, 4);
      const Vector theta =
          oracle::random_vector(gen, static_cast<Eigen::Index>(spec.param_count()));
      const LossFunction f(LossKind::nlul(), spec);
      const Vector fd =
          oracle::fd_gradient([&](const Vector& t) { return f.value(t, batch); }, theta);
      EXPECT_LE(oracle::rel_error(f.gradient(theta, batch), fd), 1e-5);
    }
  }
}

TEST(LogitJacobian, BigramIsSelection) {
  std::mt19937_64 gen(4);
  const Vector theta = oracle::random_vector(gen, 16);
  const Matrix j = logit_jacobian(kBigram, theta, {0, 2});
  ASSERT_EQ(j.rows(), 16);
  ASSERT_EQ(j.cols(), 4);
  for (Eigen::Index c = 0; c < 4; ++c) {
    EXPECT_EQ((j.col(c).array() != 0.0).count(), 1);
    EXPECT_EQ(j(2 * 4 + c, c), 1.0);
  }
}

TEST(LogitJacobian, MlpMatchesFiniteDifferences) {
  std::mt19937_64 gen(8);
  for (int draw = 0; draw < 20; ++draw) {
    const Vector theta = oracle::random_vector(gen, static_cast<Eigen::Index>(kMlp.param_count()));
    const Sequence x = oracle::random_sequences(gen, kMlp.vocab_size, 1, 1 + draw % 4)[0];
    const Matrix j = logit_jacobian(kMlp, theta, x);
    const Matrix fd = oracle::fd_jacobian([&](const Vector& t) { return logits(kMlp, t, x); }, theta);
    EXPECT_LE((j.transpose() - fd).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(LogitJacobian, Deterministic) {
  const Vector theta = init_params(kMlp, 9).coords;
  const Vector same = 1.0 * theta;
  EXPECT_EQ(logit_jacobian(kMlp, theta, {1, 2}), logit_jacobian(kMlp, same, {1, 2}));
}

TEST(SequenceLogprob, Examples) {
  const ModelSpec v2{ModelKind::Bigram, 2, 1, 0};
  EXPECT_NEAR(sequence_logprob(v2, Vector::Zero(4), {0, 1, 1}), 2.0 * std::log(0.5), 1e-15);
  std::mt19937_64 gen(6);
  const Vector theta = oracle::random_vector(gen, 4);
  const Vector p = oracle::softmax(theta.segment(2, 2));
  EXPECT_NEAR(sequence_logprob(v2, theta, {1, 0}), std::log(p[0]), 1e-14);
  EXPECT_THROW(sequence_logprob(v2, theta, {1}), PreconditionError);
}

TEST(SequenceLogprob, ProductOfStepProbabilities) {
  std::mt19937_64 gen(12);
  for (int draw = 0; draw < 10; ++draw) {
    const Vector theta = oracle::random_vector(gen, static_cast<Eigen::Index>(kMlp.param_count()));
    const Sequence s = oracle::random_sequences(gen, kMlp.vocab_size, 1, 6)[0];
    double prod = 1.0;
    for (std::size_t t = 1; t < s.size(); ++t) {
      const Sequence ctx(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(t));
      prod *= oracle::softmax(oracle::mlp_logits(kMlp, theta, ctx))[s[t]];
    }
    EXPECT_NEAR(std::exp(sequence_logprob(kMlp, theta, s)), prod, 1e-14);
  }
}

TEST(SequenceLogprob, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(13);
  const Vector theta = oracle::random_vector(gen, static_cast<Eigen::Index>(kMlp.param_count()));
  const Sequence s{0, 3, 1, 4, 2};
  const Vector fd = oracle::fd_gradient(
      [&](const Vector& t) { return sequence_logprob(kMlp, t, s); }, theta);
  EXPECT_LE(oracle::rel_error(sequence_logprob_grad(kMlp, theta, s), fd), 1e-6);
}

TEST(Dataset, PairsTruncateContexts) {
  const auto d = TokenDataset::from_sequences({{0, 1, 2, 3}}, 2, DatasetRole::Pretrain);
  ASSERT_EQ(d.pairs.size(), 3u);
  EXPECT_EQ(d.pairs[0].context, (Sequence{0}));
  EXPECT_EQ(d.pairs[2].context, (Sequence{1, 2}));
  EXPECT_EQ(d.pairs[2].next, 3);
  EXPECT_THROW(d.validate(3), ConfigError);
}

TEST(Dataset, JsonlRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "mtu_dataset_roundtrip.jsonl";
  const std::vector<Sequence> seqs{{1, 2, 3}, {4, 0}};
  save_dataset(path, seqs);
  const auto d = load_dataset(path, 1, DatasetRole::Forget);
  EXPECT_EQ(d.sequences, seqs);
  EXPECT_EQ(d.pairs.size(), 3u);
  std::filesystem::remove(path);
}
