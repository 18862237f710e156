#include "mtu/curvature.hpp"
#include "mtu/divergence.hpp"
#include "mtu/errors.hpp"
#include "mtu/loss.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mtu;

namespace {

const ModelSpec kBigram{ModelKind::Bigram, 4, 1, 0};
const ModelSpec kMlp{ModelKind::Mlp, 5, 3, 4};

TokenDataset random_batch(std::mt19937_64& gen, const ModelSpec& spec) {
  return TokenDataset::from_sequences(oracle::random_sequences(gen, spec.vocab_size, 3, 5),
                                      spec.context_len, DatasetRole::Pretrain);
}

Vector dim_vector(std::mt19937_64& gen, const ModelSpec& spec, double scale = 1.0) {
  return oracle::random_vector(gen, static_cast<Eigen::Index>(spec.param_count()), scale);
}

}  // namespace

TEST(KlDiv, Examples) {
  std::mt19937_64 gen(31);
  const auto batch = random_batch(gen, kMlp);
  const Vector theta = dim_vector(gen, kMlp);
  EXPECT_EQ(kl_div(kMlp, theta, theta, batch), 0.0);

  const ModelSpec v2{ModelKind::Bigram, 2, 1, 0};
  Vector a = Vector::Zero(4);
  a[0] = 1.0;
  const auto one = TokenDataset::from_sequences({{0, 1}}, 1, DatasetRole::Pretrain);
  const Vector p = oracle::softmax(a.head(2));
  EXPECT_NEAR(kl_div(v2, a, Vector::Zero(4), one),
              p[0] * std::log(p[0] / 0.5) + p[1] * std::log(p[1] / 0.5), 1e-15);
  EXPECT_THROW(kl_div(v2, a, a, TokenDataset{}), PreconditionError);
}

TEST(QklDiv, Examples) {
  std::mt19937_64 gen(32);
  const auto batch = random_batch(gen, kBigram);
  const Vector theta = dim_vector(gen, kBigram);
  EXPECT_EQ(qkl_div(kBigram, theta, theta, batch), 0.0);

  // Shifting every logit row by a constant leaves the bigram softmax unchanged.
  const Vector shifted = theta + Vector::Constant(16, 3.5);
  EXPECT_NEAR(qkl_div(kBigram, theta, shifted, batch), 0.0, 1e-14);

  const ModelSpec v2{ModelKind::Bigram, 2, 1, 0};
  Vector ref = Vector::Zero(4);
  ref[0] = 1.0;
  const auto one = TokenDataset::from_sequences({{0, 1}}, 1, DatasetRole::Pretrain);
  EXPECT_NEAR(qkl_div(v2, Vector::Zero(4), ref, one), 0.25, 1e-16);
}

TEST(BregmanDiv, Examples) {
  std::mt19937_64 gen(33);
  const Matrix a = oracle::random_spd(gen, 5);
  auto f = [&](const Vector& x) { return 0.5 * x.dot(a * x); };
  auto g = [&](const Vector& x) -> Vector { return a * x; };
  for (int draw = 0; draw < 5; ++draw) {
    const Vector x = oracle::random_vector(gen, 5);
    const Vector y = oracle::random_vector(gen, 5);
    EXPECT_EQ(bregman_div(f, g, x, x), 0.0);
    EXPECT_NEAR(bregman_div(f, g, x, y), 0.5 * (x - y).dot(a * (x - y)), 1e-12);
  }
}

TEST(BregmanDiv, BigramNllIsNonNegative) {
  std::mt19937_64 gen(34);
  const auto batch = random_batch(gen, kBigram);
  const DivergenceKind kind{DivergenceTag::Bregman, 0.0};
  for (int draw = 0; draw < 50; ++draw) {
    const Vector x = dim_vector(gen, kBigram, 3.0);
    const Vector y = dim_vector(gen, kBigram, 3.0);
    EXPECT_GE(divergence_value(kind, kBigram, x, y, batch), -1e-12);
  }
}

TEST(BregmanDiv, RejectedForMlp) {
  EXPECT_THROW((DivergenceKind{DivergenceTag::Bregman, 0.0}.validate_for(kMlp)), ConfigError);
}

TEST(Divergences, NonNegative) {
  std::mt19937_64 gen(35);
  for (const auto& spec : {kBigram, kMlp}) {
    for (int draw = 0; draw < 20; ++draw) {
      const auto batch = random_batch(gen, spec);
      const Vector x = dim_vector(gen, spec, 2.0);
      const Vector y = dim_vector(gen, spec, 2.0);
      EXPECT_GE(kl_div(spec, x, y, batch), -1e-12);
      EXPECT_GE(qkl_div(spec, x, y, batch), -1e-12);
    }
  }
}

TEST(DampedGrad, ZeroAtCoincidence) {
  std::mt19937_64 gen(36);
  const auto batch = random_batch(gen, kBigram);
  const Vector theta = dim_vector(gen, kBigram);
  for (auto tag : {DivergenceTag::Kl, DivergenceTag::Qkl, DivergenceTag::Bregman}) {
    EXPECT_LE(damped_grad({tag, 0.7}, kBigram, theta, theta, batch).norm(), 1e-15);
  }
}

TEST(DampedGrad, PureDamping) {
  std::mt19937_64 gen(37);
  const auto batch = random_batch(gen, kMlp);
  const Vector ref = dim_vector(gen, kMlp);
  const Vector theta = dim_vector(gen, kMlp);
  const DivergenceKind kind{DivergenceTag::Kl, 0.3};
  const Vector want =
      divergence_grad(kind, kMlp, theta, ref, batch) + 0.3 * (theta - ref);
  EXPECT_LE((damped_grad(kind, kMlp, theta, ref, batch) - want).norm(), 1e-15);
  // The bigram model ignores rows not touched by the batch, so only damping acts there.
  const auto narrow = TokenDataset::from_sequences({{0, 1}}, 1, DatasetRole::Pretrain);
  Vector a = Vector::Zero(16);
  a[12] = 2.0;
  EXPECT_LE((damped_grad(kind, kBigram, a, Vector::Zero(16), narrow) - 0.3 * a).norm(), 1e-16);
}

TEST(DampedGrad, MatchesFiniteDifferences) {
  std::mt19937_64 gen(38);
  for (const auto& spec : {kBigram, kMlp}) {
    for (auto tag : {DivergenceTag::Kl, DivergenceTag::Qkl, DivergenceTag::Bregman}) {
      if (tag == DivergenceTag::Bregman && spec.kind == ModelKind::Mlp) continue;
      const DivergenceKind kind{tag, 0.2};
      for (int draw = 0; draw < 20; ++draw) {
        const auto batch = random_batch(gen, spec);
        const Vector x = dim_vector(gen, spec);
        const Vector y = dim_vector(gen, spec);
        const Vector fd = oracle::fd_gradient(
            [&](const Vector& t) { return damped_value(kind, spec, t, y, batch); }, x);
        EXPECT_LE(oracle::rel_error(damped_grad(kind, spec, x, y, batch), fd), 1e-5)
            << to_string(tag);
      }
    }
  }
}

TEST(LocalQuadratic, ZeroAtZeroScale) {
  std::mt19937_64 gen(39);
  const auto batch = random_batch(gen, kMlp);
  const Vector ref = dim_vector(gen, kMlp);
  Vector d = dim_vector(gen, kMlp);
  d.normalize();
  EXPECT_EQ(local_quadratic_residual({DivergenceTag::Kl, 0.1}, kMlp, ref, d, 0.0, batch), 0.0);
}

TEST(LocalQuadratic, ResidualIsThirdOrder) {
  std::mt19937_64 gen(40);
  for (const auto& spec : {kBigram, kMlp}) {
    const auto batch = random_batch(gen, spec);
    const Vector ref = dim_vector(gen, spec);
    Vector d = dim_vector(gen, spec);
    d.normalize();
    for (auto tag : {DivergenceTag::Kl, DivergenceTag::Qkl}) {
      const DivergenceKind kind{tag, 0.1};
      const double r1 = local_quadratic_residual(kind, spec, ref, d, 1e-2, batch);
      const double r2 = local_quadratic_residual(kind, spec, ref, d, 5e-3, batch);
      EXPECT_GE(r1 / r2, 6.0) << to_string(tag);
    }
  }
}

TEST(LocalQuadratic, QklSecondOrderMatchesTwiceGnh) {
  std::mt19937_64 gen(41);
  const auto batch = random_batch(gen, kMlp);
  const Vector ref = dim_vector(gen, kMlp);
  Vector d = dim_vector(gen, kMlp);
  d.normalize();
  const Matrix h = assemble_gnh(kMlp, ref, batch).hessian;
  const double second = oracle::second_directional(
      [&](const Vector& t) { return qkl_div(kMlp, t, ref, batch); }, ref, d);
  EXPECT_NEAR(second, 2.0 * d.dot(h * d), 1e-4);
}

TEST(DivergenceKind, Parsing) {
  EXPECT_EQ(parse_divergence_tag("qkl"), DivergenceTag::Qkl);
  EXPECT_THROW(parse_divergence_tag("wasserstein"), ConfigError);
  EXPECT_THROW((DivergenceKind{DivergenceTag::Kl, -1.0}.validate()), ConfigError);
}
