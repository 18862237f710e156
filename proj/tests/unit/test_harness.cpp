#include "mtu/errors.hpp"
#include "mtu/harness.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace mtu;

namespace {

const ModelSpec kTestbed{ModelKind::Mlp, 32, 4, 32};

CorpusSpec testbed_corpus() {
  CorpusSpec c;
  c.generator = CorpusGenerator::Patterned;
  c.seed = 7;
  return c;
}

TrainConfig testbed_train() {
  TrainConfig t;
  t.epochs = 300;
  return t;
}

struct Testbed {
  Corpus corpus;
  Vector target;
};

const Testbed& testbed() {
  static const Testbed tb = [] {
    Testbed t;
    t.corpus = generate_corpus(testbed_corpus());
    t.target = build_target(kTestbed, t.corpus, testbed_train(), 7).coords;
    return t;
  }();
  return tb;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST(Corpus, SplitsAreDisjointAndSized) {
  for (auto gen : {CorpusGenerator::Random, CorpusGenerator::Patterned}) {
    CorpusSpec spec;
    spec.generator = gen;
    spec.seed = 3;
    const Corpus c = generate_corpus(spec);
    EXPECT_EQ(c.forget.size(), 5u);
    EXPECT_EQ(c.pretrain.size(), 15u);
    std::set<Sequence> all(c.forget.begin(), c.forget.end());
    for (const auto& s : c.pretrain) EXPECT_TRUE(all.insert(s).second);
    for (const auto& s : c.forget) {
      EXPECT_EQ(s.size(), 12u);
      for (Token t : s) {
        EXPECT_GE(t, 0);
        EXPECT_LT(t, 32);
      }
    }
  }
}

TEST(Corpus, PatternedRepeatsMotif) {
  CorpusSpec spec;
  spec.generator = CorpusGenerator::Patterned;
  spec.period = 3;
  const Corpus c = generate_corpus(spec);
  for (const auto& s : c.pretrain) {
    for (std::size_t i = 3; i < s.size(); ++i) EXPECT_EQ(s[i], s[i - 3]);
    EXPECT_EQ(std::set<Token>(s.begin(), s.begin() + 3).size(), 3u);
  }
}

TEST(Corpus, SeededAndValidated) {
  CorpusSpec spec;
  spec.seed = 9;
  EXPECT_EQ(generate_corpus(spec).forget, generate_corpus(spec).forget);
  spec.forget_fraction = 1.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  EXPECT_EQ(parse_corpus_generator("patterned"), CorpusGenerator::Patterned);
  EXPECT_THROW(parse_corpus_generator("zipf"), ConfigError);
}

TEST(LcsRatio, Examples) {
  EXPECT_NEAR(lcs_ratio({0, 1, 2}, {0, 23, 2}), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(lcs_ratio({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_EQ(lcs_ratio({}, {}), 1.0);
  EXPECT_EQ(lcs_ratio({4, 5}, {1, 2, 3}), 0.0);
}

TEST(LcsRatio, MatchesBruteForceOracle) {
  std::mt19937_64 gen(71);
  for (int draw = 0; draw < 50; ++draw) {
    const auto a = oracle::random_sequences(gen, 4, 1, 1 + draw % 9)[0];
    const auto b = oracle::random_sequences(gen, 4, 1, 1 + draw % 7)[0];
    EXPECT_NEAR(lcs_ratio(a, b),
                static_cast<double>(oracle::lcs_length(a, b)) / static_cast<double>(b.size()),
                1e-15);
  }
}

TEST(Greedy, TiesGoToLowestToken) {
  const ModelSpec spec{ModelKind::Bigram, 5, 1, 0};
  EXPECT_EQ(greedy_continuation(spec, Vector::Zero(25), {3}, 4), (Sequence{0, 0, 0, 0}));
}

TEST(Memorization, UniformModelRarelyMatches) {
  CorpusSpec spec;
  spec.seq_len = 14;
  spec.seed = 4;
  const Corpus c = generate_corpus(spec);
  const ModelSpec model{ModelKind::Bigram, 32, 1, 0};
  const auto r = memorization_report(model, Vector::Zero(32 * 32), c, 4, 10);
  EXPECT_LE(r.exact_match_rate, 1e-3);
  EXPECT_GE(r.lcs_ratio, 0.0);
  EXPECT_LE(r.lcs_ratio, 1.0);
  EXPECT_NEAR(r.nll_forget, std::log(32.0), 1e-12);
}

TEST(BuildTarget, MemorizesDeterministicBigramChain) {
  const ModelSpec spec{ModelKind::Bigram, 8, 1, 0};
  Corpus c;
  c.forget = {{0, 1, 2, 3, 4, 5, 6, 7}};
  c.pretrain = {{0, 1, 2, 3, 4, 5, 6, 7}};
  TrainConfig cfg;
  cfg.prompt_len = 2;
  cfg.completion_len = 6;
  const Vector theta = build_target(spec, c, cfg, 1).coords;
  const auto r = memorization_report(spec, theta, c, 2, 6);
  EXPECT_EQ(r.exact_match_rate, 1.0);
  EXPECT_EQ(r.lcs_ratio, 1.0);
}

TEST(BuildTarget, BigramConflictCapsExactMatch) {
  // Token 1 is followed by 2 in one sequence and by 4 in the other, so a
  // bigram model can complete at most one of the two prompts.
  const ModelSpec spec{ModelKind::Bigram, 8, 1, 0};
  Corpus c;
  c.forget = {{0, 1, 2, 3}, {5, 1, 4, 6}};
  c.pretrain = {{7, 7, 7, 7}};
  TrainConfig cfg;
  cfg.prompt_len = 1;
  cfg.completion_len = 3;
  cfg.min_exact_match = 0.9;
  EXPECT_THROW(build_target(spec, c, cfg, 1), TrainingError);
  cfg.min_exact_match = 0.0;
  const Vector theta = build_target(spec, c, cfg, 1).coords;
  const auto r = memorization_report(spec, theta, c, 1, 3);
  EXPECT_LT(r.exact_match_rate, 1.0);
  EXPECT_LE(r.exact_match_rate, 0.5);
}

TEST(BuildTarget, MlpTestbedMemorizes) {
  const auto& tb = testbed();
  const auto r = memorization_report(kTestbed, tb.target, tb.corpus, 4, 8);
  EXPECT_GE(r.exact_match_rate, 0.9);
  EXPECT_EQ(build_target(kTestbed, tb.corpus, testbed_train(), 7).coords, tb.target);
}

TEST(Theorem1, SlopeOfSyntheticPowerLaw) {
  const std::vector<double> alphas{0.1, 0.05, 0.025};
  std::vector<double> devs;
  for (double a : alphas) devs.push_back(3.0 * std::pow(a * std::log(1.0 / a), 1.5));
  EXPECT_NEAR(theorem1_slope(alphas, devs), 1.5, 1e-12);
}

TEST(Theorem1, DeterministicAcrossCalls) {
  auto cfg = Theorem1Config::defaults();
  cfg.alphas = {0.1, 0.05};
  cfg.lags = {false};
  const auto a = verify_theorem1(cfg);
  const auto b = verify_theorem1(cfg);
  ASSERT_EQ(a.rows.size(), 2u);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].deviation, b.rows[i].deviation);
  }
  EXPECT_LT(a.rows[1].deviation, a.rows[0].deviation);
  EXPECT_NEAR(a.rows[0].gamma * a.rows[0].steps, cfg.horizon, a.rows[0].gamma);
}

TEST(Theorem1, RejectsNonContractingConfig) {
  auto cfg = Theorem1Config::defaults();
  cfg.base.kappa = 1.0 / cfg.base.eta;
  EXPECT_THROW(verify_theorem1(cfg), ConfigError);
}

TEST(Lemma, PlainGradientDescentRowsPass) {
  LemmaConfig cfg;
  cfg.mus = {0.0};
  const auto r = verify_lemma(cfg);
  EXPECT_EQ(r.rows.size(), 6u);
  for (const auto& row : r.rows) {
    EXPECT_FALSE(row.skipped);
    EXPECT_EQ(row.violations, 0);
    EXPECT_LE(row.worst_ratio, 1.0);
  }
  EXPECT_TRUE(r.passed);
}

TEST(Lemma, ErrorModeNames) {
  for (auto m : {ErrorMode::Zero, ErrorMode::ConstantNorm, ErrorMode::Decaying}) {
    EXPECT_EQ(parse_error_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_error_mode("gaussian"), ConfigError);
}

TEST(Dynamics, RejectsUnmemorizedStart) {
  const auto& tb = testbed();
  auto cfg = DynamicsConfig::defaults();
  cfg.mt.steps = 2;
  const Vector random = init_params(kTestbed, 1).coords;
  try {
    gradient_dynamics_study(kTestbed, random, tb.corpus, cfg);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("not saturated"), std::string::npos);
  }
}

TEST(Dynamics, StartOrdering) {
  const auto& tb = testbed();
  auto cfg = DynamicsConfig::defaults();
  cfg.mt.steps = 20;
  const auto res = gradient_dynamics_study(kTestbed, tb.target, tb.corpus, cfg);
  EXPECT_GE(res.initial_forget_probability, 0.9);
  double ll = 0, npo = 0, nlul = 0;
  for (const auto& [tag, norm] : res.initial_grad_norms) {
    if (tag == LossTag::Ll) ll = norm;
    if (tag == LossTag::Npo) npo = norm;
    if (tag == LossTag::Nlul) nlul = norm;
  }
  EXPECT_GT(nlul, ll);
  EXPECT_GT(nlul, npo);
  ASSERT_NE(res.find(LossTag::It), nullptr);
  EXPECT_GT(res.find(LossTag::It)->points.front().teacher_kl, 0.0);
  EXPECT_EQ(res.find(LossTag::Ll)->points.front().t, 0);
  EXPECT_EQ(res.find(LossTag::Ll)->points.back().t, 20);
}

TEST(Dynamics, JudgeOnSyntheticSeries) {
  DynamicsResult res;
  res.initial_grad_norms = {{LossTag::Ll, 0.1}, {LossTag::Nlul, 2.0}};
  res.series.push_back({LossTag::Ll, {{0, 0.05, 0.1, 0}, {500, 0.1, 0.1, 0}}});
  res.series.push_back({LossTag::Nlul, {{0, 0.05, 2.0, 0}, {500, 1.55, 0.5, 0}}});
  const auto v = judge_dynamics(res, DynamicsCriteria{});
  EXPECT_NEAR(v.grad_ratio, 20.0, 1e-12);
  EXPECT_NEAR(v.nlul_rise, 1.5, 1e-12);
  EXPECT_NEAR(v.ll_rise, 0.05, 1e-12);
  EXPECT_TRUE(v.passed);
  res.series[0].points.back().forget_nll = 0.5;
  EXPECT_FALSE(judge_dynamics(res, DynamicsCriteria{}).passed);
}

TEST(QuadraticCheck, DefaultsPass) {
  const auto r = verify_divergence_quadratic(QuadraticCheckConfig{});
  EXPECT_EQ(r.rows.size(), 12u);
  EXPECT_EQ(r.reductions.size(), 4u);
  for (double red : r.reductions) EXPECT_GE(red, 10.0);
  EXPECT_TRUE(r.passed);
}

TEST(Unlearn, NoOpIsBitwiseStable) {
  const auto& tb = testbed();
  UnlearnMethod noop;
  noop.name = "noop";
  noop.kind = MethodKind::NoOp;
  const auto rows = unlearn_experiment(kTestbed, tb.target, tb.corpus, {noop}, {}, {});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_FALSE(rows[0].failed);
  EXPECT_TRUE(rows[0].before == rows[0].after);
  EXPECT_EQ(rows[0].pretrain_drift, 0.0);
  EXPECT_EQ(rows[0].theta, tb.target);
}

TEST(Unlearn, ThrowingMethodBecomesFailedRow) {
  const auto& tb = testbed();
  UnlearnMethod wild;
  wild.name = "wild";
  wild.kind = MethodKind::MomentumSgd;
  wild.mt.mu = 1.5;
  UnlearnMethod noop;
  noop.name = "noop";
  noop.kind = MethodKind::NoOp;
  const auto rows = unlearn_experiment(kTestbed, tb.target, tb.corpus, {wild, noop}, {}, {});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].method, "wild");
  EXPECT_TRUE(rows[0].failed);
  EXPECT_FALSE(rows[0].error.empty());
  EXPECT_FALSE(rows[1].failed);
  std::ostringstream csv;
  write_unlearn_csv(csv, rows);
  EXPECT_NE(csv.str().find("wild,failed"), std::string::npos);
}

TEST(Unlearn, StopRuleHaltsEarly) {
  const auto& tb = testbed();
  UnlearnMethod mt;
  mt.name = "mt";
  mt.mt.eta = 0.03;
  mt.mt.kappa = 0.1;
  mt.mt.alpha = 0.3;
  mt.mt.mu = 0.5;
  mt.mt.steps = 3000;
  mt.mt.loss = LossKind::nlul();
  mt.mt.divergence = {DivergenceTag::Kl, 0.1};
  StopRule stop;
  stop.max_exact_match = 0.2;
  stop.check_every = 5;
  const auto rows = unlearn_experiment(kTestbed, tb.target, tb.corpus, {mt}, stop, {});
  ASSERT_FALSE(rows[0].failed) << rows[0].error;
  EXPECT_LT(rows[0].steps_run, 3000);
  EXPECT_EQ(rows[0].steps_run % 5, 0);
  EXPECT_LE(rows[0].after.exact_match_rate, 0.2);
  EXPECT_EQ(rows[0].trajectory.steps.size(), static_cast<std::size_t>(rows[0].steps_run) + 1);
}

TEST(Unlearn, SequentialRejectsTooManyRounds) {
  const auto& tb = testbed();
  UnlearnMethod noop;
  noop.name = "noop";
  noop.kind = MethodKind::NoOp;
  EXPECT_THROW(sequential_unlearn(kTestbed, tb.target, tb.corpus, noop, 6, {}, {}), ConfigError);
  const auto row = sequential_unlearn(kTestbed, tb.target, tb.corpus, noop, 4, {}, {});
  EXPECT_EQ(row.method, "noop-sequential");
  EXPECT_TRUE(row.before == row.after);
}

TEST(Csv, Headers) {
  std::ostringstream a, b, c, d;
  write_theorem1_csv(a, {});
  write_lemma_csv(b, {});
  write_dynamics_csv(c, {});
  write_quadratic_csv(d, {});
  EXPECT_EQ(first_line(a.str()), "alpha,grad_lag,steps,gamma,deviation,displacement");
  EXPECT_EQ(first_line(c.str()), "loss,t,metric,value");
  EXPECT_EQ(first_line(d.str()), "model,divergence,t,residual,scaled");
  EXPECT_EQ(first_line(b.str()).substr(0, 16), "mu,lambda,error,");
}
