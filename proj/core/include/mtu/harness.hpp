#pragma once

#include "mtu/curvature.hpp"
#include "mtu/dataset.hpp"
#include "mtu/divergence.hpp"
#include "mtu/loss.hpp"
#include "mtu/model.hpp"
#include "mtu/optimizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mtu {

// ---------------------------------------------------------------- corpus

enum class CorpusGenerator {
  Random,     // i.i.d. uniform tokens
  Patterned,  // a random motif of `period` tokens repeated to seq_len
};

std::string to_string(CorpusGenerator g);
CorpusGenerator parse_corpus_generator(const std::string& name);

struct CorpusSpec {
  int vocab_size = 32;
  int n_sequences = 20;
  int seq_len = 12;
  double forget_fraction = 0.25;
  CorpusGenerator generator = CorpusGenerator::Random;
  int period = 4;
  std::uint64_t seed = 0;

  int forget_count() const;
  void validate() const;
};

/// Forget and pretrain sequences; the two sets never share a sequence.
struct Corpus {
  std::vector<Sequence> forget;
  std::vector<Sequence> pretrain;

  TokenDataset forget_set(int context_len) const;
  TokenDataset pretrain_set(int context_len) const;
  TokenDataset all_pairs(int context_len) const;
};

Corpus generate_corpus(const CorpusSpec& spec);

// ---------------------------------------------------------------- memorization

struct MemorizationReport {
  double exact_match_rate = 0.0;
  double lcs_ratio = 0.0;
  double nll_forget = 0.0;
  double nll_pretrain = 0.0;
};

bool operator==(const MemorizationReport& a, const MemorizationReport& b);

/// LCS length divided by the reference length (1 for two empty sequences).
double lcs_ratio(const Sequence& candidate, const Sequence& reference);

/// Greedy decoding; ties go to the lowest token id.
Sequence greedy_continuation(const ModelSpec& spec, const Vector& theta, const Sequence& prompt,
                             int length);

MemorizationReport memorization_report(const ModelSpec& spec, const Vector& theta,
                                       const Corpus& corpus, int prompt_len, int completion_len);

/// Mean p_y over the forget pairs.
double mean_forget_probability(const ModelSpec& spec, const Vector& theta,
                               const TokenDataset& forget);

// ---------------------------------------------------------------- target

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.5;
  double momentum = 0.9;
  int batch_size = 0;  // 0 = full batch
  int prompt_len = 4;
  int completion_len = 8;
  double min_exact_match = 0.9;
};

/// NLL + momentum SGD on both splits. Throws TrainingError when the forget
/// exact-match rate stays below cfg.min_exact_match.
ParamVector build_target(const ModelSpec& spec, const Corpus& corpus, const TrainConfig& cfg,
                         std::uint64_t seed);

// ---------------------------------------------------------------- theorem 1

struct Theorem1Config {
  ModelSpec spec{ModelKind::Bigram, 5, 1, 0};
  CorpusSpec corpus{5, 6, 8, 1.0 / 3.0, CorpusGenerator::Random, 4, 1};
  double init_scale = 1.0;  // theta_0 ~ U(-init_scale, init_scale)
  std::uint64_t init_seed = 1;
  MtConfig base{};
  std::vector<double> alphas{0.1, 0.05, 0.025, 0.0125};
  double horizon = 1.0;  // T * gamma
  std::vector<bool> lags{false, true};
  double min_slope = 0.8;

  static Theorem1Config defaults();
};

struct Theorem1Row {
  double alpha = 0.0;
  bool grad_lag = false;
  int steps = 0;
  double gamma = 0.0;
  double deviation = 0.0;
  double displacement = 0.0;  // |theta_T - theta_0| of the MT run
};

struct Theorem1Result {
  std::vector<Theorem1Row> rows;
  std::vector<double> slopes;     // one per lag setting, in cfg.lags order
  std::vector<bool> monotone;
  bool passed = false;
};

Theorem1Result verify_theorem1(const Theorem1Config& cfg);

/// Least-squares slope of log(deviation) against log(alpha log(1/alpha)).
double theorem1_slope(const std::vector<double>& alphas, const std::vector<double>& deviations);

// ---------------------------------------------------------------- lemma

struct LemmaConfig {
  int dim = 8;
  std::uint64_t seed = 3;
  double eigen_min = 0.1;  // spectrum of the random SPD family
  double eigen_max = 10.0;
  std::vector<double> mus{0.0, 0.5, 0.9};
  std::vector<double> lambdas{0.1, 1.0, 10.0};
  std::vector<ErrorInjection> errors{{ErrorMode::Zero, 0.0, 0.99, 11},
                                     {ErrorMode::ConstantNorm, 0.01, 0.99, 11}};
  double step_fraction = 0.5;  // eta = step_fraction / (lambda_max(H) + lambda)
  int steps = 400;
  double roundoff = 1e-12;  // slack relative to |u*|
};

struct LemmaRow {
  double mu = 0.0;
  double lambda = 0.0;
  ErrorMode error = ErrorMode::Zero;
  double eta = 0.0;
  int steps = 0;
  bool skipped = false;
  std::string note;
  double worst_ratio = 0.0;  // max_t measured / bound
  int worst_step = 0;
  int violations = 0;
  double final_distance = 0.0;
  double final_bound = 0.0;
};

struct LemmaResult {
  std::vector<LemmaRow> rows;
  bool passed = false;
};

LemmaResult verify_lemma(const LemmaConfig& cfg);

std::string to_string(ErrorMode mode);
ErrorMode parse_error_mode(const std::string& name);

// ---------------------------------------------------------------- dynamics

struct DynamicsPoint {
  int t = 0;
  double forget_nll = 0.0;
  double grad_norm = 0.0;   // |grad l| of the unlearning loss on the forget set
  double teacher_kl = 0.0;  // IT only
};

struct DynamicsSeries {
  LossTag loss = LossTag::Ll;
  std::vector<DynamicsPoint> points;
};

struct DynamicsConfig {
  std::vector<LossTag> losses{LossTag::Ll, LossTag::Npo, LossTag::Nlul, LossTag::It};
  MtConfig mt{};
  double npo_beta = 0.1;
  double min_forget_probability = 0.9;
  int record_every = 1;

  static DynamicsConfig defaults();
};

struct DynamicsResult {
  std::vector<DynamicsSeries> series;
  double initial_forget_probability = 0.0;
  std::vector<std::pair<LossTag, double>> initial_grad_norms;

  const DynamicsSeries* find(LossTag tag) const;
};

/// Throws PreconditionError when the start is not memorized.
DynamicsResult gradient_dynamics_study(const ModelSpec& spec, const Vector& target,
                                       const Corpus& corpus, const DynamicsConfig& cfg);

struct DynamicsCriteria {
  double min_grad_ratio = 10.0;  // |grad NLUL| / |grad LL| at the start
  double min_nlul_rise = 1.0;    // forget NLL gain of MT + NLUL over the run
  double max_ll_rise = 0.1;      // forget NLL gain of MT + LL over the run
};

struct DynamicsVerdict {
  double grad_ratio = 0.0;
  double nlul_rise = 0.0;
  double ll_rise = 0.0;
  bool passed = false;
};

/// Requires LL and NLUL series in the result.
DynamicsVerdict judge_dynamics(const DynamicsResult& result, const DynamicsCriteria& criteria);

// ---------------------------------------------------------------- divergence quadratic

struct QuadraticCheckConfig {
  std::vector<ModelSpec> models{{ModelKind::Bigram, 6, 1, 0}, {ModelKind::Mlp, 6, 2, 5}};
  std::vector<DivergenceTag> divergences{DivergenceTag::Kl, DivergenceTag::Qkl};
  double lambda = 0.1;
  std::vector<double> ts{1e-2, 1e-3, 1e-4};
  double min_reduction = 10.0;
  std::uint64_t seed = 5;
};

struct QuadraticCheckRow {
  std::string model;
  DivergenceTag divergence = DivergenceTag::Kl;
  double t = 0.0;
  double residual = 0.0;
  double scaled = 0.0;  // residual / t^2
};

struct QuadraticCheckResult {
  std::vector<QuadraticCheckRow> rows;
  std::vector<double> reductions;  // scaled(t_first) / scaled(t_last) per (model, divergence)
  bool passed = false;
};

QuadraticCheckResult verify_divergence_quadratic(const QuadraticCheckConfig& cfg);

// ---------------------------------------------------------------- unlearning

enum class MethodKind { NoOp, MeanTeacher, MeanTeacherBatched, AdamW, MomentumSgd };

std::string to_string(MethodKind kind);
MethodKind parse_method_kind(const std::string& name);

struct UnlearnMethod {
  std::string name;
  MethodKind kind = MethodKind::MeanTeacher;
  MtConfig mt{};
  AdamParams adam{};
  bool full_batch = true;
};

/// Stops a run once the forget exact-match rate falls to `max_exact_match`,
/// checked every `check_every` steps.
struct StopRule {
  std::optional<double> max_exact_match;
  int check_every = 10;
};

struct EvalConfig {
  int prompt_len = 4;
  int completion_len = 8;
};

struct UnlearnRow {
  std::string method;
  MemorizationReport before;
  MemorizationReport after;
  double pretrain_drift = 0.0;  // after.nll_pretrain - before.nll_pretrain
  int steps_run = 0;
  bool failed = false;
  std::string error;
  Trajectory trajectory;
  Vector theta;
};

/// Runs every method from the same target; a method that throws becomes a
/// failed row. Methods run concurrently.
std::vector<UnlearnRow> unlearn_experiment(const ModelSpec& spec, const Vector& target,
                                           const Corpus& corpus,
                                           const std::vector<UnlearnMethod>& methods,
                                           const StopRule& stop, const EvalConfig& eval);

/// Splits the forget set into `rounds` contiguous chunks and unlearns them in
/// sequence, each round starting from the previous result. Metrics are on the
/// full corpus.
UnlearnRow sequential_unlearn(const ModelSpec& spec, const Vector& target, const Corpus& corpus,
                              const UnlearnMethod& method, int rounds, const StopRule& stop,
                              const EvalConfig& eval);

// ---------------------------------------------------------------- CSV

void write_theorem1_csv(std::ostream& out, const Theorem1Result& result);
void write_lemma_csv(std::ostream& out, const LemmaResult& result);
void write_dynamics_csv(std::ostream& out, const DynamicsResult& result);
void write_quadratic_csv(std::ostream& out, const QuadraticCheckResult& result);
void write_unlearn_csv(std::ostream& out, const std::vector<UnlearnRow>& rows);

}  // namespace mtu
