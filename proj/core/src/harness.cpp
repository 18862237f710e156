#include "mtu/harness.hpp"

#include "mtu/errors.hpp"

#include <algorithm>
#include <future>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

namespace mtu {

// ---------------------------------------------------------------- target

ParamVector build_target(const ModelSpec& spec, const Corpus& corpus, const TrainConfig& cfg,
                         std::uint64_t seed) {
  spec.validate();
  if (cfg.epochs < 0) throw ConfigError("epochs", "must be nonnegative");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning_rate", "must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw ConfigError("momentum", "must lie in [0, 1)");
  }
  if (cfg.batch_size < 0) throw ConfigError("batch_size", "must be nonnegative");

  const TokenDataset data = corpus.all_pairs(spec.context_len);
  data.validate(spec.vocab_size);
  ParamVector params = init_params(spec, seed);
  Vector& theta = params.coords;
  Vector velocity = Vector::Zero(theta.size());
  const LogitGradFn nll = [](const Vector& h, Token y) { return nll_grad(h, y); };

  std::mt19937_64 gen(seed);
  std::vector<std::size_t> order(data.pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch =
      cfg.batch_size == 0 ? order.size()
                          : std::min(order.size(), static_cast<std::size_t>(cfg.batch_size));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < order.size()) std::shuffle(order.begin(), order.end(), gen);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const Vector g =
          batch == order.size()
              ? grad_loss(spec, theta, data, nll)
              : grad_loss(spec, theta,
                          data.select_pairs(std::span(order).subspan(start, stop - start)), nll);
      velocity = cfg.momentum * velocity + g;
      theta -= cfg.learning_rate * velocity;
      if (!theta.allFinite()) {
        throw TrainingError("target training diverged at epoch " + std::to_string(epoch) +
                            "; lower learning_rate");
      }
    }
  }

  const auto report =
      memorization_report(spec, theta, corpus, cfg.prompt_len, cfg.completion_len);
  if (report.exact_match_rate < cfg.min_exact_match) {
    throw TrainingError("forget exact-match rate " + format_double(report.exact_match_rate) +
                        " is below " + format_double(cfg.min_exact_match) +
                        "; train for more epochs or use a larger model");
  }
  return params;
}

// ---------------------------------------------------------------- dynamics

DynamicsConfig DynamicsConfig::defaults() {
  DynamicsConfig cfg;
  cfg.mt.eta = 0.004;
  cfg.mt.kappa = 1.0;
  cfg.mt.alpha = 1.0;
  cfg.mt.mu = 0.5;
  cfg.mt.steps = 500;
  cfg.mt.divergence = {DivergenceTag::Kl, 0.1};
  cfg.record_every = 10;
  return cfg;
}

const DynamicsSeries* DynamicsResult::find(LossTag tag) const {
  for (const auto& s : series) {
    if (s.loss == tag) return &s;
  }
  return nullptr;
}

namespace {

LossKind dynamics_loss(LossTag tag, double beta) {
  switch (tag) {
    case LossTag::Npo:
      return LossKind::npo(beta);
    case LossTag::It:
      return LossKind::it(TeacherLogits::uniform());
    default:
      return LossKind::with_tag(tag);
  }
}

}  // namespace

DynamicsResult gradient_dynamics_study(const ModelSpec& spec, const Vector& target,
                                       const Corpus& corpus, const DynamicsConfig& cfg) {
  const TokenDataset forget = corpus.forget_set(spec.context_len);
  const TokenDataset pretrain = corpus.pretrain_set(spec.context_len);
  DynamicsResult result;
  result.initial_forget_probability = mean_forget_probability(spec, target, forget);
  if (result.initial_forget_probability < cfg.min_forget_probability) {
    throw PreconditionError("start is not memorized: mean forget p_y = " +
                            format_double(result.initial_forget_probability) + " < " +
                            format_double(cfg.min_forget_probability) +
                            " (p_y is not saturated)");
  }
  const LossFunction nll(LossKind::nll(), spec);
  const int every = std::max(1, cfg.record_every);

  for (LossTag tag : cfg.losses) {
    MtConfig mt = cfg.mt;
    mt.loss = dynamics_loss(tag, cfg.npo_beta);
    const LossFunction loss(mt.loss, spec, target);
    const ModelObjective obj(spec, forget, pretrain, loss, mt.divergence);
    result.initial_grad_norms.emplace_back(tag, obj.loss_grad(target, nullptr).norm());

    DynamicsSeries series;
    series.loss = tag;
    RunOptions opts;
    opts.record_metrics = false;
    opts.observer = [&](int t, const Vector& theta) {
      if (t % every == 0 || t == mt.steps) {
        DynamicsPoint p;
        p.t = t;
        p.forget_nll = nll.value(theta, forget);
        p.grad_norm = obj.loss_grad(theta, nullptr).norm();
        if (tag == LossTag::It) p.teacher_kl = obj.loss(theta, nullptr);
        series.points.push_back(p);
      }
      return true;
    };
    mt_run(obj, target, mt, /*full_batch=*/true, opts);
    result.series.push_back(std::move(series));
  }
  return result;
}

DynamicsVerdict judge_dynamics(const DynamicsResult& result, const DynamicsCriteria& criteria) {
  const auto* ll = result.find(LossTag::Ll);
  const auto* nlul = result.find(LossTag::Nlul);
  if (!ll || !nlul || ll->points.empty() || nlul->points.empty()) {
    throw PreconditionError("judge_dynamics: the study must include LL and NLUL runs");
  }
  auto rise = [](const DynamicsSeries& s) {
    return s.points.back().forget_nll - s.points.front().forget_nll;
  };
  DynamicsVerdict v;
  const double ll_norm = ll->points.front().grad_norm;
  v.grad_ratio = ll_norm > 0.0 ? nlul->points.front().grad_norm / ll_norm
                               : std::numeric_limits<double>::infinity();
  v.nlul_rise = rise(*nlul);
  v.ll_rise = rise(*ll);
  v.passed = v.grad_ratio >= criteria.min_grad_ratio && v.nlul_rise >= criteria.min_nlul_rise &&
             v.ll_rise <= criteria.max_ll_rise;
  return v;
}

// ---------------------------------------------------------------- unlearning

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::NoOp:
      return "noop";
    case MethodKind::MeanTeacher:
      return "mt";
    case MethodKind::MeanTeacherBatched:
      return "mt-batched";
    case MethodKind::AdamW:
      return "adamw";
    case MethodKind::MomentumSgd:
      return "momentum-sgd";
  }
  return "unknown";
}

MethodKind parse_method_kind(const std::string& name) {
  for (auto k : {MethodKind::NoOp, MethodKind::MeanTeacher, MethodKind::MeanTeacherBatched,
                 MethodKind::AdamW, MethodKind::MomentumSgd}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("optimizer", "unknown optimizer '" + name + "'");
}

namespace {

struct RoundOutcome {
  Vector theta;
  Trajectory trajectory;
  int steps = 0;
};

RoundOutcome run_method(const ModelSpec& spec, const Vector& start, const Vector& npo_base,
                        const Corpus& corpus, const UnlearnMethod& method, const StopRule& stop,
                        const EvalConfig& eval) {
  RoundOutcome out;
  out.theta = start;
  if (method.kind == MethodKind::NoOp) return out;

  const ModelObjective obj(spec, corpus.forget_set(spec.context_len),
                           corpus.pretrain_set(spec.context_len),
                           LossFunction(method.mt.loss, spec, npo_base), method.mt.divergence);
  RunOptions opts;
  opts.anchor = &start;
  const int every = std::max(1, stop.check_every);
  opts.observer = [&](int t, const Vector& theta) {
    out.theta = theta;
    out.steps = t;
    if (!stop.max_exact_match || t == 0 || t % every != 0) return true;
    const auto r = memorization_report(spec, theta, corpus, eval.prompt_len, eval.completion_len);
    return r.exact_match_rate > *stop.max_exact_match;
  };

  switch (method.kind) {
    case MethodKind::MeanTeacher:
      out.trajectory = mt_run(obj, start, method.mt, method.full_batch, opts);
      break;
    case MethodKind::MeanTeacherBatched:
      out.trajectory = mt_run_batched(obj, start, method.mt, opts);
      break;
    case MethodKind::AdamW:
      out.trajectory =
          baseline_run(BaselineKind::AdamW, obj, start, method.mt, method.adam, method.full_batch,
                       opts);
      break;
    case MethodKind::MomentumSgd:
      out.trajectory = baseline_run(BaselineKind::MomentumSgd, obj, start, method.mt,
                                    method.adam, method.full_batch, opts);
      break;
    case MethodKind::NoOp:
      break;
  }
  return out;
}

UnlearnRow finish_row(const ModelSpec& spec, const Corpus& corpus, const EvalConfig& eval,
                      const std::string& name, const MemorizationReport& before,
                      RoundOutcome&& outcome) {
  UnlearnRow row;
  row.method = name;
  row.before = before;
  row.after =
      memorization_report(spec, outcome.theta, corpus, eval.prompt_len, eval.completion_len);
  row.pretrain_drift = row.after.nll_pretrain - row.before.nll_pretrain;
  row.steps_run = outcome.steps;
  row.trajectory = std::move(outcome.trajectory);
  row.theta = std::move(outcome.theta);
  return row;
}

}  // namespace

std::vector<UnlearnRow> unlearn_experiment(const ModelSpec& spec, const Vector& target,
                                           const Corpus& corpus,
                                           const std::vector<UnlearnMethod>& methods,
                                           const StopRule& stop, const EvalConfig& eval) {
  const auto before =
      memorization_report(spec, target, corpus, eval.prompt_len, eval.completion_len);
  std::vector<std::future<UnlearnRow>> jobs;
  jobs.reserve(methods.size());
  for (const auto& m : methods) {
    jobs.push_back(std::async(std::launch::async, [&, m]() {
      try {
        return finish_row(spec, corpus, eval, m.name, before,
                          run_method(spec, target, target, corpus, m, stop, eval));
      } catch (const std::exception& e) {
        UnlearnRow row;
        row.method = m.name;
        row.before = before;
        row.after = before;
        row.failed = true;
        row.error = e.what();
        return row;
      }
    }));
  }
  std::vector<UnlearnRow> rows;
  rows.reserve(jobs.size());
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

UnlearnRow sequential_unlearn(const ModelSpec& spec, const Vector& target, const Corpus& corpus,
                              const UnlearnMethod& method, int rounds, const StopRule& stop,
                              const EvalConfig& eval) {
  if (rounds < 1 || static_cast<std::size_t>(rounds) > corpus.forget.size()) {
    throw ConfigError("rounds", "must lie in [1, number of forget sequences]");
  }
  const auto before =
      memorization_report(spec, target, corpus, eval.prompt_len, eval.completion_len);
  RoundOutcome state;
  state.theta = target;
  const std::size_t n = corpus.forget.size();
  for (int r = 0; r < rounds; ++r) {
    const std::size_t lo = n * static_cast<std::size_t>(r) / static_cast<std::size_t>(rounds);
    const std::size_t hi = n * static_cast<std::size_t>(r + 1) / static_cast<std::size_t>(rounds);
    Corpus chunk;
    chunk.forget.assign(corpus.forget.begin() + static_cast<std::ptrdiff_t>(lo),
                        corpus.forget.begin() + static_cast<std::ptrdiff_t>(hi));
    chunk.pretrain = corpus.pretrain;
    RoundOutcome next = run_method(spec, state.theta, state.theta, chunk, method, stop, eval);
    next.steps += state.steps;
    state = std::move(next);
  }
  return finish_row(spec, corpus, eval, method.name + "-sequential", before, std::move(state));
}

// ---------------------------------------------------------------- CSV

void write_theorem1_csv(std::ostream& out, const Theorem1Result& result) {
  out << "alpha,grad_lag,steps,gamma,deviation,displacement\n";
  for (const auto& r : result.rows) {
    out << format_double(r.alpha) << ',' << (r.grad_lag ? 1 : 0) << ',' << r.steps << ','
        << format_double(r.gamma) << ',' << format_double(r.deviation) << ','
        << format_double(r.displacement) << '\n';
  }
}

void write_lemma_csv(std::ostream& out, const LemmaResult& result) {
  out << "mu,lambda,error,eta,steps,skipped,worst_ratio,worst_step,violations,final_distance,"
         "final_bound\n";
  for (const auto& r : result.rows) {
    out << format_double(r.mu) << ',' << format_double(r.lambda) << ',' << to_string(r.error)
        << ',' << format_double(r.eta) << ',' << r.steps << ',' << (r.skipped ? 1 : 0) << ','
        << format_double(r.worst_ratio) << ',' << r.worst_step << ',' << r.violations << ','
        << format_double(r.final_distance) << ',' << format_double(r.final_bound) << '\n';
  }
}

void write_dynamics_csv(std::ostream& out, const DynamicsResult& result) {
  out << "loss,t,metric,value\n";
  for (const auto& s : result.series) {
    const std::string name = to_string(s.loss);
    for (const auto& p : s.points) {
      out << name << ',' << p.t << ",forget_nll," << format_double(p.forget_nll) << '\n';
      out << name << ',' << p.t << ",grad_norm," << format_double(p.grad_norm) << '\n';
      if (s.loss == LossTag::It) {
        out << name << ',' << p.t << ",teacher_kl," << format_double(p.teacher_kl) << '\n';
      }
    }
  }
}

void write_quadratic_csv(std::ostream& out, const QuadraticCheckResult& result) {
  out << "model,divergence,t,residual,scaled\n";
  for (const auto& r : result.rows) {
    out << r.model << ',' << to_string(r.divergence) << ',' << format_double(r.t) << ','
        << format_double(r.residual) << ',' << format_double(r.scaled) << '\n';
  }
}

void write_unlearn_csv(std::ostream& out, const std::vector<UnlearnRow>& rows) {
  out << "method,status,steps,phase,exact_match_rate,lcs_ratio,nll_forget,nll_pretrain,"
         "pretrain_drift\n";
  for (const auto& r : rows) {
    const char* status = r.failed ? "failed" : "ok";
    for (const auto* phase : {"before", "after"}) {
      const auto& m = phase[0] == 'b' ? r.before : r.after;
      out << r.method << ',' << status << ',' << r.steps_run << ',' << phase << ','
          << format_double(m.exact_match_rate) << ',' << format_double(m.lcs_ratio) << ','
          << format_double(m.nll_forget) << ',' << format_double(m.nll_pretrain) << ','
          << format_double(phase[0] == 'b' ? 0.0 : r.pretrain_drift) << '\n';
    }
  }
}

}  // namespace mtu
