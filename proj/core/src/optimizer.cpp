#include "mtu/optimizer.hpp"

#include "mtu/curvature.hpp"
#include "mtu/errors.hpp"

#include <cmath>
#include <random>

namespace mtu {

// ---------------------------------------------------------------- objectives

ModelObjective::ModelObjective(ModelSpec spec, TokenDataset forget, TokenDataset pretrain,
                               LossFunction loss, DivergenceKind divergence)
    : spec_(spec),
      forget_(std::move(forget)),
      pretrain_(std::move(pretrain)),
      loss_(std::move(loss)),
      divergence_(divergence) {
  spec_.validate();
  divergence_.validate_for(spec_);
  divergence_.lambda = 0.0;
  forget_.validate(spec_.vocab_size);
  pretrain_.validate(spec_.vocab_size);
}

TokenDataset ModelObjective::forget_subset(const Indices* idx) const {
  if (!idx) return forget_;
  return loss_.kind().sequence_level() ? forget_.select_sequences(*idx)
                                       : forget_.select_pairs(*idx);
}

TokenDataset ModelObjective::pretrain_subset(const Indices* idx) const {
  return idx ? pretrain_.select_pairs(*idx) : pretrain_;
}

double ModelObjective::loss(const Vector& theta, const Indices* forget) const {
  if (!forget) return loss_.value(theta, forget_);
  return loss_.value(theta, forget_subset(forget));
}

Vector ModelObjective::loss_grad(const Vector& theta, const Indices* forget) const {
  if (!forget) return loss_.gradient(theta, forget_);
  return loss_.gradient(theta, forget_subset(forget));
}

double ModelObjective::divergence(const Vector& theta, const Vector& theta_ref,
                                  const Indices* pretrain) const {
  if (!pretrain) return divergence_value(divergence_, spec_, theta, theta_ref, pretrain_);
  return divergence_value(divergence_, spec_, theta, theta_ref, pretrain_subset(pretrain));
}

Vector ModelObjective::divergence_grad(const Vector& theta, const Vector& theta_ref,
                                       const Indices* pretrain) const {
  if (!pretrain) return mtu::divergence_grad(divergence_, spec_, theta, theta_ref, pretrain_);
  return mtu::divergence_grad(divergence_, spec_, theta, theta_ref, pretrain_subset(pretrain));
}

Matrix ModelObjective::curvature(const Vector& theta) const {
  return divergence_.curvature_scale() * assemble_gnh(spec_, theta, pretrain_).hessian;
}

QuadraticObjective::QuadraticObjective(Matrix loss_hessian, Vector loss_linear,
                                       Matrix divergence_hessian)
    : a_(std::move(loss_hessian)), b_(std::move(loss_linear)), div_(std::move(divergence_hessian)) {
  if (a_.rows() != b_.size() || a_.cols() != b_.size() || div_.rows() != b_.size() ||
      div_.cols() != b_.size()) {
    throw DimensionError("QuadraticObjective: inconsistent dimensions");
  }
}

double QuadraticObjective::loss(const Vector& theta, const Indices*) const {
  return 0.5 * theta.dot(a_ * theta) + b_.dot(theta);
}

Vector QuadraticObjective::loss_grad(const Vector& theta, const Indices*) const {
  return a_ * theta + b_;
}

double QuadraticObjective::divergence(const Vector& theta, const Vector& theta_ref,
                                      const Indices*) const {
  const Vector d = theta - theta_ref;
  return 0.5 * d.dot(div_ * d);
}

Vector QuadraticObjective::divergence_grad(const Vector& theta, const Vector& theta_ref,
                                           const Indices*) const {
  return div_ * (theta - theta_ref);
}

// ---------------------------------------------------------------- config

void MtConfig::validate() const {
  if (!(eta > 0.0)) throw ConfigError("eta", "must be positive");
  if (!(kappa >= 0.0)) throw ConfigError("kappa", "must be nonnegative");
  if (!(eta * kappa < 1.0)) throw ConfigError("kappa", "eta * kappa must be < 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha", "must lie in [0, 1]");
  if (!(mu >= 0.0 && mu < 1.0)) throw ConfigError("mu", "must lie in [0, 1)");
  if (steps < 0) throw ConfigError("steps", "must be nonnegative");
  if (clip && !(*clip > 0.0)) throw ConfigError("clip", "must be positive");
  if (batch_forget < 1) throw ConfigError("batch_forget", "must be positive");
  if (batch_pretrain < 1) throw ConfigError("batch_pretrain", "must be positive");
  loss.validate();
  divergence.validate();
}

DerivedNgdParams DerivedNgdParams::from(const MtConfig& cfg) {
  const double ek = cfg.eta * cfg.kappa;
  return {cfg.kappa * cfg.alpha * cfg.eta / (1.0 - ek),
          cfg.lambda() + (1.0 - cfg.mu) * cfg.kappa / (1.0 - ek)};
}

double AdamParams::rate_multiplier(int step) const {
  if (step <= warmup_flat_steps) return warmup_fraction;
  const int ramp = step - warmup_flat_steps;
  if (ramp >= warmup_ramp_steps) return 1.0;
  return warmup_fraction +
         (1.0 - warmup_fraction) * static_cast<double>(ramp) / static_cast<double>(warmup_ramp_steps);
}

// ---------------------------------------------------------------- runs

namespace {

/// Shared bookkeeping for all runs: batch sampling, records, observers.
class RunState {
 public:
  RunState(const ProximalObjective& obj, const MtConfig& cfg, const RunOptions& opts,
           bool full_batch)
      : obj_(obj),
        cfg_(cfg),
        opts_(opts),
        full_batch_(full_batch),
        store_(obj.dim() <= kMaxDenseDim),
        gen_(cfg.seed) {}

  /// Samples this step's items (no-op in full-batch mode).
  void sample() {
    if (full_batch_) return;
    forget_ = draw(obj_.forget_items(), cfg_.batch_forget);
    pretrain_ = draw(obj_.pretrain_items(), cfg_.batch_pretrain);
    traj_.forget_batches.push_back(forget_);
    traj_.pretrain_batches.push_back(pretrain_);
  }

  const Indices* forget() const { return full_batch_ ? nullptr : &forget_; }
  const Indices* pretrain() const { return full_batch_ ? nullptr : &pretrain_; }

  /// alpha grad L(theta) + grad D(theta, ref) + lambda (theta - ref) on the current batch.
  Vector gradient(const Vector& theta, const Vector& ref) const {
    Vector g = obj_.divergence_grad(theta, ref, pretrain()) + cfg_.lambda() * (theta - ref);
    if (cfg_.alpha != 0.0) g += cfg_.alpha * obj_.loss_grad(theta, forget());
    return g;
  }

  /// Appends a record; returns false when the observer asks to stop.
  bool record(int t, const Vector& theta, const Vector& ref, double grad_norm, double clip) {
    if (!theta.allFinite() || !ref.allFinite()) throw NonFiniteError(t);
    StepRecord r;
    r.t = t;
    r.theta_norm = theta.norm();
    r.grad_norm = grad_norm;
    r.clip_scale = clip;
    if (opts_.record_metrics) {
      r.loss = obj_.loss(theta, nullptr);
      r.divergence = obj_.divergence(theta, ref, nullptr);
    }
    if (opts_.anchor) {
      r.deviation = (theta - *opts_.anchor).norm();
    } else if (opts_.reference) {
      const auto& steps = opts_.reference->steps;
      if (static_cast<std::size_t>(t) < steps.size() && steps[t].theta.size() == theta.size()) {
        r.deviation = (theta - steps[t].theta).norm();
      }
    }
    if (store_) {
      r.theta = theta;
      r.theta_ref = ref;
    }
    traj_.steps.push_back(std::move(r));
    return !opts_.observer || opts_.observer(t, theta);
  }

  Trajectory take() { return std::move(traj_); }

 private:
  Indices draw(std::size_t n, int k) {
    if (n == 0) throw PreconditionError("cannot sample a batch from an empty dataset");
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    Indices idx(static_cast<std::size_t>(k));
    for (auto& i : idx) i = pick(gen_);
    return idx;
  }

  const ProximalObjective& obj_;
  const MtConfig& cfg_;
  const RunOptions& opts_;
  bool full_batch_;
  bool store_;
  std::mt19937_64 gen_;
  Indices forget_;
  Indices pretrain_;
  Trajectory traj_;
};

double clip_scale(const MtConfig& cfg, double grad_norm) {
  if (!cfg.clip) return 1.0;
  const double c = *cfg.clip;
  if (cfg.clip_formula == ClipFormula::Algorithm2) return 1.0 / std::max(grad_norm, c);
  return grad_norm > c ? c / grad_norm : 1.0;
}

void check_start(const ProximalObjective& obj, const Vector& theta0) {
  if (static_cast<std::size_t>(theta0.size()) != obj.dim()) {
    throw DimensionError("starting parameters do not match the objective dimension");
  }
}

}  // namespace

Trajectory mt_run(const ProximalObjective& obj, const Vector& theta0, const MtConfig& cfg,
                  bool full_batch, const RunOptions& opts) {
  cfg.validate();
  check_start(obj, theta0);
  RunState st(obj, cfg, opts, full_batch);
  Vector theta = theta0;
  Vector prev = theta0;
  Vector ref = theta0;
  const double ek = cfg.eta * cfg.kappa;
  if (!st.record(0, theta, ref, 0.0, 1.0)) return st.take();
  for (int t = 1; t <= cfg.steps; ++t) {
    st.sample();
    const Vector g = st.gradient(theta, ref);
    Vector next = theta - cfg.eta * g + cfg.mu * (theta - prev);
    prev = std::move(theta);
    theta = std::move(next);
    ref = (1.0 - ek) * ref + ek * theta;
    if (!st.record(t, theta, ref, g.norm(), 1.0)) break;
  }
  return st.take();
}

Trajectory mt_run_batched(const ProximalObjective& obj, const Vector& theta0,
                          const MtConfig& cfg, const RunOptions& opts) {
  cfg.validate();
  check_start(obj, theta0);
  RunState st(obj, cfg, opts, /*full_batch=*/false);
  Vector theta = theta0;
  Vector ref = theta0;
  Vector velocity = Vector::Zero(theta0.size());
  if (!st.record(0, theta, ref, 0.0, 1.0)) return st.take();
  for (int t = 1; t <= cfg.steps; ++t) {
    st.sample();
    const Vector g = st.gradient(theta, ref);
    const double gn = g.norm();
    const double l = clip_scale(cfg, gn);
    velocity = cfg.mu * velocity + l * g;
    theta = theta - cfg.eta * velocity;
    const double rate = l * cfg.eta * cfg.kappa;
    ref = (1.0 - rate) * ref + rate * theta;
    if (!st.record(t, theta, ref, gn, l)) break;
  }
  return st.take();
}

Trajectory ngd_run(const ProximalObjective& obj, const Vector& theta0, const MtConfig& cfg,
                   const RunOptions& opts) {
  cfg.validate();
  check_start(obj, theta0);
  const auto derived = DerivedNgdParams::from(cfg);
  if (!(derived.lambda_bar > 0.0)) {
    throw PreconditionError("ngd_run: effective damping must be positive");
  }
  RunState st(obj, cfg, opts, /*full_batch=*/true);
  Vector theta = theta0;
  Vector prev = theta0;
  if (!st.record(0, theta, theta, 0.0, 1.0)) return st.take();
  for (int t = 1; t <= cfg.steps; ++t) {
    Matrix h = obj.curvature(theta);
    h.diagonal().array() += derived.lambda_bar;
    const Vector g = obj.loss_grad(cfg.ngd_grad_lag ? prev : theta, nullptr);
    const Vector step = linalg::solve_spd(h, g);
    prev = theta;
    theta = theta - derived.gamma * step;
    if (!st.record(t, theta, theta, g.norm(), 1.0)) break;
  }
  return st.take();
}

Trajectory baseline_run(BaselineKind kind, const ProximalObjective& obj, const Vector& theta0,
                        const MtConfig& cfg, const AdamParams& adam, bool full_batch,
                        const RunOptions& opts) {
  cfg.validate();
  check_start(obj, theta0);
  RunState st(obj, cfg, opts, full_batch);
  Vector theta = theta0;
  Vector prev = theta0;
  Vector m = Vector::Zero(theta0.size());
  Vector v = Vector::Zero(theta0.size());
  if (!st.record(0, theta, theta0, 0.0, 1.0)) return st.take();
  for (int t = 1; t <= cfg.steps; ++t) {
    st.sample();
    Vector g = st.gradient(theta, theta0);
    const double gn = g.norm();
    const double l = clip_scale(cfg, gn);
    if (l != 1.0) g *= l;
    if (kind == BaselineKind::MomentumSgd) {
      Vector next = theta - cfg.eta * g + cfg.mu * (theta - prev);
      prev = std::move(theta);
      theta = std::move(next);
    } else {
      const double lr = cfg.eta * adam.rate_multiplier(t);
      m = adam.beta1 * m + (1.0 - adam.beta1) * g;
      v = adam.beta2 * v + (1.0 - adam.beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(adam.beta1, t);
      const double c2 = 1.0 - std::pow(adam.beta2, t);
      const Vector update =
          ((m / c1).array() / ((v / c2).array().sqrt() + adam.epsilon)).matrix();
      theta = theta - lr * (update + adam.weight_decay * theta);
    }
    if (!st.record(t, theta, theta0, gn, l)) break;
  }
  return st.take();
}

double trajectory_deviation(const Trajectory& a, const Trajectory& b) {
  if (a.steps.size() != b.steps.size()) {
    throw DimensionError("trajectory_deviation: lengths " + std::to_string(a.steps.size()) +
                         " and " + std::to_string(b.steps.size()) + " differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const auto& x = a.steps[i].theta;
    const auto& y = b.steps[i].theta;
    if (x.size() == 0 || x.size() != y.size()) {
      throw PreconditionError("trajectory_deviation: trajectories do not store parameters");
    }
    worst = std::max(worst, (x - y).norm());
  }
  return worst;
}

}  // namespace mtu
