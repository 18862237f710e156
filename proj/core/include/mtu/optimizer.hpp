#pragma once

#include "mtu/dataset.hpp"
#include "mtu/divergence.hpp"
#include "mtu/linalg.hpp"
#include "mtu/loss.hpp"
#include "mtu/model.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mtu {

// ---------------------------------------------------------------- objective

/// Indices into the forget / pretrain items; nullptr selects everything.
using Indices = std::vector<std::size_t>;

/// alpha L(theta) + D(theta, theta') split into its two parts.
///
/// Divergence methods are undamped: the optimizers add lambda (theta - theta')
/// themselves. `curvature` is the second-order matrix of D at coincidence,
/// assembled on all pretrain items.
class ProximalObjective {
 public:
  virtual ~ProximalObjective() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t forget_items() const = 0;
  virtual std::size_t pretrain_items() const = 0;

  virtual double loss(const Vector& theta, const Indices* forget) const = 0;
  virtual Vector loss_grad(const Vector& theta, const Indices* forget) const = 0;
  virtual double divergence(const Vector& theta, const Vector& theta_ref,
                            const Indices* pretrain) const = 0;
  virtual Vector divergence_grad(const Vector& theta, const Vector& theta_ref,
                                 const Indices* pretrain) const = 0;
  virtual Matrix curvature(const Vector& theta) const = 0;
};

/// Objective over a logit model: unlearning loss on the forget set and a
/// proximity term on the pretrain set.
class ModelObjective final : public ProximalObjective {
 public:
  ModelObjective(ModelSpec spec, TokenDataset forget, TokenDataset pretrain,
                 LossFunction loss, DivergenceKind divergence);

  std::size_t dim() const override { return spec_.param_count(); }
  std::size_t forget_items() const override { return loss_.item_count(forget_); }
  std::size_t pretrain_items() const override { return pretrain_.pairs.size(); }

  double loss(const Vector& theta, const Indices* forget) const override;
  Vector loss_grad(const Vector& theta, const Indices* forget) const override;
  double divergence(const Vector& theta, const Vector& theta_ref,
                    const Indices* pretrain) const override;
  Vector divergence_grad(const Vector& theta, const Vector& theta_ref,
                         const Indices* pretrain) const override;
  Matrix curvature(const Vector& theta) const override;

  const ModelSpec& spec() const noexcept { return spec_; }
  const TokenDataset& forget_set() const noexcept { return forget_; }
  const TokenDataset& pretrain_set() const noexcept { return pretrain_; }
  const LossFunction& loss_function() const noexcept { return loss_; }

 private:
  TokenDataset forget_subset(const Indices* idx) const;
  TokenDataset pretrain_subset(const Indices* idx) const;

  ModelSpec spec_;
  TokenDataset forget_;
  TokenDataset pretrain_;
  LossFunction loss_;
  DivergenceKind divergence_;
};

/// L(theta) = 1/2 theta^T A theta + b^T theta, D = 1/2 (theta - theta')^T B (theta - theta').
/// Items are ignored; used for hand-checkable runs.
class QuadraticObjective final : public ProximalObjective {
 public:
  QuadraticObjective(Matrix loss_hessian, Vector loss_linear, Matrix divergence_hessian);

  std::size_t dim() const override { return static_cast<std::size_t>(b_.size()); }
  std::size_t forget_items() const override { return 1; }
  std::size_t pretrain_items() const override { return 1; }

  double loss(const Vector& theta, const Indices*) const override;
  Vector loss_grad(const Vector& theta, const Indices*) const override;
  double divergence(const Vector& theta, const Vector& theta_ref, const Indices*) const override;
  Vector divergence_grad(const Vector& theta, const Vector& theta_ref,
                         const Indices*) const override;
  Matrix curvature(const Vector&) const override { return div_; }

 private:
  Matrix a_;
  Vector b_;
  Matrix div_;
};

// ---------------------------------------------------------------- config

enum class ClipFormula {
  MainText,    // l = min(1, c / |g|)
  Algorithm2,  // l = 1 / max(|g|, c)
};

struct MtConfig {
  double eta = 0.01;
  double kappa = 1.0;
  double alpha = 0.1;
  double mu = 0.0;
  int steps = 100;
  std::optional<double> clip;
  ClipFormula clip_formula = ClipFormula::MainText;
  int batch_forget = 8;
  int batch_pretrain = 8;
  LossKind loss{};
  DivergenceKind divergence{};  // divergence.lambda is the damping
  std::uint64_t seed = 0;
  bool ngd_grad_lag = false;

  double lambda() const noexcept { return divergence.lambda; }

  /// eta*kappa in (0,1), alpha in [0,1], mu in [0,1), positive batch sizes.
  void validate() const;
};

/// Step size and damping of the natural-gradient trajectory the mean
/// teacher tracks: gamma = kappa alpha eta / (1 - kappa eta),
/// lambda_bar = lambda + (1 - mu) kappa / (1 - eta kappa).
struct DerivedNgdParams {
  double gamma = 0.0;
  double lambda_bar = 0.0;

  static DerivedNgdParams from(const MtConfig& cfg);
};

// ---------------------------------------------------------------- trajectory

struct StepRecord {
  int t = 0;
  Vector theta;       // empty when the run exceeds kMaxDenseDim
  Vector theta_ref;
  double theta_norm = 0.0;
  double grad_norm = 0.0;   // |g| of the update that produced theta_t
  double loss = 0.0;        // L(theta_t) on all forget items
  double divergence = 0.0;  // D(theta_t, theta'_t) on all pretrain items (undamped)
  double clip_scale = 1.0;
  std::optional<double> deviation;  // |theta_t - reference_t| when attached
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::vector<Indices> forget_batches;
  std::vector<Indices> pretrain_batches;

  bool stores_params() const { return !steps.empty() && steps.front().theta.size() > 0; }
  const Vector& final_theta() const { return steps.back().theta; }
};

/// Called after each step with (t, theta_t); returning false stops the run.
using StepObserver = std::function<bool(int, const Vector&)>;

struct RunOptions {
  StepObserver observer;
  const Trajectory* reference = nullptr;  // fills StepRecord::deviation
  const Vector* anchor = nullptr;         // fills deviation with |theta_t - anchor| instead
  bool record_metrics = true;             // evaluate loss/divergence each step
};

/// Mean teacher (heavy-ball momentum form):
///   theta_t  = theta_{t-1} - eta grad{alpha L + D_lambda(., theta'_{t-1})} + mu (theta_{t-1} - theta_{t-2})
///   theta'_t = (1 - eta kappa) theta'_{t-1} + eta kappa theta_t
/// with theta'_0 = theta_0 = theta_{-1}. When `full_batch` is false each step
/// samples batch_forget / batch_pretrain items with replacement.
Trajectory mt_run(const ProximalObjective& obj, const Vector& theta0, const MtConfig& cfg,
                  bool full_batch, const RunOptions& opts = {});

/// Batched mean teacher with norm clipping and a momentum buffer:
///   v <- mu v + l g;  theta <- theta - eta v;  theta' <- (1 - l eta kappa) theta' + l eta kappa theta
Trajectory mt_run_batched(const ProximalObjective& obj, const Vector& theta0,
                          const MtConfig& cfg, const RunOptions& opts = {});

/// theta_{t+1} = theta_t - gamma H_{lambda_bar}(theta_t)^{-1} grad L(theta_s), full batch,
/// with s = t (default) or s = t-1 when cfg.ngd_grad_lag is set (theta_{-1} = theta_0).
Trajectory ngd_run(const ProximalObjective& obj, const Vector& theta0, const MtConfig& cfg,
                   const RunOptions& opts = {});

enum class BaselineKind { MomentumSgd, AdamW };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  int warmup_flat_steps = 100;   // steps at warmup_fraction of the rate
  int warmup_ramp_steps = 100;   // then linear up to the full rate
  double warmup_fraction = 0.1;

  double rate_multiplier(int step) const;  // step counts from 1
};

/// Minimises alpha L(theta) + D_lambda(theta, theta_0) against the fixed start.
Trajectory baseline_run(BaselineKind kind, const ProximalObjective& obj, const Vector& theta0,
                        const MtConfig& cfg, const AdamParams& adam, bool full_batch,
                        const RunOptions& opts = {});

/// max_t |a_t - b_t|; throws on length mismatch or missing parameters.
double trajectory_deviation(const Trajectory& a, const Trajectory& b);

/// CSV columns t,grad_norm,loss,divergence,clip_scale[,deviation]; doubles in
/// shortest round-trip form.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double x);

}  // namespace mtu
