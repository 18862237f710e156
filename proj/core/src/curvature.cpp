#include "mtu/curvature.hpp"

#include "mtu/divergence.hpp"
#include "mtu/errors.hpp"
#include "mtu/loss.hpp"
#include "mtu/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mtu {

GnhAssembly assemble_gnh(const ModelSpec& spec, const Vector& theta, const TokenDataset& batch) {
  if (batch.pairs.empty()) throw PreconditionError("assemble_gnh: empty batch");
  check_theta(spec, theta);
  const auto dim = static_cast<std::size_t>(theta.size());
  if (dim > kMaxDenseDim) {
    throw PreconditionError("assemble_gnh: " + std::to_string(dim) +
                            " parameters exceeds the dense limit of " +
                            std::to_string(kMaxDenseDim) + "; use a smaller model");
  }
  Matrix h = Matrix::Zero(theta.size(), theta.size());
  const double w = 1.0 / static_cast<double>(batch.pairs.size());

  if (spec.kind == ModelKind::Bigram) {
    // J is a selection of the active row's block, so J S J^T is S on that block.
    const Eigen::Index v = spec.vocab_size;
    for (const auto& p : batch.pairs) {
      const Token row = truncate_context(spec, p.context).back();
      h.block(row * v, row * v, v, v) += w * softmax_covariance(logits(spec, theta, p.context));
    }
  } else {
    for (const auto& p : batch.pairs) {
      const Matrix jac = logit_jacobian(spec, theta, p.context);
      const Vector prob = softmax(logits(spec, theta, p.context));
      // J S J^T = J diag(p) J^T - (J p)(J p)^T
      const Matrix jd = jac * prob.cwiseSqrt().asDiagonal();
      const Vector jp = jac * prob;
      h.noalias() += w * (jd * jd.transpose());
      h.noalias() -= w * (jp * jp.transpose());
    }
  }
  h = 0.5 * (h + h.transpose()).eval();
  return {std::move(h), theta, batch.pairs.size()};
}

Vector natural_gradient(const ModelSpec& spec, const Vector& theta, const TokenDataset& forget,
                        const TokenDataset& pretrain, const LossFunction& loss, double damping,
                        double curvature_scale, const Vector* theta_grad) {
  if (!(damping > 0.0)) throw PreconditionError("natural_gradient: damping must be positive");
  Matrix h = curvature_scale * assemble_gnh(spec, theta, pretrain).hessian;
  h.diagonal().array() += damping;
  const Vector g = loss.gradient(theta_grad ? *theta_grad : theta, forget);
  return linalg::solve_spd(h, g);
}

double ihvp_rate(const IhvpConfig& cfg) {
  return 1.0 - std::min(1.0 - std::sqrt(cfg.mu), cfg.eta * cfg.lambda / (1.0 - cfg.mu));
}

double ihvp_error_gain(const IhvpConfig& cfg) {
  return std::sqrt(2.0) *
         std::max(cfg.eta / (1.0 - std::sqrt(cfg.mu)), (1.0 - cfg.mu) / cfg.lambda);
}

IhvpResult ihvp_momentum(const Matrix& hessian, const Vector& g, const IhvpConfig& cfg) {
  if (hessian.rows() != hessian.cols() || hessian.rows() != g.size()) {
    throw DimensionError("ihvp_momentum: H and g dimensions disagree");
  }
  if (!(cfg.lambda > 0.0)) throw PreconditionError("ihvp_momentum: lambda must be positive");
  if (!(cfg.mu >= 0.0 && cfg.mu < 1.0)) throw PreconditionError("ihvp_momentum: mu must lie in [0, 1)");
  if (cfg.steps < 0) throw PreconditionError("ihvp_momentum: negative step count");
  const double lmax = linalg::max_eigenvalue(hessian);
  if (!(cfg.eta > 0.0 && cfg.eta < 1.0 / (lmax + cfg.lambda))) {
    throw PreconditionError("ihvp_momentum: step size must satisfy 0 < eta < 1/(lambda_max(H) + lambda)");
  }

  Matrix damped = hessian;
  damped.diagonal().array() += cfg.lambda;
  IhvpResult res;
  res.target = -linalg::solve_spd(damped, g);

  const Eigen::Index n = g.size();
  std::mt19937_64 gen(cfg.error.seed);
  std::normal_distribution<double> normal;
  auto next_error = [&](int t) -> Vector {
    if (cfg.error.mode == ErrorMode::Zero || n == 0) return Vector::Zero(n);
    Vector e(n);
    for (Eigen::Index i = 0; i < n; ++i) e[i] = normal(gen);
    double norm = cfg.error.magnitude;
    if (cfg.error.mode == ErrorMode::Decaying) norm *= std::pow(cfg.error.decay, t);
    return e * (norm / e.norm());
  };

  const double rate = ihvp_rate(cfg);
  const double gain = ihvp_error_gain(cfg);
  Vector u = Vector::Zero(n);
  Vector u_prev = u;
  const double d0 = (u - res.target).norm();
  double max_eps = 0.0;
  res.distance.push_back(d0);
  res.bound.push_back(d0);
  res.max_error_norm.push_back(0.0);
  for (int t = 0; t < cfg.steps; ++t) {
    const Vector eps = next_error(t);
    max_eps = std::max(max_eps, eps.norm());
    Vector next = u - cfg.eta * (g + damped * u + eps) + cfg.mu * (u - u_prev);
    u_prev = std::move(u);
    u = std::move(next);
    res.distance.push_back((u - res.target).norm());
    res.bound.push_back(std::pow(rate, t + 1) * d0 + gain * max_eps);
    res.max_error_norm.push_back(max_eps);
  }
  res.u = std::move(u);
  return res;
}

double RegularityEstimate::constant() const {
  return std::max({1.0, hessian_norm, natural_gradient_lipschitz, quadratic_remainder,
                   natural_gradient_norm});
}

RegularityEstimate estimate_regularity_constant(const ModelSpec& spec,
                                                const std::vector<Vector>& samples,
                                                const std::vector<double>& dampings,
                                                const TokenDataset& forget,
                                                const TokenDataset& pretrain,
                                                const LossFunction& loss,
                                                const DivergenceKind& divergence) {
  if (samples.empty()) throw PreconditionError("estimate_regularity_constant: no samples");
  if (dampings.empty()) throw PreconditionError("estimate_regularity_constant: no dampings");
  const double c = divergence.curvature_scale();
  RegularityEstimate est;

  std::vector<Matrix> curv;
  std::vector<Vector> grads;
  for (const auto& s : samples) {
    curv.push_back(c * assemble_gnh(spec, s, pretrain).hessian);
    grads.push_back(loss.gradient(s, forget));
  }
  auto damped = [](const Matrix& h, double l) {
    Matrix m = h;
    m.diagonal().array() += l;
    return m;
  };

  for (double l : dampings) {
    std::vector<Vector> natgrad;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Matrix hl = damped(curv[i], l);
      est.hessian_norm = std::max(est.hessian_norm, linalg::symmetric_norm(hl));
      natgrad.push_back(linalg::solve_spd(hl, grads[i]));
      est.natural_gradient_norm = std::max(est.natural_gradient_norm, natgrad.back().norm());
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
      for (std::size_t j = 0; j < samples.size(); ++j) {
        if (i == j) continue;
        const double dist = (samples[i] - samples[j]).norm();
        if (dist == 0.0) continue;
        const Vector other = linalg::solve_spd(damped(curv[j], l), grads[i]);
        est.natural_gradient_lipschitz =
            std::max(est.natural_gradient_lipschitz, (natgrad[i] - other).norm() / dist);
      }
    }
  }
  DivergenceKind undamped = divergence;
  undamped.lambda = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < samples.size(); ++j) {
      if (i == j) continue;
      const Vector diff = samples[i] - samples[j];
      const double dist2 = diff.squaredNorm();
      if (dist2 == 0.0) continue;
      const Vector grad = divergence_grad(undamped, spec, samples[i], samples[j], pretrain);
      est.quadratic_remainder =
          std::max(est.quadratic_remainder, (grad - curv[i] * diff).norm() / dist2);
    }
  }
  return est;
}

}  // namespace mtu
