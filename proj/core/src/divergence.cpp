#include "mtu/divergence.hpp"

#include "mtu/curvature.hpp"
#include "mtu/errors.hpp"
#include "mtu/loss.hpp"
#include "mtu/softmax.hpp"

#include <cmath>

namespace mtu {

namespace {

void require_batch(const TokenDataset& batch, const char* op) {
  if (batch.pairs.empty()) throw PreconditionError(std::string(op) + ": empty batch");
}

double mean_nll(const ModelSpec& spec, const Vector& theta, const TokenDataset& batch) {
  double total = 0.0;
  for (const auto& p : batch.pairs) total += nll_value(logits(spec, theta, p.context), p.next);
  return total / static_cast<double>(batch.pairs.size());
}

}  // namespace

std::string to_string(DivergenceTag tag) {
  switch (tag) {
    case DivergenceTag::Kl: return "kl";
    case DivergenceTag::Qkl: return "qkl";
    case DivergenceTag::Bregman: return "bregman";
  }
  return "?";
}

DivergenceTag parse_divergence_tag(const std::string& name) {
  if (name == "kl") return DivergenceTag::Kl;
  if (name == "qkl") return DivergenceTag::Qkl;
  if (name == "bregman") return DivergenceTag::Bregman;
  throw ConfigError("divergence", "unknown divergence '" + name + "'");
}

void DivergenceKind::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("lambda", "must be a finite nonnegative number");
  }
}

void DivergenceKind::validate_for(const ModelSpec& spec) const {
  validate();
  if (tag == DivergenceTag::Bregman && spec.kind != ModelKind::Bigram) {
    throw ConfigError("divergence",
                      "bregman divergence requires a convex loss; only the bigram model qualifies");
  }
}

double kl_div(const ModelSpec& spec, const Vector& theta, const Vector& theta_ref,
              const TokenDataset& batch) {
  require_batch(batch, "kl_div");
  double total = 0.0;
  for (const auto& p : batch.pairs) {
    total += it_value(logits(spec, theta, p.context), logits(spec, theta_ref, p.context));
  }
  return total / static_cast<double>(batch.pairs.size());
}

Vector kl_grad(const ModelSpec& spec, const Vector& theta, const Vector& theta_ref,
               const TokenDataset& batch) {
  require_batch(batch, "kl_div");
  Vector g = Vector::Zero(theta.size());
  const double w = 1.0 / static_cast<double>(batch.pairs.size());
  for (const auto& p : batch.pairs) {
    const Vector h = logits(spec, theta, p.context);
    const Vector diff = h - logits(spec, theta_ref, p.context);
    accumulate_backprop(spec, theta, p.context, softmax_covariance_times(softmax(h), diff), w, g);
  }
  return g;
}

double qkl_div(const ModelSpec& spec, const Vector& theta, const Vector& theta_ref,
               const TokenDataset& batch) {
  require_batch(batch, "qkl_div");
  double total = 0.0;
  for (const auto& p : batch.pairs) {
    const Vector h = logits(spec, theta, p.context);
    const Vector d = h - logits(spec, theta_ref, p.context);
    const Vector prob = softmax(h);
    const double m = prob.dot(d);
    // d^T (Diag(p) - p p^T) d = sum p_i d_i^2 - (p.d)^2, evaluated as a variance.
    total += (prob.array() * (d.array() - m).square()).sum();
  }
  return total / static_cast<double>(batch.pairs.size());
}

Vector qkl_grad(const ModelSpec& spec, const Vector& theta, const Vector& theta_ref,
                const TokenDataset& batch) {
  require_batch(batch, "qkl_div");
  Vector g = Vector::Zero(theta.size());
  const double w = 1.0 / static_cast<double>(batch.pairs.size());
  for (const auto& p : batch.pairs) {
    const Vector h = logits(spec, theta, p.context);
    const Vector d = h - logits(spec, theta_ref, p.context);
    const Vector prob = softmax(h);
    // d/dh [d^T S_h d] = 2 S d + S (d*d) - 2 (p.d) S d
    const Vector sd = softmax_covariance_times(prob, d);
    const Vector sdd = softmax_covariance_times(prob, d.cwiseProduct(d));
    const Vector gh = 2.0 * sd + sdd - 2.0 * prob.dot(d) * sd;
    accumulate_backprop(spec, theta, p.context, gh, w, g);
  }
  return g;
}

double bregman_div(const std::function<double(const Vector&)>& loss,
                   const std::function<Vector(const Vector&)>& loss_grad,
                   const Vector& theta, const Vector& theta_ref) {
  if (theta.size() != theta_ref.size()) throw DimensionError("bregman_div: size mismatch");
  return loss(theta) - loss(theta_ref) - (theta - theta_ref).dot(loss_grad(theta_ref));
}

double divergence_value(const DivergenceKind& kind, const ModelSpec& spec,
                        const Vector& theta, const Vector& theta_ref,
                        const TokenDataset& batch) {
  kind.validate_for(spec);
  switch (kind.tag) {
    case DivergenceTag::Kl: return kl_div(spec, theta, theta_ref, batch);
    case DivergenceTag::Qkl: return qkl_div(spec, theta, theta_ref, batch);
    case DivergenceTag::Bregman: {
      require_batch(batch, "bregman_div");
      return bregman_div([&](const Vector& t) { return mean_nll(spec, t, batch); },
                         [&](const Vector& t) {
                           return grad_loss(spec, t, batch, [](const Vector& h, Token y) {
                             return nll_grad(h, y);
                           });
                         },
                         theta, theta_ref);
    }
  }
  return 0.0;
}

Vector divergence_grad(const DivergenceKind& kind, const ModelSpec& spec,
                       const Vector& theta, const Vector& theta_ref,
                       const TokenDataset& batch) {
  kind.validate_for(spec);
  switch (kind.tag) {
    case DivergenceTag::Kl: return kl_grad(spec, theta, theta_ref, batch);
    case DivergenceTag::Qkl: return qkl_grad(spec, theta, theta_ref, batch);
    case DivergenceTag::Bregman: {
      require_batch(batch, "bregman_div");
      auto nll = [](const Vector& h, Token y) { return nll_grad(h, y); };
      return grad_loss(spec, theta, batch, nll) - grad_loss(spec, theta_ref, batch, nll);
    }
  }
  return {};
}

double damped_value(const DivergenceKind& kind, const ModelSpec& spec, const Vector& theta,
                    const Vector& theta_ref, const TokenDataset& batch) {
  return divergence_value(kind, spec, theta, theta_ref, batch) +
         0.5 * kind.lambda * (theta - theta_ref).squaredNorm();
}

Vector damped_grad(const DivergenceKind& kind, const ModelSpec& spec, const Vector& theta,
                   const Vector& theta_ref, const TokenDataset& batch) {
  return divergence_grad(kind, spec, theta, theta_ref, batch) +
         kind.lambda * (theta - theta_ref);
}

double local_quadratic_residual(const DivergenceKind& kind, const ModelSpec& spec,
                                const Vector& theta_ref, const Vector& direction,
                                double t, const TokenDataset& batch) {
  if (t < 0.0) throw PreconditionError("local_quadratic_residual: t must be nonnegative");
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw PreconditionError("local_quadratic_residual: direction must have unit norm");
  }
  if (t == 0.0) return 0.0;
  const Matrix h = assemble_gnh(spec, theta_ref, batch).hessian;
  const double quad = kind.curvature_scale() * direction.dot(h * direction) + kind.lambda;
  const Vector theta = theta_ref + t * direction;
  return std::abs(damped_value(kind, spec, theta, theta_ref, batch) - 0.5 * t * t * quad);
}

}  // namespace mtu
