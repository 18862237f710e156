#pragma once

#include "mtu/dataset.hpp"
#include "mtu/linalg.hpp"
#include "mtu/model.hpp"

#include <functional>
#include <string>

namespace mtu {

enum class DivergenceTag { Kl, Qkl, Bregman };

std::string to_string(DivergenceTag tag);
DivergenceTag parse_divergence_tag(const std::string& name);

/// Proximity term D(theta, theta'), optionally damped by (lambda/2)|theta - theta'|^2.
///
/// Bregman wraps the pair-mean NLL over the divergence batch and is only
/// accepted for the bigram model, where that loss is convex in theta.
struct DivergenceKind {
  DivergenceTag tag = DivergenceTag::Kl;
  double lambda = 0.0;

  void validate() const;
  void validate_for(const ModelSpec& spec) const;

  /// Second-order coefficient relative to the GNH: D ~ (c/2) d^T H d.
  /// KL and Bregman-of-NLL give c = 1; QKL as printed (no 1/2) gives c = 2.
  double curvature_scale() const noexcept { return tag == DivergenceTag::Qkl ? 2.0 : 1.0; }
};

/// Batch mean of KL(sf(h(x;theta)) || sf(h(x;theta_ref))).
double kl_div(const ModelSpec& spec, const Vector& theta, const Vector& theta_ref,
              const TokenDataset& batch);
Vector kl_grad(const ModelSpec& spec, const Vector& theta, const Vector& theta_ref,
               const TokenDataset& batch);

/// Batch mean of (h - h')^T S_h (h - h'), with S evaluated at the current model.
double qkl_div(const ModelSpec& spec, const Vector& theta, const Vector& theta_ref,
               const TokenDataset& batch);
/// Exact gradient, differentiating through S_h as well.
Vector qkl_grad(const ModelSpec& spec, const Vector& theta, const Vector& theta_ref,
                const TokenDataset& batch);

/// L(theta) - L(theta') - (theta - theta')^T grad L(theta').
double bregman_div(const std::function<double(const Vector&)>& loss,
                   const std::function<Vector(const Vector&)>& loss_grad,
                   const Vector& theta, const Vector& theta_ref);

/// Undamped D(theta, theta') for the kind.
double divergence_value(const DivergenceKind& kind, const ModelSpec& spec,
                        const Vector& theta, const Vector& theta_ref,
                        const TokenDataset& batch);
/// Undamped grad_theta D(theta, theta').
Vector divergence_grad(const DivergenceKind& kind, const ModelSpec& spec,
                       const Vector& theta, const Vector& theta_ref,
                       const TokenDataset& batch);

/// D_lambda(theta, theta') = D + (lambda/2)|theta - theta'|^2.
double damped_value(const DivergenceKind& kind, const ModelSpec& spec,
                    const Vector& theta, const Vector& theta_ref,
                    const TokenDataset& batch);
/// grad_theta D(theta, theta') + lambda (theta - theta').
Vector damped_grad(const DivergenceKind& kind, const ModelSpec& spec,
                   const Vector& theta, const Vector& theta_ref,
                   const TokenDataset& batch);

/// |D_lambda(theta' + t d, theta') - (t^2/2) d^T (c H(theta') + lambda I) d|,
/// with H the GNH of `batch` frozen at theta' and c the kind's curvature scale.
double local_quadratic_residual(const DivergenceKind& kind, const ModelSpec& spec,
                                const Vector& theta_ref, const Vector& direction,
                                double t, const TokenDataset& batch);

}  // namespace mtu
