#pragma once

#include "mtu/dataset.hpp"
#include "mtu/linalg.hpp"
#include "mtu/model.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mtu {

class LossFunction;
struct DivergenceKind;

/// Largest parameter count for which dense curvature matrices are assembled.
inline constexpr std::size_t kMaxDenseDim = 4096;

/// Gauss-Newton Hessian (1/|B|) sum_x J S_h J^T evaluated at `theta_at`.
struct GnhAssembly {
  Matrix hessian;
  Vector theta_at;
  std::size_t batch_size = 0;
};

GnhAssembly assemble_gnh(const ModelSpec& spec, const Vector& theta, const TokenDataset& batch);

/// (c H(theta) + damping I)^{-1} grad L(theta_grad), with H assembled on
/// `pretrain` and the loss gradient on `forget`. `theta_grad` defaults to theta.
Vector natural_gradient(const ModelSpec& spec, const Vector& theta,
                        const TokenDataset& forget, const TokenDataset& pretrain,
                        const LossFunction& loss, double damping,
                        double curvature_scale = 1.0, const Vector* theta_grad = nullptr);

/// Perturbations injected into the momentum IHVP recursion.
enum class ErrorMode { Zero, ConstantNorm, Decaying };

struct ErrorInjection {
  ErrorMode mode = ErrorMode::Zero;
  double magnitude = 0.0;       // norm of eps_t (initial norm for Decaying)
  double decay = 0.99;          // per-step factor for Decaying
  std::uint64_t seed = 0;       // directions are drawn uniformly on the sphere
};

struct IhvpConfig {
  double eta = 0.1;
  double mu = 0.0;
  double lambda = 1.0;
  int steps = 100;
  ErrorInjection error{};
};

/// Iterates and bound for the momentum IHVP recursion.
///
/// `distance[t]` is |u_t - u*| and `bound[t]` the closed-form bound
/// R^t |u_0 - u*| + sqrt(2) max{eta/(1-sqrt(mu)), (1-mu)/lambda} max_{j<=t}|eps_j|
/// with R = 1 - min{1 - sqrt(mu), eta*lambda/(1-mu)}; index 0 is the start.
struct IhvpResult {
  Vector u;
  Vector target;
  std::vector<double> distance;
  std::vector<double> bound;
  std::vector<double> max_error_norm;
};

/// u_{t+1} = u_t - eta (g + (H + lambda) u_t + eps_t) + mu (u_t - u_{t-1}),
/// u_0 = u_{-1} = 0. Throws PreconditionError unless
/// eta < 1/(lambda_max(H) + lambda), 0 <= mu < 1 and lambda > 0.
IhvpResult ihvp_momentum(const Matrix& hessian, const Vector& g, const IhvpConfig& cfg);

/// Contraction rate R of the lemma bound.
double ihvp_rate(const IhvpConfig& cfg);
/// Multiplier of max |eps_j| in the lemma bound.
double ihvp_error_gain(const IhvpConfig& cfg);

/// Sample maxima of the four regularity quantities, for each damping.
///
///  - |H_l(theta)|                                          (operator norm)
///  - |N_l(theta) - H_l(theta')^{-1} grad L(theta)| / |theta - theta'|
///  - |grad D(theta, theta') - H(theta)(theta - theta')| / |theta - theta'|^2
///  - |N_l(theta)|
/// Pairwise ratios range over ordered distinct sample pairs.
struct RegularityEstimate {
  double hessian_norm = 0.0;
  double natural_gradient_lipschitz = 0.0;
  double quadratic_remainder = 0.0;
  double natural_gradient_norm = 0.0;

  double constant() const;
};

RegularityEstimate estimate_regularity_constant(const ModelSpec& spec,
                                                const std::vector<Vector>& samples,
                                                const std::vector<double>& dampings,
                                                const TokenDataset& forget,
                                                const TokenDataset& pretrain,
                                                const LossFunction& loss,
                                                const DivergenceKind& divergence);

}  // namespace mtu
