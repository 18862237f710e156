#pragma once

#include "mtu/dataset.hpp"
#include "mtu/linalg.hpp"
#include "mtu/model.hpp"

#include <memory>
#include <optional>
#include <string>

namespace mtu {

enum class LossTag { Nll, Ll, Npo, It, Nlul };

std::string to_string(LossTag tag);
LossTag parse_loss_tag(const std::string& name);

/// Logit source for the incompetent-teacher loss. The uniform source emits
/// the all-zero logit vector.
struct TeacherLogits {
  enum class Source { Uniform, FixedModel };

  Source source = Source::Uniform;
  ModelSpec spec{};
  Vector theta;

  static TeacherLogits uniform() { return {}; }
  static TeacherLogits fixed_model(ModelSpec spec, Vector theta);

  Vector logits(const Sequence& context, int vocab_size) const;
};

struct LossKind {
  LossTag tag = LossTag::Nlul;
  double beta = 0.1;  // NPO only
  std::optional<TeacherLogits> teacher;  // IT only; defaults to uniform
  double clamp_eps = 1e-12;

  static LossKind nll() { return with_tag(LossTag::Nll); }
  static LossKind ll() { return with_tag(LossTag::Ll); }
  static LossKind nlul(double eps = 1e-12) {
    LossKind k = with_tag(LossTag::Nlul);
    k.clamp_eps = eps;
    return k;
  }
  static LossKind npo(double beta) {
    LossKind k = with_tag(LossTag::Npo);
    k.beta = beta;
    return k;
  }
  static LossKind it(TeacherLogits teacher) {
    LossKind k = with_tag(LossTag::It);
    k.teacher = std::move(teacher);
    return k;
  }
  static LossKind with_tag(LossTag t) {
    LossKind k;
    k.tag = t;
    return k;
  }

  void validate() const;
  /// True if the loss is defined per sequence rather than per token pair.
  bool sequence_level() const noexcept { return tag == LossTag::Npo; }
};

// Per-token values and logit gradients -----------------------------------

double nll_value(const Vector& h, Token y);
Vector nll_grad(const Vector& h, Token y);

/// log sf(h)_y.
double ll_value(const Vector& h, Token y);
Vector ll_grad(const Vector& h, Token y);

/// -log(1 - p_y) with p_y clamped to at most 1 - eps; 1 - p_y is evaluated
/// from the complementary log-mass so saturated logits stay finite.
double nlul_value(const Vector& h, Token y, double clamp_eps = 1e-12);
Vector nlul_grad(const Vector& h, Token y, double clamp_eps = 1e-12);
/// p_y / (1 - p_y) with the same clamp.
double nlul_weight(const Vector& h, Token y, double clamp_eps = 1e-12);

/// KL(sf(h) || sf(teacher_h)).
double it_value(const Vector& h, const Vector& teacher_h);
Vector it_grad(const Vector& h, const Vector& teacher_h);

double entropy(const Vector& h);

// Sequence-level NPO ------------------------------------------------------

/// -(2/beta) log sigmoid(-beta (log pi_theta(s) - log pi_base(s))).
double npo_value(const ModelSpec& spec, const Vector& theta, const Vector& base,
                 const Sequence& s, double beta);
/// Exact theta-gradient of npo_value.
Vector npo_grad(const ModelSpec& spec, const Vector& theta, const Vector& base,
                const Sequence& s, double beta);
/// pi_theta(s)^beta / (pi_theta(s)^beta + pi_base(s)^beta).
double npo_weight(const ModelSpec& spec, const Vector& theta, const Vector& base,
                  const Sequence& s, double beta);

// Batch objective ----------------------------------------------------------

/// A loss kind bound to a model (and, for NPO, to its frozen base parameters).
///
/// Token-level losses average over the batch's (context, next) pairs. NPO
/// averages per-sequence values divided by the number of transitions.
class LossFunction {
 public:
  LossFunction(LossKind kind, ModelSpec spec, Vector npo_base = {});

  const LossKind& kind() const noexcept { return kind_; }
  const ModelSpec& spec() const noexcept { return spec_; }

  double value(const Vector& theta, const TokenDataset& batch) const;
  Vector gradient(const Vector& theta, const TokenDataset& batch) const;

  /// Number of independent items in a batch (sequences for NPO, pairs otherwise).
  std::size_t item_count(const TokenDataset& batch) const;

  double token_value(const Vector& h, const Sequence& context, Token y) const;
  Vector token_grad(const Vector& h, const Sequence& context, Token y) const;

 private:
  LossKind kind_;
  ModelSpec spec_;
  Vector base_;
};

/// Mean loss over a batch; throws PreconditionError on an empty batch.
double batch_loss(const LossKind& kind, const ModelSpec& spec, const Vector& theta,
                  const TokenDataset& batch, const Vector& npo_base = {});

}  // namespace mtu
