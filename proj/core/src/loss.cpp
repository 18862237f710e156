#include "mtu/loss.hpp"

#include "mtu/errors.hpp"
#include "mtu/softmax.hpp"

#include <cmath>

namespace mtu {

namespace {

void check_label(const Vector& h, Token y) {
  if (y < 0 || y >= h.size()) {
    throw DimensionError("label " + std::to_string(y) + " outside logit vector of size " +
                         std::to_string(h.size()));
  }
}

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log p_y and log(1 - p_y), the latter from the complementary mass.
std::pair<double, double> log_masses(const Vector& h, Token y) {
  const double lse = logsumexp(h);
  return {h[y] - lse, logsumexp_except(h, y) - lse};
}

}  // namespace

std::string to_string(LossTag tag) {
  switch (tag) {
    case LossTag::Nll: return "nll";
    case LossTag::Ll: return "ll";
    case LossTag::Npo: return "npo";
    case LossTag::It: return "it";
    case LossTag::Nlul: return "nlul";
  }
  return "?";
}

LossTag parse_loss_tag(const std::string& name) {
  if (name == "nll") return LossTag::Nll;
  if (name == "ll") return LossTag::Ll;
  if (name == "npo") return LossTag::Npo;
  if (name == "it") return LossTag::It;
  if (name == "nlul") return LossTag::Nlul;
  throw ConfigError("loss", "unknown loss '" + name + "'");
}

TeacherLogits TeacherLogits::fixed_model(ModelSpec spec, Vector theta) {
  spec.validate();
  check_theta(spec, theta);
  return {Source::FixedModel, spec, std::move(theta)};
}

Vector TeacherLogits::logits(const Sequence& context, int vocab_size) const {
  if (source == Source::Uniform) return Vector::Zero(vocab_size);
  if (spec.vocab_size != vocab_size) {
    throw DimensionError("teacher vocabulary does not match the student");
  }
  return mtu::logits(spec, theta, context);
}

void LossKind::validate() const {
  if (tag == LossTag::Npo && !(beta > 0.0)) throw ConfigError("beta", "must be positive");
  if (!(clamp_eps > 0.0 && clamp_eps < 1e-3)) {
    throw ConfigError("clamp_eps", "must lie in (0, 1e-3)");
  }
}

// ---------------------------------------------------------------- per token

double ll_value(const Vector& h, Token y) {
  check_label(h, y);
  return log_softmax_at(h, y);
}

double nll_value(const Vector& h, Token y) { return -ll_value(h, y); }

Vector ll_grad(const Vector& h, Token y) {
  check_label(h, y);
  Vector g = -softmax(h);
  g[y] += 1.0;
  return g;
}

Vector nll_grad(const Vector& h, Token y) { return -ll_grad(h, y); }

double nlul_value(const Vector& h, Token y, double clamp_eps) {
  check_label(h, y);
  const auto [log_p, log_rest] = log_masses(h, y);
  (void)log_p;
  // 1 - p_y >= eps  <=>  log(1 - p_y) >= log(eps)
  return -std::max(log_rest, std::log(clamp_eps));
}

double nlul_weight(const Vector& h, Token y, double clamp_eps) {
  check_label(h, y);
  const auto [log_p, log_rest] = log_masses(h, y);
  const double lo = std::log(clamp_eps);
  if (log_rest < lo) return (1.0 - clamp_eps) / clamp_eps;
  return std::exp(log_p - log_rest);
}

Vector nlul_grad(const Vector& h, Token y, double clamp_eps) {
  check_label(h, y);
  // d/dh_y = p_y, d/dh_j = -p_y * q_j for j != y, where q is the softmax
  // restricted to the non-y logits (q_j = p_j / (1 - p_y)).
  const auto [log_p, log_rest] = log_masses(h, y);
  const double p_y = std::min(std::exp(log_p), 1.0 - clamp_eps);
  const double lse_rest = logsumexp_except(h, y);
  Vector g(h.size());
  for (Eigen::Index j = 0; j < h.size(); ++j) {
    g[j] = j == y ? p_y : -p_y * std::exp(h[j] - lse_rest);
  }
  (void)log_rest;
  return g;
}

double it_value(const Vector& h, const Vector& teacher_h) {
  if (h.size() != teacher_h.size()) throw DimensionError("it_value: logit sizes differ");
  const Vector p = softmax(h);
  const double kl = p.dot(h - teacher_h) - logsumexp(h) + logsumexp(teacher_h);
  return std::max(kl, 0.0);
}

Vector it_grad(const Vector& h, const Vector& teacher_h) {
  if (h.size() != teacher_h.size()) throw DimensionError("it_grad: logit sizes differ");
  return softmax_covariance_times(softmax(h), h - teacher_h);
}

double entropy(const Vector& h) {
  const Vector p = softmax(h);
  const double lse = logsumexp(h);
  double s = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    if (p[i] > 0.0) s -= p[i] * (h[i] - lse);
  }
  return s;
}

// ---------------------------------------------------------------- NPO

double npo_value(const ModelSpec& spec, const Vector& theta, const Vector& base,
                 const Sequence& s, double beta) {
  const double r = sequence_logprob(spec, theta, s) - sequence_logprob(spec, base, s);
  return -(2.0 / beta) * log_sigmoid(-beta * r);
}

Vector npo_grad(const ModelSpec& spec, const Vector& theta, const Vector& base,
                const Sequence& s, double beta) {
  // d/dr of -(2/beta) log sigmoid(-beta r) = 2 sigmoid(beta r).
  const double r = sequence_logprob(spec, theta, s) - sequence_logprob(spec, base, s);
  return 2.0 * sigmoid(beta * r) * sequence_logprob_grad(spec, theta, s);
}

double npo_weight(const ModelSpec& spec, const Vector& theta, const Vector& base,
                  const Sequence& s, double beta) {
  const double a = beta * sequence_logprob(spec, theta, s);
  const double b = beta * sequence_logprob(spec, base, s);
  const double m = std::max(a, b);
  return std::exp(a - m) / (std::exp(a - m) + std::exp(b - m));
}

// ---------------------------------------------------------------- batch

LossFunction::LossFunction(LossKind kind, ModelSpec spec, Vector npo_base)
    : kind_(std::move(kind)), spec_(spec), base_(std::move(npo_base)) {
  kind_.validate();
  spec_.validate();
  if (kind_.tag == LossTag::Npo) check_theta(spec_, base_);
}

std::size_t LossFunction::item_count(const TokenDataset& batch) const {
  return kind_.sequence_level() ? batch.sequences.size() : batch.pairs.size();
}

double LossFunction::token_value(const Vector& h, const Sequence& context, Token y) const {
  switch (kind_.tag) {
    case LossTag::Nll: return nll_value(h, y);
    case LossTag::Ll: return ll_value(h, y);
    case LossTag::Nlul: return nlul_value(h, y, kind_.clamp_eps);
    case LossTag::It: {
      const auto& t = kind_.teacher ? *kind_.teacher : TeacherLogits::uniform();
      return it_value(h, t.logits(context, spec_.vocab_size));
    }
    case LossTag::Npo: break;
  }
  throw PreconditionError("NPO is defined per sequence, not per token");
}

Vector LossFunction::token_grad(const Vector& h, const Sequence& context, Token y) const {
  switch (kind_.tag) {
    case LossTag::Nll: return nll_grad(h, y);
    case LossTag::Ll: return ll_grad(h, y);
    case LossTag::Nlul: return nlul_grad(h, y, kind_.clamp_eps);
    case LossTag::It: {
      const auto& t = kind_.teacher ? *kind_.teacher : TeacherLogits::uniform();
      return it_grad(h, t.logits(context, spec_.vocab_size));
    }
    case LossTag::Npo: break;
  }
  throw PreconditionError("NPO is defined per sequence, not per token");
}

double LossFunction::value(const Vector& theta, const TokenDataset& batch) const {
  if (item_count(batch) == 0) throw PreconditionError("batch_loss: empty batch");
  double total = 0.0;
  if (kind_.sequence_level()) {
    for (const auto& s : batch.sequences) {
      total += npo_value(spec_, theta, base_, s, kind_.beta) /
               static_cast<double>(s.size() - 1);
    }
    return total / static_cast<double>(batch.sequences.size());
  }
  for (const auto& p : batch.pairs) {
    total += token_value(logits(spec_, theta, p.context), p.context, p.next);
  }
  return total / static_cast<double>(batch.pairs.size());
}

Vector LossFunction::gradient(const Vector& theta, const TokenDataset& batch) const {
  if (item_count(batch) == 0) throw PreconditionError("batch_loss: empty batch");
  if (kind_.sequence_level()) {
    Vector g = Vector::Zero(theta.size());
    for (const auto& s : batch.sequences) {
      g += npo_grad(spec_, theta, base_, s, kind_.beta) / static_cast<double>(s.size() - 1);
    }
    return g / static_cast<double>(batch.sequences.size());
  }
  Vector g = Vector::Zero(theta.size());
  const double w = 1.0 / static_cast<double>(batch.pairs.size());
  for (const auto& p : batch.pairs) {
    const Vector h = logits(spec_, theta, p.context);
    accumulate_backprop(spec_, theta, p.context, token_grad(h, p.context, p.next), w, g);
  }
  return g;
}

double batch_loss(const LossKind& kind, const ModelSpec& spec, const Vector& theta,
                  const TokenDataset& batch, const Vector& npo_base) {
  return LossFunction(kind, spec, npo_base).value(theta, batch);
}

}  // namespace mtu
