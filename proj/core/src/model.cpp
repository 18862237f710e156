#include "mtu/model.hpp"

#include "mtu/errors.hpp"
#include "mtu/softmax.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

namespace mtu {

// ---------------------------------------------------------------- softmax

double logsumexp(const Vector& h) {
  const double m = h.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((h.array() - m).exp().sum());
}

double logsumexp_except(const Vector& h, Eigen::Index skip) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    if (i != skip) m = std::max(m, h[i]);
  }
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    if (i != skip) s += std::exp(h[i] - m);
  }
  return m + std::log(s);
}

Vector softmax(const Vector& h) {
  const double m = h.maxCoeff();
  Vector e = (h.array() - m).exp().matrix();
  return e / e.sum();
}

double log_softmax_at(const Vector& h, Eigen::Index y) { return h[y] - logsumexp(h); }

Matrix softmax_covariance(const Vector& h) {
  const Vector p = softmax(h);
  Matrix s = -p * p.transpose();
  s.diagonal() += p;
  return s;
}

Vector softmax_covariance_times(const Vector& p, const Vector& v) {
  return (p.array() * v.array()).matrix() - p * p.dot(v);
}

// ---------------------------------------------------------------- spec

std::string to_string(ModelKind kind) {
  return kind == ModelKind::Bigram ? "bigram" : "mlp";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "bigram" || name == "bigram-softmax") return ModelKind::Bigram;
  if (name == "mlp" || name == "mlp-1hidden") return ModelKind::Mlp;
  throw ConfigError("model.kind", "unknown model kind '" + name + "'");
}

void ModelSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size", "must be >= 2");
  if (context_len < 1) throw ConfigError("context_len", "must be >= 1");
  if (kind == ModelKind::Mlp && hidden_dim < 1) {
    throw ConfigError("hidden_dim", "must be >= 1 for the mlp model");
  }
}

std::vector<ParamSlice> param_layout(const ModelSpec& spec) {
  spec.validate();
  const auto v = static_cast<std::size_t>(spec.vocab_size);
  if (spec.kind == ModelKind::Bigram) return {{"table", 0, v * v}};
  const auto c = static_cast<std::size_t>(spec.context_len);
  const auto h = static_cast<std::size_t>(spec.hidden_dim);
  std::vector<ParamSlice> out;
  std::size_t off = 0;
  for (auto [name, size] : std::array<std::pair<const char*, std::size_t>, 4>{
           {{"w1", h * c * v}, {"b1", h}, {"w2", v * h}, {"b2", v}}}) {
    out.push_back({name, off, size});
    off += size;
  }
  return out;
}

std::size_t ModelSpec::param_count() const {
  const auto layout = param_layout(*this);
  return layout.back().offset + layout.back().size;
}

ParamVector wrap_params(const ModelSpec& spec, Vector coords) {
  check_theta(spec, coords);
  return {std::move(coords), param_layout(spec)};
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  Vector theta(static_cast<Eigen::Index>(spec.param_count()));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = dist(gen);
  return wrap_params(spec, std::move(theta));
}

void check_theta(const ModelSpec& spec, const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != spec.param_count()) {
    throw DimensionError("parameter vector has " + std::to_string(theta.size()) +
                         " entries, model expects " +
                         std::to_string(spec.param_count()));
  }
}

// ---------------------------------------------------------------- params io

namespace {

constexpr std::array<char, 4> kParamMagic{'M', 'T', 'U', 'P'};
constexpr std::uint32_t kParamVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little,
                "parameter dumps assume a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("truncated parameter dump");
  return value;
}

}  // namespace

void save_params(const std::filesystem::path& path, const Vector& theta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write parameter dump " + path.string());
  out.write(kParamMagic.data(), kParamMagic.size());
  write_le<std::uint32_t>(out, kParamVersion);
  write_le<std::uint64_t>(out, static_cast<std::uint64_t>(theta.size()));
  for (Eigen::Index i = 0; i < theta.size(); ++i) write_le<double>(out, theta[i]);
}

Vector load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open parameter dump " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kParamMagic) throw Error("not a parameter dump: " + path.string());
  if (read_le<std::uint32_t>(in) != kParamVersion) {
    throw Error("unsupported parameter dump version in " + path.string());
  }
  const auto n = read_le<std::uint64_t>(in);
  Vector theta(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = read_le<double>(in);
  return theta;
}

// ---------------------------------------------------------------- forward

Sequence truncate_context(const ModelSpec& spec, const Sequence& context) {
  if (context.empty()) throw ConfigError("context", "context must be non-empty");
  for (Token t : context) {
    if (t < 0 || t >= spec.vocab_size) {
      throw ConfigError("context", "token id " + std::to_string(t) +
                                       " outside vocabulary of size " +
                                       std::to_string(spec.vocab_size));
    }
  }
  const auto c = static_cast<std::size_t>(spec.context_len);
  if (context.size() <= c) return context;
  return Sequence(context.end() - static_cast<std::ptrdiff_t>(c), context.end());
}

namespace {

/// Views into the flat MLP parameter vector.
struct MlpView {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w1;
  Eigen::Map<const Vector> b1;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w2;
  Eigen::Map<const Vector> b2;
};

MlpView mlp_view(const ModelSpec& spec, const Vector& theta) {
  const Eigen::Index v = spec.vocab_size;
  const Eigen::Index h = spec.hidden_dim;
  const Eigen::Index in = v * spec.context_len;
  const double* p = theta.data();
  return {{p, h, in}, {p + h * in, h}, {p + h * in + h, v, h}, {p + h * in + h + v * h, v}};
}

/// Input columns (of w1) that are active for a context: position k of the
/// left-padded window holding token t maps to column k*V + t.
std::vector<Eigen::Index> active_inputs(const ModelSpec& spec, const Sequence& ctx) {
  std::vector<Eigen::Index> cols;
  const std::size_t pad = static_cast<std::size_t>(spec.context_len) - ctx.size();
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    cols.push_back(static_cast<Eigen::Index>(pad + i) * spec.vocab_size + ctx[i]);
  }
  return cols;
}

struct MlpForward {
  std::vector<Eigen::Index> inputs;
  Vector hidden;  // tanh activations
  Vector out;
};

MlpForward mlp_forward(const ModelSpec& spec, const Vector& theta, const Sequence& ctx) {
  const auto m = mlp_view(spec, theta);
  MlpForward f;
  f.inputs = active_inputs(spec, ctx);
  Vector z = m.b1;
  for (auto col : f.inputs) z += m.w1.col(col);
  f.hidden = z.array().tanh().matrix();
  f.out = m.w2 * f.hidden + m.b2;
  return f;
}

}  // namespace

Vector logits(const ModelSpec& spec, const Vector& theta, const Sequence& context) {
  check_theta(spec, theta);
  const Sequence ctx = truncate_context(spec, context);
  if (spec.kind == ModelKind::Bigram) {
    const Eigen::Index v = spec.vocab_size;
    return theta.segment(ctx.back() * v, v);
  }
  return mlp_forward(spec, theta, ctx).out;
}

void accumulate_backprop(const ModelSpec& spec, const Vector& theta,
                         const Sequence& context, const Vector& logit_grad,
                         double scale, Vector& accum) {
  check_theta(spec, theta);
  const Eigen::Index v = spec.vocab_size;
  if (logit_grad.size() != v) throw DimensionError("logit gradient has wrong length");
  const Sequence ctx = truncate_context(spec, context);
  if (spec.kind == ModelKind::Bigram) {
    accum.segment(ctx.back() * v, v) += scale * logit_grad;
    return;
  }
  const auto m = mlp_view(spec, theta);
  const auto f = mlp_forward(spec, theta, ctx);
  const Eigen::Index h = spec.hidden_dim;
  const Eigen::Index in = v * spec.context_len;
  const Eigen::Index off_b1 = h * in;
  const Eigen::Index off_w2 = off_b1 + h;
  const Eigen::Index off_b2 = off_w2 + v * h;

  const Vector g = scale * logit_grad;
  // w2 (row-major V x H) and b2
  for (Eigen::Index r = 0; r < v; ++r) {
    accum.segment(off_w2 + r * h, h) += g[r] * f.hidden;
  }
  accum.segment(off_b2, v) += g;
  const Vector dz = ((m.w2.transpose() * g).array() *
                     (1.0 - f.hidden.array().square()))
                        .matrix();
  accum.segment(off_b1, h) += dz;
  // w1 is row-major H x in; only active input columns receive gradient.
  for (auto col : f.inputs) {
    for (Eigen::Index r = 0; r < h; ++r) accum[r * in + col] += dz[r];
  }
}

Vector logit_jvp(const ModelSpec& spec, const Vector& theta, const Sequence& context,
                 const Vector& direction) {
  check_theta(spec, theta);
  if (direction.size() != theta.size()) throw DimensionError("direction has wrong length");
  const Eigen::Index v = spec.vocab_size;
  const Sequence ctx = truncate_context(spec, context);
  if (spec.kind == ModelKind::Bigram) return direction.segment(ctx.back() * v, v);

  const auto m = mlp_view(spec, theta);
  const auto dm = mlp_view(spec, direction);
  const auto f = mlp_forward(spec, theta, ctx);
  Vector dz = dm.b1;
  for (auto col : f.inputs) dz += dm.w1.col(col);
  const Vector da = (dz.array() * (1.0 - f.hidden.array().square())).matrix();
  return dm.w2 * f.hidden + m.w2 * da + dm.b2;
}

Matrix logit_jacobian(const ModelSpec& spec, const Vector& theta, const Sequence& context) {
  const Eigen::Index v = spec.vocab_size;
  Matrix jac = Matrix::Zero(theta.size(), v);
  Vector col(theta.size());
  for (Eigen::Index j = 0; j < v; ++j) {
    col.setZero();
    accumulate_backprop(spec, theta, context, Vector::Unit(v, j), 1.0, col);
    jac.col(j) = col;
  }
  return jac;
}

Vector grad_loss(const ModelSpec& spec, const Vector& theta, const TokenDataset& batch,
                 const LogitGradFn& per_token) {
  if (batch.pairs.empty()) throw PreconditionError("grad_loss: empty batch");
  Vector grad = Vector::Zero(theta.size());
  const double w = 1.0 / static_cast<double>(batch.pairs.size());
  for (const auto& pair : batch.pairs) {
    const Vector h = logits(spec, theta, pair.context);
    accumulate_backprop(spec, theta, pair.context, per_token(h, pair.next), w, grad);
  }
  return grad;
}

double sequence_logprob(const ModelSpec& spec, const Vector& theta, const Sequence& seq) {
  if (seq.size() < 2) throw PreconditionError("sequence_logprob: sequence shorter than 2");
  double total = 0.0;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const Sequence ctx(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(t));
    if (seq[t] < 0 || seq[t] >= spec.vocab_size) {
      throw ConfigError("tokens", "token id outside vocabulary");
    }
    total += log_softmax_at(logits(spec, theta, ctx), seq[t]);
  }
  return total;
}

Vector sequence_logprob_grad(const ModelSpec& spec, const Vector& theta, const Sequence& seq) {
  if (seq.size() < 2) throw PreconditionError("sequence_logprob: sequence shorter than 2");
  Vector grad = Vector::Zero(theta.size());
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const Sequence ctx(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(t));
    const Vector h = logits(spec, theta, ctx);
    Vector g = -softmax(h);
    g[seq[t]] += 1.0;
    accumulate_backprop(spec, theta, ctx, g, 1.0, grad);
  }
  return grad;
}

}  // namespace mtu
