#pragma once

#include "mtu/dataset.hpp"
#include "mtu/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mtu {

enum class ModelKind { Bigram, Mlp };

/// Architecture of a small logit model h(x; theta).
///
/// Bigram: theta is a V x V table; h is the row of the last context token.
/// Mlp: the last `context_len` tokens are one-hot encoded and concatenated
/// (missing leading positions are all-zero), followed by one tanh hidden
/// layer of width `hidden_dim` and a linear readout to V logits.
struct ModelSpec {
  ModelKind kind = ModelKind::Bigram;
  int vocab_size = 2;
  int context_len = 1;
  int hidden_dim = 0;

  std::size_t param_count() const;
  void validate() const;
};

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named blocks of the flat parameter vector; disjoint and covering [0, dim).
std::vector<ParamSlice> param_layout(const ModelSpec& spec);

struct ParamVector {
  Vector coords;
  std::vector<ParamSlice> layout;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(coords.size()); }
};

/// Entries drawn uniformly from (-0.1, 0.1) with a seeded generator.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);
ParamVector wrap_params(const ModelSpec& spec, Vector coords);

/// Binary dump: "MTUP", uint32 version, uint64 count, count little-endian doubles.
void save_params(const std::filesystem::path& path, const Vector& theta);
Vector load_params(const std::filesystem::path& path);

/// Logit vector h(x; theta) of length V.
Vector logits(const ModelSpec& spec, const Vector& theta, const Sequence& context);

/// Vector-Jacobian product: J_theta h(x; theta) * logit_grad (length dim(theta)).
/// `accum` is incremented by `scale` times the product.
void accumulate_backprop(const ModelSpec& spec, const Vector& theta,
                         const Sequence& context, const Vector& logit_grad,
                         double scale, Vector& accum);

/// Jacobian-vector product: (J_theta h)^T * direction (length V).
Vector logit_jvp(const ModelSpec& spec, const Vector& theta,
                 const Sequence& context, const Vector& direction);

/// dim(theta) x V matrix with entries d h_j / d theta_i.
Matrix logit_jacobian(const ModelSpec& spec, const Vector& theta,
                      const Sequence& context);

/// Per-token loss gradient w.r.t. the logits.
using LogitGradFn = std::function<Vector(const Vector& h, Token y)>;

/// Exact gradient of the pair-mean loss w.r.t. theta. Throws on empty batch.
Vector grad_loss(const ModelSpec& spec, const Vector& theta,
                 const TokenDataset& batch, const LogitGradFn& per_token);

/// sum_t log softmax(h(s_{<t}))_{s_t}; contexts truncated to context_len.
double sequence_logprob(const ModelSpec& spec, const Vector& theta,
                        const Sequence& seq);

/// Gradient of sequence_logprob w.r.t. theta.
Vector sequence_logprob_grad(const ModelSpec& spec, const Vector& theta,
                             const Sequence& seq);

/// Validates the context against spec and truncates it to context_len.
Sequence truncate_context(const ModelSpec& spec, const Sequence& context);

void check_theta(const ModelSpec& spec, const Vector& theta);

}  // namespace mtu
