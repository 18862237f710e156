#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's derivative code.

#include "mtu/dataset.hpp"
#include "mtu/linalg.hpp"
#include "mtu/model.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using mtu::Matrix;
using mtu::Vector;

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-5) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Column i is d f / d x_i.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          double h = 1e-5) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const Vector fp = f(xp);
    xp[i] = orig - h;
    const Vector fm = f(xp);
    xp[i] = orig;
    j.col(i) = (fp - fm) / (2.0 * h);
  }
  return j;
}

/// Second derivative of t -> f(x + t d) at t = 0 by central differences.
inline double second_directional(const std::function<double(const Vector&)>& f, const Vector& x,
                                 const Vector& d, double h = 1e-4) {
  return (f(x + h * d) - 2.0 * f(x) + f(x - h * d)) / (h * h);
}

inline double rel_error(const Vector& got, const Vector& want) {
  return (got - want).norm() / (1.0 + want.norm());
}

inline Vector random_vector(std::mt19937_64& gen, Eigen::Index n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

inline Matrix random_spd(std::mt19937_64& gen, Eigen::Index n, double shift = 1.0) {
  std::normal_distribution<double> normal;
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(gen);
  Matrix s = a * a.transpose() / static_cast<double>(n);
  s.diagonal().array() += shift;
  return s;
}

inline std::vector<mtu::Sequence> random_sequences(std::mt19937_64& gen, int vocab, int count,
                                                   int length) {
  std::uniform_int_distribution<int> tok(0, vocab - 1);
  std::vector<mtu::Sequence> out(static_cast<std::size_t>(count));
  for (auto& s : out) {
    s.resize(static_cast<std::size_t>(length));
    for (auto& t : s) t = tok(gen);
  }
  return out;
}

/// Plain softmax with a max shift.
inline Vector softmax(const Vector& h) {
  const double m = h.maxCoeff();
  Vector e = (h.array() - m).exp().matrix();
  return e / e.sum();
}

/// Forward pass of the one-hidden-layer tanh model written from the layout
/// description alone: w1 (H x CV, row-major), b1, w2 (V x H, row-major), b2,
/// one-hot context left-padded to C slots.
inline Vector mlp_logits(const mtu::ModelSpec& spec, const Vector& theta,
                         const mtu::Sequence& context) {
  const int v = spec.vocab_size, c = spec.context_len, hdim = spec.hidden_dim;
  std::vector<int> window;
  const int start = std::max(0, static_cast<int>(context.size()) - c);
  for (int i = start; i < static_cast<int>(context.size()); ++i) window.push_back(context[i]);
  const int pad = c - static_cast<int>(window.size());
  const std::size_t w1 = 0, b1 = w1 + static_cast<std::size_t>(hdim * c * v);
  const std::size_t w2 = b1 + static_cast<std::size_t>(hdim);
  const std::size_t b2 = w2 + static_cast<std::size_t>(v * hdim);
  std::vector<double> hidden(static_cast<std::size_t>(hdim));
  for (int j = 0; j < hdim; ++j) {
    double a = theta[static_cast<Eigen::Index>(b1 + j)];
    for (std::size_t i = 0; i < window.size(); ++i) {
      const int col = (pad + static_cast<int>(i)) * v + window[i];
      a += theta[static_cast<Eigen::Index>(w1 + static_cast<std::size_t>(j * c * v + col))];
    }
    hidden[static_cast<std::size_t>(j)] = std::tanh(a);
  }
  Vector out(v);
  for (int k = 0; k < v; ++k) {
    double a = theta[static_cast<Eigen::Index>(b2 + k)];
    for (int j = 0; j < hdim; ++j) {
      a += theta[static_cast<Eigen::Index>(w2 + static_cast<std::size_t>(k * hdim + j))] *
           hidden[static_cast<std::size_t>(j)];
    }
    out[k] = a;
  }
  return out;
}

/// Longest common subsequence by plain recursion with memo table.
inline std::size_t lcs_length(const mtu::Sequence& a, const mtu::Sequence& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = a.size(); i-- > 0;) {
    for (std::size_t j = b.size(); j-- > 0;) {
      t[i][j] = a[i] == b[j] ? 1 + t[i + 1][j + 1] : std::max(t[i + 1][j], t[i][j + 1]);
    }
  }
  return t[0][0];
}

}  // namespace oracle
