#include "mtu/errors.hpp"
#include "mtu/harness.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mtu {

// ---------------------------------------------------------------- theorem 1

Theorem1Config Theorem1Config::defaults() {
  Theorem1Config cfg;
  cfg.base.eta = 0.05;
  cfg.base.kappa = 2.0;
  cfg.base.mu = 0.5;
  cfg.base.loss = LossKind::nlul();
  cfg.base.divergence = {DivergenceTag::Kl, 0.5};
  return cfg;
}

double theorem1_slope(const std::vector<double>& alphas, const std::vector<double>& deviations) {
  if (alphas.size() != deviations.size() || alphas.size() < 2) {
    throw PreconditionError("theorem1_slope: need at least two matched points");
  }
  const auto n = static_cast<double>(alphas.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const double x = std::log(alphas[i] * std::log(1.0 / alphas[i]));
    const double y = std::log(deviations[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Theorem1Result verify_theorem1(const Theorem1Config& cfg) {
  cfg.spec.validate();
  cfg.base.validate();
  if (cfg.alphas.size() < 2) throw ConfigError("alphas", "need at least two values");
  for (double a : cfg.alphas) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alphas", "values must lie in (0, 1)");
  }
  if (!(cfg.horizon > 0.0)) throw ConfigError("horizon", "must be positive");
  CorpusSpec cs = cfg.corpus;
  cs.vocab_size = cfg.spec.vocab_size;
  const Corpus corpus = generate_corpus(cs);

  Vector theta0(static_cast<Eigen::Index>(cfg.spec.param_count()));
  std::mt19937_64 gen(cfg.init_seed);
  std::uniform_real_distribution<double> unif(-cfg.init_scale, cfg.init_scale);
  for (auto& x : theta0) x = unif(gen);

  const ModelObjective obj(cfg.spec, corpus.forget_set(cfg.spec.context_len),
                           corpus.pretrain_set(cfg.spec.context_len),
                           LossFunction(cfg.base.loss, cfg.spec), cfg.base.divergence);

  Theorem1Result result;
  std::vector<std::vector<double>> devs(cfg.lags.size());
  for (double alpha : cfg.alphas) {
    MtConfig mt = cfg.base;
    mt.alpha = alpha;
    const double gamma = DerivedNgdParams::from(mt).gamma;
    mt.steps = static_cast<int>(std::lround(cfg.horizon / gamma));
    RunOptions opts;
    opts.record_metrics = false;
    const Trajectory a = mt_run(obj, theta0, mt, /*full_batch=*/true, opts);
    for (std::size_t li = 0; li < cfg.lags.size(); ++li) {
      mt.ngd_grad_lag = cfg.lags[li];
      const Trajectory b = ngd_run(obj, theta0, mt, opts);
      Theorem1Row row;
      row.alpha = alpha;
      row.grad_lag = cfg.lags[li];
      row.steps = mt.steps;
      row.gamma = gamma;
      row.deviation = trajectory_deviation(a, b);
      row.displacement = (a.final_theta() - theta0).norm();
      devs[li].push_back(row.deviation);
      result.rows.push_back(row);
    }
  }

  std::vector<std::size_t> order(cfg.alphas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return cfg.alphas[i] > cfg.alphas[j]; });
  result.passed = true;
  for (const auto& d : devs) {
    bool mono = true;
    for (std::size_t k = 1; k < order.size(); ++k) mono = mono && d[order[k]] < d[order[k - 1]];
    const double slope = theorem1_slope(cfg.alphas, d);
    result.monotone.push_back(mono);
    result.slopes.push_back(slope);
    result.passed = result.passed && mono && slope >= cfg.min_slope;
  }
  return result;
}

// ---------------------------------------------------------------- lemma

std::string to_string(ErrorMode mode) {
  switch (mode) {
    case ErrorMode::Zero:
      return "zero";
    case ErrorMode::ConstantNorm:
      return "constant";
    case ErrorMode::Decaying:
      return "decaying";
  }
  return "unknown";
}

ErrorMode parse_error_mode(const std::string& name) {
  for (auto m : {ErrorMode::Zero, ErrorMode::ConstantNorm, ErrorMode::Decaying}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("error", "unknown error mode '" + name + "'");
}

LemmaResult verify_lemma(const LemmaConfig& cfg) {
  if (cfg.dim < 1) throw ConfigError("dim", "must be positive");
  if (!(cfg.eigen_min >= 0.0 && cfg.eigen_max >= cfg.eigen_min)) {
    throw ConfigError("eigen_max", "spectrum bounds must satisfy 0 <= eigen_min <= eigen_max");
  }
  if (!(cfg.step_fraction > 0.0 && cfg.step_fraction < 1.0)) {
    throw ConfigError("step_fraction", "must lie in (0, 1)");
  }
  std::mt19937_64 gen(cfg.seed);
  std::normal_distribution<double> normal;
  const Eigen::Index n = cfg.dim;
  Matrix raw(n, n);
  for (Eigen::Index i = 0; i < raw.size(); ++i) raw.data()[i] = normal(gen);
  const Matrix q = Eigen::HouseholderQR<Matrix>(raw).householderQ();
  Vector spectrum(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    spectrum[i] = cfg.eigen_min * std::pow(cfg.eigen_max / std::max(cfg.eigen_min, 1e-300), s);
    if (cfg.eigen_min == 0.0) spectrum[i] = cfg.eigen_max * s;
  }
  Matrix h = q * spectrum.asDiagonal() * q.transpose();
  h = 0.5 * (h + h.transpose()).eval();
  Vector g(n);
  for (auto& x : g) x = normal(gen);
  const double lmax = linalg::max_eigenvalue(h);

  LemmaResult result;
  result.passed = true;
  bool any = false;
  for (double mu : cfg.mus) {
    for (double lambda : cfg.lambdas) {
      for (const auto& err : cfg.errors) {
        LemmaRow row;
        row.mu = mu;
        row.lambda = lambda;
        row.error = err.mode;
        row.steps = cfg.steps;
        IhvpConfig ic{cfg.step_fraction / (lmax + lambda), mu, lambda, cfg.steps, err};
        row.eta = ic.eta;
        try {
          const IhvpResult r = ihvp_momentum(h, g, ic);
          const double slack = cfg.roundoff * r.target.norm();
          for (std::size_t t = 0; t < r.distance.size(); ++t) {
            if (r.distance[t] <= slack) continue;
            const double ratio = r.distance[t] / r.bound[t];
            if (ratio > row.worst_ratio) {
              row.worst_ratio = ratio;
              row.worst_step = static_cast<int>(t);
            }
            if (r.distance[t] > r.bound[t] + slack) ++row.violations;
          }
          row.final_distance = r.distance.back();
          row.final_bound = r.bound.back();
          any = true;
          result.passed = result.passed && row.violations == 0;
        } catch (const PreconditionError& e) {
          row.skipped = true;
          row.note = e.what();
        }
        result.rows.push_back(std::move(row));
      }
    }
  }
  result.passed = result.passed && any;
  return result;
}

// ---------------------------------------------------------------- divergence quadratic

QuadraticCheckResult verify_divergence_quadratic(const QuadraticCheckConfig& cfg) {
  if (cfg.ts.size() < 2) throw ConfigError("ts", "need at least two step sizes");
  QuadraticCheckResult result;
  result.passed = true;
  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  std::normal_distribution<double> normal;
  for (const auto& spec : cfg.models) {
    spec.validate();
    CorpusSpec cs;
    cs.vocab_size = spec.vocab_size;
    cs.n_sequences = 4;
    cs.seq_len = 6;
    cs.forget_fraction = 0.25;
    cs.seed = gen();
    const TokenDataset batch = generate_corpus(cs).pretrain_set(spec.context_len);
    Vector theta(static_cast<Eigen::Index>(spec.param_count()));
    for (auto& x : theta) x = unif(gen);
    Vector d(theta.size());
    for (auto& x : d) x = normal(gen);
    d.normalize();
    const std::string name = to_string(spec.kind);
    for (DivergenceTag tag : cfg.divergences) {
      const DivergenceKind kind{tag, cfg.lambda};
      kind.validate_for(spec);
      std::vector<double> scaled;
      for (double t : cfg.ts) {
        QuadraticCheckRow row;
        row.model = name;
        row.divergence = tag;
        row.t = t;
        row.residual = local_quadratic_residual(kind, spec, theta, d, t, batch);
        row.scaled = row.residual / (t * t);
        scaled.push_back(row.scaled);
        result.rows.push_back(row);
      }
      const double red = scaled.back() > 0.0 ? scaled.front() / scaled.back()
                                             : std::numeric_limits<double>::infinity();
      result.reductions.push_back(red);
      result.passed = result.passed && red >= cfg.min_reduction;
    }
  }
  return result;
}

}  // namespace mtu
