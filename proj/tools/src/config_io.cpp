#include "mtu_cli/config_io.hpp"

#include "mtu/errors.hpp"

namespace mtu::cli {

namespace {

template <class F>
auto with_field(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(field, e.message());
  }
}

}  // namespace

FieldReader::FieldReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
  if (!obj_.is_object()) {
    throw ConfigError(path_.empty() ? "<root>" : path_, "must be a JSON object");
  }
}

const json& FieldReader::raw(const std::string& key) {
  used_.insert(key);
  if (!obj_.contains(key)) throw ConfigError(field(key), "missing required field");
  return obj_.at(key);
}

std::string FieldReader::field(const std::string& key) const {
  return path_.empty() ? key : path_ + "." + key;
}

void FieldReader::finish() const {
  for (const auto& [key, value] : obj_.items()) {
    if (!used_.count(key)) throw ConfigError(field(key), "unknown field");
  }
}

// ---------------------------------------------------------------- model / corpus

ModelSpec read_model(const json& j, const std::string& path) {
  FieldReader r(j, path);
  ModelSpec spec;
  spec.kind = with_field(r.field("kind"),
                         [&] { return parse_model_kind(r.require<std::string>("kind")); });
  spec.vocab_size = r.require<int>("vocab_size");
  spec.context_len = r.get<int>("context_len", 1);
  spec.hidden_dim = r.get<int>("hidden_dim", 0);
  r.finish();
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + "." + e.field(), e.message());
  }
  return spec;
}

json write_model(const ModelSpec& spec) {
  json j{{"kind", to_string(spec.kind)},
         {"vocab_size", spec.vocab_size},
         {"context_len", spec.context_len}};
  if (spec.kind == ModelKind::Mlp) j["hidden_dim"] = spec.hidden_dim;
  return j;
}

CorpusSpec read_corpus_spec(const json& j, const std::string& path, int vocab_size) {
  FieldReader r(j, path);
  CorpusSpec c;
  c.vocab_size = vocab_size;
  c.n_sequences = r.get<int>("n_sequences", c.n_sequences);
  c.seq_len = r.get<int>("seq_len", c.seq_len);
  c.forget_fraction = r.get<double>("forget_fraction", c.forget_fraction);
  c.generator = parse_corpus_generator(r.get<std::string>("generator", to_string(c.generator)));
  c.period = r.get<int>("period", c.period);
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + "." + e.field(), e.message());
  }
  return c;
}

json write_corpus_spec(const CorpusSpec& c) {
  return {{"n_sequences", c.n_sequences},     {"seq_len", c.seq_len},
          {"forget_fraction", c.forget_fraction}, {"generator", to_string(c.generator)},
          {"period", c.period},               {"seed", c.seed}};
}

TrainConfig read_train(const json& j, const std::string& path) {
  FieldReader r(j, path);
  TrainConfig t;
  t.epochs = r.get<int>("epochs", t.epochs);
  t.learning_rate = r.get<double>("learning_rate", t.learning_rate);
  t.momentum = r.get<double>("momentum", t.momentum);
  t.batch_size = r.get<int>("batch_size", t.batch_size);
  t.prompt_len = r.get<int>("prompt_len", t.prompt_len);
  t.completion_len = r.get<int>("completion_len", t.completion_len);
  t.min_exact_match = r.get<double>("min_exact_match", t.min_exact_match);
  r.finish();
  return t;
}

json write_train(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"momentum", t.momentum},
          {"batch_size", t.batch_size},
          {"prompt_len", t.prompt_len},
          {"completion_len", t.completion_len},
          {"min_exact_match", t.min_exact_match}};
}

// ---------------------------------------------------------------- optimizer

namespace {

ClipFormula parse_clip_formula(const std::string& s, const std::string& field) {
  if (s == "main") return ClipFormula::MainText;
  if (s == "alg2") return ClipFormula::Algorithm2;
  throw ConfigError(field, "unknown clip formula '" + s + "' (expected main or alg2)");
}

std::string clip_formula_name(ClipFormula f) {
  return f == ClipFormula::MainText ? "main" : "alg2";
}

}  // namespace

MtConfig read_mt_fields(FieldReader& r, const MtConfig& d) {
  MtConfig c = d;
  c.eta = r.get<double>("eta", d.eta);
  c.kappa = r.get<double>("kappa", d.kappa);
  c.alpha = r.get<double>("alpha", d.alpha);
  c.mu = r.get<double>("mu", d.mu);
  c.steps = r.get<int>("steps", d.steps);
  if (r.has("clip") && !r.raw("clip").is_null()) {
    c.clip = r.get<double>("clip", 0.0);
  } else {
    r.get<json>("clip", json());
  }
  c.clip_formula = parse_clip_formula(
      r.get<std::string>("clip_formula", clip_formula_name(d.clip_formula)), r.field("clip_formula"));
  c.batch_forget = r.get<int>("batch_forget", d.batch_forget);
  c.batch_pretrain = r.get<int>("batch_pretrain", d.batch_pretrain);
  c.seed = r.get<std::uint64_t>("seed", d.seed);
  c.ngd_grad_lag = r.get<bool>("ngd_grad_lag", d.ngd_grad_lag);

  const std::string loss = r.get<std::string>("loss", to_string(d.loss.tag));
  c.loss = d.loss;
  c.loss.tag = with_field(r.field("loss"), [&] { return parse_loss_tag(loss); });
  c.loss.beta = r.get<double>("beta", d.loss.beta);
  c.loss.clamp_eps = r.get<double>("clamp_eps", d.loss.clamp_eps);
  const std::string div = r.get<std::string>("divergence", to_string(d.divergence.tag));
  c.divergence.tag = with_field(r.field("divergence"), [&] { return parse_divergence_tag(div); });
  c.divergence.lambda = r.get<double>("lambda", d.divergence.lambda);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(r.field(e.field()), e.message());
  }
  return c;
}

void write_mt_fields(json& out, const MtConfig& c) {
  out["eta"] = c.eta;
  out["kappa"] = c.kappa;
  out["alpha"] = c.alpha;
  out["mu"] = c.mu;
  out["steps"] = c.steps;
  out["clip"] = c.clip ? json(*c.clip) : json();
  out["clip_formula"] = clip_formula_name(c.clip_formula);
  out["batch_forget"] = c.batch_forget;
  out["batch_pretrain"] = c.batch_pretrain;
  out["seed"] = c.seed;
  out["ngd_grad_lag"] = c.ngd_grad_lag;
  out["loss"] = to_string(c.loss.tag);
  out["beta"] = c.loss.beta;
  out["clamp_eps"] = c.loss.clamp_eps;
  out["divergence"] = to_string(c.divergence.tag);
  out["lambda"] = c.divergence.lambda;
}

UnlearnMethod read_method(const json& j, const std::string& path, std::uint64_t default_seed,
                          std::string& teacher) {
  FieldReader r(j, path);
  UnlearnMethod m;
  m.name = r.require<std::string>("name");
  m.kind = with_field(r.field("optimizer"),
                      [&] { return parse_method_kind(r.get<std::string>("optimizer", "mt")); });
  m.full_batch = r.get<bool>("full_batch", m.full_batch);
  MtConfig d;
  d.seed = default_seed;
  m.mt = read_mt_fields(r, d);
  teacher = r.get<std::string>("teacher", "uniform");
  if (teacher.empty()) throw ConfigError(r.field("teacher"), "must be 'uniform' or a path");
  if (r.has("adam")) {
    FieldReader a(r.raw("adam"), r.field("adam"));
    m.adam.beta1 = a.get<double>("beta1", m.adam.beta1);
    m.adam.beta2 = a.get<double>("beta2", m.adam.beta2);
    m.adam.epsilon = a.get<double>("epsilon", m.adam.epsilon);
    m.adam.weight_decay = a.get<double>("weight_decay", m.adam.weight_decay);
    m.adam.warmup_flat_steps = a.get<int>("warmup_flat_steps", m.adam.warmup_flat_steps);
    m.adam.warmup_ramp_steps = a.get<int>("warmup_ramp_steps", m.adam.warmup_ramp_steps);
    m.adam.warmup_fraction = a.get<double>("warmup_fraction", m.adam.warmup_fraction);
    a.finish();
  }
  r.finish();
  if (m.name.empty() || m.name.find_first_of("/\\,\"") != std::string::npos) {
    throw ConfigError(r.field("name"), "must be nonempty and free of path or CSV separators");
  }
  return m;
}

json write_method(const UnlearnMethod& m, const std::string& teacher) {
  json j{{"name", m.name}, {"optimizer", to_string(m.kind)}, {"full_batch", m.full_batch}};
  write_mt_fields(j, m.mt);
  j["teacher"] = teacher;
  j["adam"] = {{"beta1", m.adam.beta1},
               {"beta2", m.adam.beta2},
               {"epsilon", m.adam.epsilon},
               {"weight_decay", m.adam.weight_decay},
               {"warmup_flat_steps", m.adam.warmup_flat_steps},
               {"warmup_ramp_steps", m.adam.warmup_ramp_steps},
               {"warmup_fraction", m.adam.warmup_fraction}};
  return j;
}

// ---------------------------------------------------------------- verification suites

Theorem1Config read_theorem1(const json& j, std::uint64_t seed) {
  FieldReader r(j, "");
  Theorem1Config c = Theorem1Config::defaults();
  c.corpus.seed = seed;
  c.init_seed = seed;
  if (r.has("model")) c.spec = read_model(r.raw("model"), "model");
  if (c.spec.kind != ModelKind::Bigram) {
    throw ConfigError("model.kind", "the theorem1 testbed requires the bigram model");
  }
  c.corpus.vocab_size = c.spec.vocab_size;
  if (r.has("corpus")) {
    CorpusSpec d = read_corpus_spec(r.raw("corpus"), "corpus", c.spec.vocab_size);
    if (!r.raw("corpus").contains("seed")) d.seed = seed;
    c.corpus = d;
  }
  c.init_scale = r.get<double>("init_scale", c.init_scale);
  c.init_seed = r.get<std::uint64_t>("init_seed", c.init_seed);
  c.alphas = r.get<std::vector<double>>("alphas", c.alphas);
  c.horizon = r.get<double>("horizon", c.horizon);
  c.lags = r.get<std::vector<bool>>("lags", c.lags);
  c.min_slope = r.get<double>("min_slope", c.min_slope);
  r.get<std::uint64_t>("seed", seed);
  c.base = read_mt_fields(r, c.base);
  r.finish();
  return c;
}

json write_theorem1(const Theorem1Config& c) {
  json j{{"model", write_model(c.spec)},
         {"corpus", write_corpus_spec(c.corpus)},
         {"init_scale", c.init_scale},
         {"init_seed", c.init_seed},
         {"alphas", c.alphas},
         {"horizon", c.horizon},
         {"lags", c.lags},
         {"min_slope", c.min_slope}};
  write_mt_fields(j, c.base);
  return j;
}

LemmaConfig read_lemma(const json& j, std::uint64_t seed) {
  FieldReader r(j, "");
  LemmaConfig c;
  c.seed = seed;
  r.get<std::uint64_t>("seed", seed);
  c.dim = r.get<int>("dim", c.dim);
  c.eigen_min = r.get<double>("eigen_min", c.eigen_min);
  c.eigen_max = r.get<double>("eigen_max", c.eigen_max);
  c.mus = r.get<std::vector<double>>("mus", c.mus);
  c.lambdas = r.get<std::vector<double>>("lambdas", c.lambdas);
  c.step_fraction = r.get<double>("step_fraction", c.step_fraction);
  c.steps = r.get<int>("steps", c.steps);
  c.roundoff = r.get<double>("roundoff", c.roundoff);
  if (r.has("errors")) {
    const json& arr = r.raw("errors");
    if (!arr.is_array()) throw ConfigError("errors", "must be an array");
    c.errors.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      FieldReader e(arr[i], "errors[" + std::to_string(i) + "]");
      ErrorInjection inj;
      inj.mode = with_field(e.field("mode"),
                            [&] { return parse_error_mode(e.require<std::string>("mode")); });
      inj.magnitude = e.get<double>("magnitude", 0.0);
      inj.decay = e.get<double>("decay", inj.decay);
      inj.seed = e.get<std::uint64_t>("seed", seed + 8);
      e.finish();
      c.errors.push_back(inj);
    }
  } else {
    for (auto& e : c.errors) e.seed = seed + 8;
  }
  r.finish();
  if (c.steps < 1) throw ConfigError("steps", "must be positive");
  return c;
}

json write_lemma(const LemmaConfig& c) {
  json errors = json::array();
  for (const auto& e : c.errors) {
    errors.push_back({{"mode", to_string(e.mode)},
                      {"magnitude", e.magnitude},
                      {"decay", e.decay},
                      {"seed", e.seed}});
  }
  return {{"seed", c.seed},     {"dim", c.dim},
          {"eigen_min", c.eigen_min}, {"eigen_max", c.eigen_max},
          {"mus", c.mus},       {"lambdas", c.lambdas},
          {"errors", errors},   {"step_fraction", c.step_fraction},
          {"steps", c.steps},   {"roundoff", c.roundoff}};
}

QuadraticCheckConfig read_quadratic(const json& j, std::uint64_t seed) {
  FieldReader r(j, "");
  QuadraticCheckConfig c;
  c.seed = r.get<std::uint64_t>("seed", seed);
  c.lambda = r.get<double>("lambda", c.lambda);
  c.ts = r.get<std::vector<double>>("ts", c.ts);
  c.min_reduction = r.get<double>("min_reduction", c.min_reduction);
  if (r.has("models")) {
    const json& arr = r.raw("models");
    if (!arr.is_array()) throw ConfigError("models", "must be an array");
    c.models.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      c.models.push_back(read_model(arr[i], "models[" + std::to_string(i) + "]"));
    }
  }
  if (r.has("divergences")) {
    c.divergences.clear();
    for (const auto& name : r.get<std::vector<std::string>>("divergences", {})) {
      c.divergences.push_back(
          with_field("divergences", [&] { return parse_divergence_tag(name); }));
    }
  }
  r.finish();
  return c;
}

json write_quadratic(const QuadraticCheckConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) models.push_back(write_model(m));
  std::vector<std::string> divs;
  for (auto d : c.divergences) divs.push_back(to_string(d));
  return {{"seed", c.seed},       {"lambda", c.lambda},   {"ts", c.ts},
          {"min_reduction", c.min_reduction}, {"models", models}, {"divergences", divs}};
}

json write_report(const MemorizationReport& m) {
  return {{"exact_match_rate", m.exact_match_rate},
          {"lcs_ratio", m.lcs_ratio},
          {"nll_forget", m.nll_forget},
          {"nll_pretrain", m.nll_pretrain}};
}

}  // namespace mtu::cli
