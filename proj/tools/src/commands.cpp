#include "mtu_cli/cli.hpp"
#include "mtu_cli/config_io.hpp"

#include "mtu/errors.hpp"
#include "mtu/harness.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace mtu::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

class MissingArtifact : public Error {
 public:
  using Error::Error;
};

struct Context {
  fs::path out;
  std::optional<std::uint64_t> seed_flag;
  bool verbose = false;
  std::ostream* out_stream = nullptr;
  std::ostream* err = nullptr;

  void log(const std::string& msg) const {
    if (verbose) *err << "[mtu] " << msg << '\n';
  }
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << bytes;
  if (!out) throw Error("write to " + path.string() + " failed");
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what, std::string("invalid JSON: ") + e.what());
  }
}

/// A manifest is accepted wherever a config is; its echo is used.
json load_config(const fs::path& path, const std::string& command) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  json j = parse_json(ss.str(), "--config");
  if (j.is_object() && j.value("tool", "") == "mtu" && j.contains("config")) {
    const std::string recorded = j.value("command", "");
    if (recorded != command) {
      throw ConfigError("command",
                        "manifest was written by '" + recorded + "', not '" + command + "'");
    }
    return j.at("config");
  }
  return j;
}

std::uint64_t resolve_seed(const Context& ctx, const json& cfg, std::uint64_t fallback) {
  if (ctx.seed_flag) return *ctx.seed_flag;
  if (cfg.is_object() && cfg.contains("seed")) {
    try {
      return cfg.at("seed").get<std::uint64_t>();
    } catch (const json::exception&) {
      throw ConfigError("seed", "must be a nonnegative integer");
    }
  }
  if (const char* env = std::getenv("MTU_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("MTU_SEED", "must be a nonnegative integer");
    }
  }
  return fallback;
}

fs::path resolve(const Context& ctx, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (ctx.out / path).lexically_normal();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct ManifestInput {
  std::string name;
  std::string hash;
};

void write_manifest(const Context& ctx, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<ManifestInput>& inputs,
                    const std::vector<std::string>& outputs,
                    std::chrono::steady_clock::time_point start) {
  std::string combined = "config " + blob_hash(config.dump()) + "\n";
  json input_list = json::array();
  for (const auto& in : inputs) {
    combined += in.name + " " + in.hash + "\n";
    input_list.push_back({{"name", in.name}, {"hash", in.hash}});
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json m{{"tool", "mtu"},
         {"version", kVersion},
         {"command", command},
         {"config", config},
         {"input_hash", blob_hash(combined)},
         {"inputs", input_list},
         {"outputs", outputs},
         {"seed", seed},
         {"duration_seconds", seconds}};
  write_file(ctx.out / kManifestName, dump(m));
}

// ---------------------------------------------------------------- corpus resolution

struct LoadedCorpus {
  Corpus corpus;
  json echo;
  std::vector<ManifestInput> inputs;
};

LoadedCorpus load_corpus(const json& cj, const ModelSpec& spec, const fs::path& base,
                         std::uint64_t seed) {
  LoadedCorpus lc;
  if (cj.is_object() && (cj.contains("forget_path") || cj.contains("pretrain_path"))) {
    FieldReader r(cj, "corpus");
    const auto fp = r.require<std::string>("forget_path");
    const auto pp = r.require<std::string>("pretrain_path");
    r.finish();
    auto load = [&](const std::string& rel, DatasetRole role) {
      const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
      if (!fs::exists(p)) throw MissingArtifact("corpus file " + p.string() + " not found");
      lc.inputs.push_back({rel, blob_hash(read_file(p))});
      return load_dataset(p, spec.context_len, role).sequences;
    };
    lc.corpus.forget = load(fp, DatasetRole::Forget);
    lc.corpus.pretrain = load(pp, DatasetRole::Pretrain);
    std::set<Sequence> f(lc.corpus.forget.begin(), lc.corpus.forget.end());
    for (const auto& s : lc.corpus.pretrain) {
      if (f.count(s)) throw ConfigError("corpus", "forget and pretrain sets share a sequence");
    }
    lc.echo = {{"forget_path", fp}, {"pretrain_path", pp}};
  } else {
    CorpusSpec cs = read_corpus_spec(cj, "corpus", spec.vocab_size);
    if (!cj.contains("seed")) cs.seed = seed;
    lc.corpus = generate_corpus(cs);
    lc.echo = write_corpus_spec(cs);
  }
  try {
    lc.corpus.all_pairs(spec.context_len).validate(spec.vocab_size);
  } catch (const ConfigError& e) {
    throw ConfigError("corpus." + e.field(), e.message());
  }
  return lc;
}

struct LoadedTarget {
  ModelSpec spec;
  TrainConfig train;
  LoadedCorpus corpus;
  Vector theta;
  std::vector<ManifestInput> inputs;
};

LoadedTarget load_target(const Context& ctx, const std::string& rel) {
  const fs::path dir = resolve(ctx, rel);
  const fs::path params = dir / "target.params";
  const fs::path manifest = dir / kManifestName;
  if (!fs::exists(params)) throw MissingArtifact("target parameters " + params.string() + " not found");
  if (!fs::exists(manifest)) throw MissingArtifact("target manifest " + manifest.string() + " not found");
  const json m = parse_json(read_file(manifest), "target manifest");
  if (m.value("command", "") != "train-target" || !m.contains("config")) {
    throw ConfigError("target", manifest.string() + " is not a train-target manifest");
  }
  const json& tc = m.at("config");
  LoadedTarget t;
  t.spec = read_model(tc.at("model"), "target.model");
  t.train = tc.contains("train") ? read_train(tc.at("train"), "target.train") : TrainConfig{};
  t.corpus = load_corpus(tc.at("corpus"), t.spec, dir, tc.value("seed", std::uint64_t{0}));
  const std::string bytes = read_file(params);
  t.theta = load_params(params);
  if (static_cast<std::size_t>(t.theta.size()) != t.spec.param_count()) {
    throw ConfigError("target", "parameter dump does not match the model's parameter count");
  }
  t.inputs.push_back({"target.params", blob_hash(bytes)});
  t.inputs.push_back({"target.config", blob_hash(tc.dump())});
  for (auto& in : t.corpus.inputs) t.inputs.push_back(in);
  return t;
}

// ---------------------------------------------------------------- train-target

int cmd_train_target(const Context& ctx, const fs::path& config_path) {
  const auto start = std::chrono::steady_clock::now();
  const json cfg = load_config(config_path, "train-target");
  FieldReader r(cfg, "");
  const std::uint64_t seed = resolve_seed(ctx, cfg, 0);
  r.get<json>("seed", json());
  const ModelSpec spec = read_model(r.raw("model"), "model");
  const TrainConfig train = r.has("train") ? read_train(r.raw("train"), "train") : TrainConfig{};
  const json corpus_json = r.has("corpus") ? r.raw("corpus") : json::object();
  r.finish();
  fs::create_directories(ctx.out);
  const LoadedCorpus lc = load_corpus(corpus_json, spec, ctx.out, seed);

  ctx.log("training " + to_string(spec.kind) + " target with " +
          std::to_string(spec.param_count()) + " parameters");
  const ParamVector params = build_target(spec, lc.corpus, train, seed);
  save_params(ctx.out / "target.params", params.coords);
  const auto report = memorization_report(spec, params.coords, lc.corpus, train.prompt_len,
                                          train.completion_len);
  json mem{{"prompt_len", train.prompt_len},
           {"completion_len", train.completion_len},
           {"forget_sequences", lc.corpus.forget.size()},
           {"pretrain_sequences", lc.corpus.pretrain.size()},
           {"report", write_report(report)}};
  write_file(ctx.out / "memorization.json", dump(mem));
  ctx.log("forget exact-match rate " + format_double(report.exact_match_rate));

  const json echo{{"model", write_model(spec)},
                  {"corpus", lc.echo},
                  {"train", write_train(train)},
                  {"seed", seed}};
  write_manifest(ctx, "train-target", echo, seed, lc.inputs, {"target.params", "memorization.json"},
                 start);
  return kPass;
}

// ---------------------------------------------------------------- unlearn

int cmd_unlearn(const Context& ctx, const fs::path& config_path) {
  const auto start = std::chrono::steady_clock::now();
  const json cfg = load_config(config_path, "unlearn");
  FieldReader r(cfg, "");
  const std::uint64_t seed = resolve_seed(ctx, cfg, 0);
  r.get<json>("seed", json());
  const std::string target_rel = r.require<std::string>("target");

  std::vector<UnlearnMethod> methods;
  std::vector<std::string> teachers;
  const json& mj = r.raw("methods");
  if (!mj.is_array() || mj.empty()) throw ConfigError("methods", "must be a nonempty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < mj.size(); ++i) {
    teachers.emplace_back();
    methods.push_back(
        read_method(mj[i], "methods[" + std::to_string(i) + "]", seed, teachers.back()));
    if (!names.insert(methods.back().name).second) {
      throw ConfigError("methods[" + std::to_string(i) + "].name", "duplicate method name");
    }
  }
  StopRule stop;
  if (r.has("stop")) {
    FieldReader s(r.raw("stop"), "stop");
    const json limit = s.get<json>("max_exact_match", json());
    if (!limit.is_null()) {
      if (!limit.is_number()) throw ConfigError("stop.max_exact_match", "must be a number");
      stop.max_exact_match = limit.get<double>();
    }
    stop.check_every = s.get<int>("check_every", stop.check_every);
    s.finish();
    if (stop.check_every < 1) throw ConfigError("stop.check_every", "must be positive");
  }
  const json eval_json = r.has("eval") ? r.raw("eval") : json::object();
  const int rounds = r.get<int>("sequential_rounds", 0);
  r.finish();
  if (rounds < 0) throw ConfigError("sequential_rounds", "must be nonnegative");

  const LoadedTarget target = load_target(ctx, target_rel);
  EvalConfig eval{target.train.prompt_len, target.train.completion_len};
  {
    FieldReader e(eval_json, "eval");
    eval.prompt_len = e.get<int>("prompt_len", eval.prompt_len);
    eval.completion_len = e.get<int>("completion_len", eval.completion_len);
    e.finish();
  }
  std::vector<ManifestInput> inputs = target.inputs;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    if (teachers[i] == "uniform") continue;
    const fs::path p = resolve(ctx, teachers[i]);
    if (!fs::exists(p)) throw MissingArtifact("teacher parameters " + p.string() + " not found");
    Vector theta = load_params(p);
    if (static_cast<std::size_t>(theta.size()) != target.spec.param_count()) {
      throw ConfigError("methods." + methods[i].name + ".teacher",
                        "parameter dump does not match the target model");
    }
    inputs.push_back({teachers[i], blob_hash(read_file(p))});
    methods[i].mt.loss.teacher = TeacherLogits::fixed_model(target.spec, std::move(theta));
  }
  for (const auto& m : methods) {
    try {
      m.mt.divergence.validate_for(target.spec);
    } catch (const ConfigError& e) {
      throw ConfigError("methods." + m.name + ".divergence", e.message());
    }
  }
  fs::create_directories(ctx.out);

  ctx.log("running " + std::to_string(methods.size()) + " methods");
  std::vector<UnlearnRow> rows =
      unlearn_experiment(target.spec, target.theta, target.corpus.corpus, methods, stop, eval);
  if (rounds > 0) {
    for (const auto& m : methods) {
      if (m.kind == MethodKind::NoOp) continue;
      ctx.log("sequential protocol for " + m.name);
      try {
        rows.push_back(sequential_unlearn(target.spec, target.theta, target.corpus.corpus, m,
                                          rounds, stop, eval));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& ex) {
        UnlearnRow row;
        row.method = m.name + "-sequential";
        row.failed = true;
        row.error = ex.what();
        rows.push_back(std::move(row));
      }
    }
  }

  std::vector<std::string> outputs;
  json summary = json::array();
  for (const auto& row : rows) {
    const std::string traj = "trajectory_" + row.method + ".csv";
    std::ostringstream csv;
    write_trajectory_csv(csv, row.trajectory);
    write_file(ctx.out / traj, csv.str());
    outputs.push_back(traj);
    if (!row.failed) {
      const std::string params = "unlearned_" + row.method + ".params";
      save_params(ctx.out / params, row.theta);
      outputs.push_back(params);
    }
    summary.push_back({{"method", row.method},
                       {"status", row.failed ? "failed" : "ok"},
                       {"error", row.error},
                       {"steps", row.steps_run},
                       {"before", write_report(row.before)},
                       {"after", write_report(row.after)},
                       {"pretrain_drift", row.pretrain_drift}});
    ctx.log(row.method + (row.failed ? ": failed: " + row.error
                                     : ": exact match " + format_double(row.before.exact_match_rate) +
                                           " -> " + format_double(row.after.exact_match_rate)));
  }
  std::ostringstream reports;
  write_unlearn_csv(reports, rows);
  write_file(ctx.out / "reports.csv", reports.str());
  write_file(ctx.out / "summary.json", dump(json{{"methods", summary}}));
  outputs.push_back("reports.csv");
  outputs.push_back("summary.json");

  json methods_echo = json::array();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    methods_echo.push_back(write_method(methods[i], teachers[i]));
  }
  const json echo{{"target", target_rel},
                  {"methods", methods_echo},
                  {"stop",
                   {{"max_exact_match",
                     stop.max_exact_match ? json(*stop.max_exact_match) : json()},
                    {"check_every", stop.check_every}}},
                  {"eval", {{"prompt_len", eval.prompt_len}, {"completion_len", eval.completion_len}}},
                  {"sequential_rounds", rounds},
                  {"seed", seed}};
  write_manifest(ctx, "unlearn", echo, seed, inputs, outputs, start);
  return kPass;
}

// ---------------------------------------------------------------- verify

std::vector<LossTag> read_losses(FieldReader& r, const std::vector<LossTag>& fallback) {
  if (!r.has("losses")) return fallback;
  std::vector<LossTag> out;
  for (const auto& name : r.get<std::vector<std::string>>("losses", {})) {
    try {
      out.push_back(parse_loss_tag(name));
    } catch (const ConfigError& e) {
      throw ConfigError("losses", e.message());
    }
  }
  if (out.empty()) throw ConfigError("losses", "must be nonempty");
  return out;
}

int finish_verify(const Context& ctx, const std::string& which, const json& echo,
                  std::uint64_t seed, const std::vector<ManifestInput>& inputs,
                  const std::string& table_name, const std::string& table, json summary,
                  bool passed, std::chrono::steady_clock::time_point start) {
  fs::create_directories(ctx.out);
  summary["suite"] = which;
  summary["passed"] = passed;
  write_file(ctx.out / table_name, table);
  write_file(ctx.out / "summary.json", dump(summary));
  write_manifest(ctx, "verify " + which, echo, seed, inputs, {table_name, "summary.json"}, start);
  *ctx.out_stream << which << ": " << (passed ? "PASS" : "FAIL") << '\n';
  return passed ? kPass : kFailed;
}

int verify_theorem1_cmd(const Context& ctx, const json& cfg,
                        std::chrono::steady_clock::time_point start) {
  const std::uint64_t seed = resolve_seed(ctx, cfg, 1);
  const Theorem1Config c = read_theorem1(cfg, seed);
  ctx.log("theorem1 sweep over " + std::to_string(c.alphas.size()) + " alphas");
  const Theorem1Result res = verify_theorem1(c);
  std::ostringstream csv;
  write_theorem1_csv(csv, res);
  json lags = json::array();
  for (std::size_t i = 0; i < c.lags.size(); ++i) {
    lags.push_back({{"grad_lag", static_cast<bool>(c.lags[i])},
                    {"slope", res.slopes[i]},
                    {"monotone", static_cast<bool>(res.monotone[i])}});
  }
  json echo = write_theorem1(c);
  echo["seed"] = seed;
  return finish_verify(ctx, "theorem1", echo, seed, {}, "theorem1.csv", csv.str(),
                       {{"lags", lags}, {"min_slope", c.min_slope}}, res.passed, start);
}

int verify_lemma_cmd(const Context& ctx, const json& cfg,
                     std::chrono::steady_clock::time_point start) {
  const std::uint64_t seed = resolve_seed(ctx, cfg, 3);
  const LemmaConfig c = read_lemma(cfg, seed);
  const LemmaResult res = verify_lemma(c);
  std::ostringstream csv;
  write_lemma_csv(csv, res);
  double worst = 0.0;
  int violations = 0, skipped = 0;
  for (const auto& row : res.rows) {
    worst = std::max(worst, row.worst_ratio);
    violations += row.violations;
    if (row.skipped) {
      ++skipped;
      *ctx.err << "warning: skipped mu=" << format_double(row.mu)
               << " lambda=" << format_double(row.lambda) << ": " << row.note << '\n';
    }
  }
  return finish_verify(ctx, "lemma", write_lemma(c), seed, {}, "lemma.csv", csv.str(),
                       {{"worst_ratio", worst}, {"violations", violations}, {"skipped", skipped}},
                       res.passed, start);
}

int verify_dynamics_cmd(const Context& ctx, const json& cfg,
                        std::chrono::steady_clock::time_point start) {
  FieldReader r(cfg, "");
  const std::uint64_t seed = resolve_seed(ctx, cfg, 0);
  r.get<json>("seed", json());
  const std::string target_rel = r.require<std::string>("target");
  DynamicsConfig d = DynamicsConfig::defaults();
  d.losses = read_losses(r, d.losses);
  d.npo_beta = r.get<double>("npo_beta", d.npo_beta);
  d.min_forget_probability = r.get<double>("min_forget_probability", d.min_forget_probability);
  d.record_every = r.get<int>("record_every", d.record_every);
  DynamicsCriteria crit;
  if (r.has("criteria")) {
    FieldReader c(r.raw("criteria"), "criteria");
    crit.min_grad_ratio = c.get<double>("min_grad_ratio", crit.min_grad_ratio);
    crit.min_nlul_rise = c.get<double>("min_nlul_rise", crit.min_nlul_rise);
    crit.max_ll_rise = c.get<double>("max_ll_rise", crit.max_ll_rise);
    c.finish();
  }
  d.mt.seed = seed;
  d.mt = read_mt_fields(r, d.mt);
  r.finish();
  const LoadedTarget target = load_target(ctx, target_rel);

  const DynamicsResult res = gradient_dynamics_study(target.spec, target.theta,
                                                     target.corpus.corpus, d);
  std::ostringstream csv;
  write_dynamics_csv(csv, res);
  json norms = json::object();
  for (const auto& [tag, n] : res.initial_grad_norms) norms[to_string(tag)] = n;
  json summary{{"initial_forget_probability", res.initial_forget_probability},
               {"initial_grad_norms", norms}};
  bool passed = true;
  if (res.find(LossTag::Ll) && res.find(LossTag::Nlul)) {
    const DynamicsVerdict v = judge_dynamics(res, crit);
    summary["grad_ratio"] = v.grad_ratio;
    summary["nlul_rise"] = v.nlul_rise;
    summary["ll_rise"] = v.ll_rise;
    passed = v.passed;
  }
  json echo{{"target", target_rel},
            {"losses", [&] {
               std::vector<std::string> v;
               for (auto t : d.losses) v.push_back(to_string(t));
               return v;
             }()},
            {"npo_beta", d.npo_beta},
            {"min_forget_probability", d.min_forget_probability},
            {"record_every", d.record_every},
            {"criteria",
             {{"min_grad_ratio", crit.min_grad_ratio},
              {"min_nlul_rise", crit.min_nlul_rise},
              {"max_ll_rise", crit.max_ll_rise}}}};
  write_mt_fields(echo, d.mt);
  echo.erase("loss");
  echo.erase("beta");
  return finish_verify(ctx, "dynamics", echo, seed, target.inputs, "dynamics.csv", csv.str(),
                       summary, passed, start);
}

int verify_quadratic_cmd(const Context& ctx, const json& cfg,
                         std::chrono::steady_clock::time_point start) {
  const std::uint64_t seed = resolve_seed(ctx, cfg, 5);
  const QuadraticCheckConfig c = read_quadratic(cfg, seed);
  const QuadraticCheckResult res = verify_divergence_quadratic(c);
  std::ostringstream csv;
  write_quadratic_csv(csv, res);
  return finish_verify(ctx, "divergence-quadratic", write_quadratic(c), seed, {},
                       "divergence_quadratic.csv", csv.str(), {{"reductions", res.reductions}},
                       res.passed, start);
}

int cmd_verify(const Context& ctx, const std::string& which, const fs::path& config_path) {
  const auto start = std::chrono::steady_clock::now();
  const std::string command = "verify " + which;
  const json cfg = config_path.empty() ? json::object() : load_config(config_path, command);
  if (!cfg.is_object()) throw ConfigError("<root>", "must be a JSON object");
  if (which == "theorem1") return verify_theorem1_cmd(ctx, cfg, start);
  if (which == "lemma") return verify_lemma_cmd(ctx, cfg, start);
  if (which == "dynamics") return verify_dynamics_cmd(ctx, cfg, start);
  if (which == "divergence-quadratic") return verify_quadratic_cmd(ctx, cfg, start);
  throw ConfigError("verify", "unknown suite '" + which + "'");
}

// ---------------------------------------------------------------- report

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    if (width.size() < r.size()) width.resize(r.size(), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << (i ? "  " : "") << std::left << std::setw(static_cast<int>(width[i])) << r[i];
    }
    out << '\n';
  }
}

int cmd_report(const Context& ctx) {
  const fs::path manifest = ctx.out / kManifestName;
  if (!fs::exists(manifest)) throw MissingArtifact(manifest.string() + " not found");
  const json m = parse_json(read_file(manifest), "manifest");
  std::ostream& out = *ctx.out_stream;
  out << "command: " << m.value("command", "?") << '\n'
      << "version: " << m.value("version", "?") << '\n'
      << "input_hash: " << m.value("input_hash", "?") << '\n'
      << "seed: " << m.value("seed", std::uint64_t{0}) << '\n';
  for (const auto& name : m.value("outputs", std::vector<std::string>{})) {
    const fs::path p = ctx.out / name;
    if (!fs::exists(p)) throw MissingArtifact("artifact " + p.string() + " listed but missing");
    const auto ext = p.extension().string();
    if (ext == ".csv") {
      out << "\n== " << name << '\n';
      print_table(out, parse_csv(read_file(p)));
    } else if (ext == ".json") {
      out << "\n== " << name << '\n' << parse_json(read_file(p), name).dump(2) << '\n';
    }
  }
  return kPass;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-teacher unlearning toolkit", "mtu"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Context ctx;
  ctx.out_stream = &out;
  ctx.err = &err;
  std::string out_dir = ".";
  std::string config_path;
  std::uint64_t seed = 0;
  bool verbose = false;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    sub->add_option("--out", out_dir, "Output directory (relative paths resolve against it)");
    if (with_config) sub->add_option("--config", config_path, "JSON config or manifest");
    sub->add_option("--seed", seed, "Seed override");
    sub->add_flag("-v,--verbose", verbose, "Progress messages on stderr");
  };
  auto* train = app.add_subcommand("train-target", "Train a memorizing target model");
  add_common(train, true);
  train->get_option("--config")->required();
  auto* unlearn = app.add_subcommand("unlearn", "Run unlearning methods against a target");
  add_common(unlearn, true);
  unlearn->get_option("--config")->required();
  auto* verify = app.add_subcommand("verify", "Run a verification suite");
  std::string which;
  verify->add_option("suite", which, "theorem1 | lemma | dynamics | divergence-quadratic")
      ->required()
      ->check(CLI::IsMember({"theorem1", "lemma", "dynamics", "divergence-quadratic"}));
  add_common(verify, true);
  auto* report = app.add_subcommand("report", "Re-render tables from a manifest directory");
  add_common(report, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kConfigError;
  }
  ctx.out = out_dir;
  ctx.verbose = verbose;
  for (auto* sub : {train, unlearn, verify, report}) {
    if (sub->parsed() && sub->count("--seed") > 0) ctx.seed_flag = seed;
  }

  try {
    if (train->parsed()) return cmd_train_target(ctx, config_path);
    if (unlearn->parsed()) return cmd_unlearn(ctx, config_path);
    if (verify->parsed()) return cmd_verify(ctx, which, config_path);
    return cmd_report(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << '\n';
    return kTrainingFailure;
  } catch (const MissingArtifact& e) {
    err << "missing artifact: " << e.what() << '\n';
    return kMissingArtifact;
  } catch (const PreconditionError& e) {
    err << "precondition: " << e.what() << '\n';
    return kPrecondition;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailed;
  }
}

}  // namespace mtu::cli
