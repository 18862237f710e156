#pragma once

#include "mtu/harness.hpp"

#include "mtu/errors.hpp"

#include "json.hpp"

#include <set>
#include <string>

namespace mtu::cli {

using json = nlohmann::json;

/// Reads fields from one JSON object, tracking which keys were consumed so
/// unknown keys can be reported.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string path);

  template <class T>
  T get(const std::string& key, const T& fallback) {
    used_.insert(key);
    if (!obj_.contains(key)) return fallback;
    return convert<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    used_.insert(key);
    if (!obj_.contains(key)) throw ConfigError(field(key), "missing required field");
    return convert<T>(key);
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  const json& raw(const std::string& key);
  std::string field(const std::string& key) const;

  /// Throws on keys that were never read.
  void finish() const;

 private:
  template <class T>
  T convert(const std::string& key) const {
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "has the wrong type");
    }
  }

  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

ModelSpec read_model(const json& j, const std::string& path);
json write_model(const ModelSpec& spec);

CorpusSpec read_corpus_spec(const json& j, const std::string& path, int vocab_size);
json write_corpus_spec(const CorpusSpec& spec);

TrainConfig read_train(const json& j, const std::string& path);
json write_train(const TrainConfig& cfg);

/// Fields of an MtConfig spelled flat: eta, kappa, alpha, lambda, mu, steps,
/// clip, clip_formula, batch_forget, batch_pretrain, loss, beta, divergence,
/// seed, ngd_grad_lag. The caller calls finish().
MtConfig read_mt_fields(FieldReader& r, const MtConfig& defaults);
void write_mt_fields(json& out, const MtConfig& cfg);

/// `teacher` receives the IT teacher source: "uniform" or a parameter-dump path.
UnlearnMethod read_method(const json& j, const std::string& path, std::uint64_t default_seed,
                          std::string& teacher);
json write_method(const UnlearnMethod& m, const std::string& teacher);

Theorem1Config read_theorem1(const json& j, std::uint64_t seed);
json write_theorem1(const Theorem1Config& cfg);

LemmaConfig read_lemma(const json& j, std::uint64_t seed);
json write_lemma(const LemmaConfig& cfg);

QuadraticCheckConfig read_quadratic(const json& j, std::uint64_t seed);
json write_quadratic(const QuadraticCheckConfig& cfg);

json write_report(const MemorizationReport& r);

}  // namespace mtu::cli
