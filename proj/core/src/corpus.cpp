#include "mtu/errors.hpp"
#include "mtu/harness.hpp"
#include "mtu/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace mtu {

std::string to_string(CorpusGenerator g) {
  return g == CorpusGenerator::Random ? "random" : "patterned";
}

CorpusGenerator parse_corpus_generator(const std::string& name) {
  if (name == "random") return CorpusGenerator::Random;
  if (name == "patterned") return CorpusGenerator::Patterned;
  throw ConfigError("generator", "unknown corpus generator '" + name + "'");
}

int CorpusSpec::forget_count() const {
  const auto k = static_cast<int>(std::lround(forget_fraction * n_sequences));
  return std::clamp(k, 1, n_sequences - 1);
}

void CorpusSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("vocab_size", "must be at least 2");
  if (n_sequences < 2) throw ConfigError("n_sequences", "must be at least 2");
  if (seq_len < 2) throw ConfigError("seq_len", "must be at least 2");
  if (!(forget_fraction > 0.0 && forget_fraction < 1.0)) {
    throw ConfigError("forget_fraction", "must lie in (0, 1)");
  }
  if (generator == CorpusGenerator::Patterned && (period < 1 || period > vocab_size)) {
    throw ConfigError("period", "must lie in [1, vocab_size]");
  }
}

TokenDataset Corpus::forget_set(int context_len) const {
  return TokenDataset::from_sequences(forget, context_len, DatasetRole::Forget);
}

TokenDataset Corpus::pretrain_set(int context_len) const {
  return TokenDataset::from_sequences(pretrain, context_len, DatasetRole::Pretrain);
}

TokenDataset Corpus::all_pairs(int context_len) const {
  std::vector<Sequence> all = forget;
  all.insert(all.end(), pretrain.begin(), pretrain.end());
  return TokenDataset::from_sequences(std::move(all), context_len, DatasetRole::Pretrain);
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::mt19937_64 gen(spec.seed);
  std::uniform_int_distribution<Token> tok(0, spec.vocab_size - 1);

  auto draw = [&]() {
    Sequence s(static_cast<std::size_t>(spec.seq_len));
    if (spec.generator == CorpusGenerator::Random) {
      for (auto& x : s) x = tok(gen);
      return s;
    }
    Sequence all(static_cast<std::size_t>(spec.vocab_size));
    std::iota(all.begin(), all.end(), 0);
    Sequence motif(static_cast<std::size_t>(spec.period));
    for (int i = 0; i < spec.period; ++i) {
      std::uniform_int_distribution<int> pick(i, spec.vocab_size - 1);
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(gen))]);
      motif[static_cast<std::size_t>(i)] = all[static_cast<std::size_t>(i)];
    }
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = motif[i % motif.size()];
    return s;
  };

  std::set<Sequence> seen;
  std::vector<Sequence> seqs;
  const int max_attempts = 1000 * spec.n_sequences;
  for (int attempt = 0; static_cast<int>(seqs.size()) < spec.n_sequences; ++attempt) {
    if (attempt >= max_attempts) {
      throw ConfigError("n_sequences", "cannot draw that many distinct sequences");
    }
    Sequence s = draw();
    if (seen.insert(s).second) seqs.push_back(std::move(s));
  }
  const auto k = static_cast<std::ptrdiff_t>(spec.forget_count());
  return {{seqs.begin(), seqs.begin() + k}, {seqs.begin() + k, seqs.end()}};
}

// ---------------------------------------------------------------- memorization

bool operator==(const MemorizationReport& a, const MemorizationReport& b) {
  return a.exact_match_rate == b.exact_match_rate && a.lcs_ratio == b.lcs_ratio &&
         a.nll_forget == b.nll_forget && a.nll_pretrain == b.nll_pretrain;
}

double lcs_ratio(const Sequence& candidate, const Sequence& reference) {
  if (reference.empty()) return candidate.empty() ? 1.0 : 0.0;
  std::vector<std::size_t> row(reference.size() + 1, 0);
  for (Token c : candidate) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= reference.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = c == reference[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return static_cast<double>(row.back()) / static_cast<double>(reference.size());
}

Sequence greedy_continuation(const ModelSpec& spec, const Vector& theta, const Sequence& prompt,
                             int length) {
  Sequence ctx = prompt;
  Sequence out;
  out.reserve(static_cast<std::size_t>(std::max(length, 0)));
  for (int i = 0; i < length; ++i) {
    const Vector h = logits(spec, theta, ctx);
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < h.size(); ++j) {
      if (h[j] > h[best]) best = j;
    }
    out.push_back(static_cast<Token>(best));
    ctx.push_back(static_cast<Token>(best));
  }
  return out;
}

namespace {

double mean_nll(const ModelSpec& spec, const Vector& theta, const TokenDataset& data) {
  if (data.pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : data.pairs) total += nll_value(logits(spec, theta, p.context), p.next);
  return total / static_cast<double>(data.pairs.size());
}

}  // namespace

MemorizationReport memorization_report(const ModelSpec& spec, const Vector& theta,
                                       const Corpus& corpus, int prompt_len, int completion_len) {
  if (prompt_len < 1 || completion_len < 1) {
    throw ConfigError("prompt_len", "prompt and completion lengths must be positive");
  }
  MemorizationReport r;
  std::size_t counted = 0;
  for (const auto& s : corpus.forget) {
    if (static_cast<std::size_t>(prompt_len + completion_len) > s.size()) {
      throw ConfigError("completion_len", "prompt_len + completion_len exceeds seq_len");
    }
    const Sequence prompt(s.begin(), s.begin() + prompt_len);
    const Sequence truth(s.begin() + prompt_len, s.begin() + prompt_len + completion_len);
    const Sequence got = greedy_continuation(spec, theta, prompt, completion_len);
    if (got == truth) r.exact_match_rate += 1.0;
    r.lcs_ratio += lcs_ratio(got, truth);
    ++counted;
  }
  if (counted > 0) {
    r.exact_match_rate /= static_cast<double>(counted);
    r.lcs_ratio /= static_cast<double>(counted);
  }
  r.nll_forget = mean_nll(spec, theta, corpus.forget_set(spec.context_len));
  r.nll_pretrain = mean_nll(spec, theta, corpus.pretrain_set(spec.context_len));
  return r;
}

double mean_forget_probability(const ModelSpec& spec, const Vector& theta,
                               const TokenDataset& forget) {
  if (forget.pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : forget.pairs) {
    total += std::exp(ll_value(logits(spec, theta, p.context), p.next));
  }
  return total / static_cast<double>(forget.pairs.size());
}

}  // namespace mtu
