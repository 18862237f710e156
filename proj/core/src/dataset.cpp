#include "mtu/dataset.hpp"

#include "mtu/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <string>

namespace mtu {

TokenDataset TokenDataset::from_sequences(std::vector<Sequence> sequences,
                                          int context_len, DatasetRole role) {
  if (context_len < 1) throw ConfigError("context_len", "must be positive");
  TokenDataset out;
  out.role = role;
  out.context_len = context_len;
  for (const auto& s : sequences) {
    for (std::size_t t = 1; t < s.size(); ++t) {
      const std::size_t begin = t > static_cast<std::size_t>(context_len)
                                    ? t - static_cast<std::size_t>(context_len)
                                    : 0;
      out.pairs.push_back({Sequence(s.begin() + static_cast<std::ptrdiff_t>(begin),
                                    s.begin() + static_cast<std::ptrdiff_t>(t)),
                           s[t]});
    }
  }
  out.sequences = std::move(sequences);
  return out;
}

TokenDataset TokenDataset::select_pairs(std::span<const std::size_t> indices) const {
  TokenDataset out;
  out.role = role;
  out.context_len = context_len;
  out.pairs.reserve(indices.size());
  for (auto i : indices) out.pairs.push_back(pairs.at(i));
  return out;
}

TokenDataset TokenDataset::select_sequences(std::span<const std::size_t> indices) const {
  std::vector<Sequence> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(sequences.at(i));
  return from_sequences(std::move(picked), context_len, role);
}

void TokenDataset::validate(int vocab_size) const {
  auto check = [&](Token tok) {
    if (tok < 0 || tok >= vocab_size) {
      throw ConfigError("tokens", "token id " + std::to_string(tok) +
                                      " outside vocabulary of size " +
                                      std::to_string(vocab_size));
    }
  };
  for (const auto& p : pairs) {
    if (p.context.empty() || p.context.size() > static_cast<std::size_t>(context_len)) {
      throw ConfigError("context", "context length must be in [1, context_len]");
    }
    std::for_each(p.context.begin(), p.context.end(), check);
    check(p.next);
  }
}

TokenDataset load_dataset(const std::filesystem::path& path, int context_len,
                          DatasetRole role) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset file " + path.string());
  std::vector<Sequence> sequences;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      sequences.push_back(j.at("tokens").get<Sequence>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno), e.what());
    }
  }
  return TokenDataset::from_sequences(std::move(sequences), context_len, role);
}

void save_dataset(const std::filesystem::path& path,
                  const std::vector<Sequence>& sequences) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset file " + path.string());
  for (const auto& s : sequences) {
    out << nlohmann::json{{"tokens", s}}.dump() << '\n';
  }
}

}  // namespace mtu
