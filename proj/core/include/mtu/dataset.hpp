#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace mtu {

using Token = int;
using Sequence = std::vector<Token>;

/// One next-token example: the (truncated) context and the token that follows.
struct TokenPair {
  Sequence context;
  Token next = 0;
};

enum class DatasetRole { Forget, Pretrain };

/// Token sequences together with their (context, next) expansion.
///
/// Every sequence s contributes the pairs (s[max(0,t-C):t], s[t]) for
/// 1 <= t < |s|, where C is the context length the set was built with.
struct TokenDataset {
  std::vector<Sequence> sequences;
  std::vector<TokenPair> pairs;
  DatasetRole role = DatasetRole::Forget;
  int context_len = 1;

  static TokenDataset from_sequences(std::vector<Sequence> sequences,
                                     int context_len, DatasetRole role);

  bool empty() const noexcept { return pairs.empty(); }

  /// Subset of pairs by index (sequences left empty).
  TokenDataset select_pairs(std::span<const std::size_t> indices) const;
  /// Subset of whole sequences by index, re-expanded into pairs.
  TokenDataset select_sequences(std::span<const std::size_t> indices) const;

  /// Throws ConfigError if any token is >= vocab_size or negative.
  void validate(int vocab_size) const;
};

/// JSON-lines loader: one {"tokens": [int, ...]} object per line.
TokenDataset load_dataset(const std::filesystem::path& path, int context_len,
                          DatasetRole role);
void save_dataset(const std::filesystem::path& path,
                  const std::vector<Sequence>& sequences);

}  // namespace mtu
