// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxfuse/tokenizer.hpp"

#include "voxfuse/errors.hpp"
#include "voxfuse/model.hpp"

namespace voxfuse {

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c >= kAlphabet.front() && c <= kAlphabet.back()) {
      ids.push_back(c - kAlphabet.front());
    } else if (c == kBosSymbol) {
      ids.push_back(kBos);
    } else if (c == kEosSymbol) {
      ids.push_back(kEos);
    } else {
      throw EncodingError("tokenize: symbol '" + std::string(1, c) + "' at offset " + std::to_string(i) +
                          " is not in the alphabet");
    }
  }
  return ids;
}

std::string detokenize(std::span<const int> tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int t = tokens[i];
    if (t >= 0 && t < kAlphabetSize) {
      out += kAlphabet[static_cast<std::size_t>(t)];
    } else if (t == kBos) {
      out += kBosSymbol;
    } else if (t == kEos) {
      out += kEosSymbol;
    } else {
      throw EncodingError("detokenize: id " + std::to_string(t) + " at offset " + std::to_string(i) +
                          " is outside the vocabulary");
    }
  }
  return out;
}

}  // namespace voxfuse
