// Copyright 2026 The voxfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace voxfuse {

/// Sorted 16-symbol alphabet; a symbol's id is its index.
inline constexpr std::string_view kAlphabet = "abcdefghijklmnop";
/// Text forms of the BOS and EOS specials.
inline constexpr char kBosSymbol = '<';
inline constexpr char kEosSymbol = '>';

std::vector<int> tokenize(std::string_view text);
std::string detokenize(std::span<const int> tokens);

}  // namespace voxfuse
