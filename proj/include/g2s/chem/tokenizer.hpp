// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace g2s::chem {

/// The SMILES token pattern used for model targets.
inline constexpr const char* kSmilesTokenPattern =
    R"((\[[^\]]+]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p|\(|\)|\.|=|#|-|\+|\\|\/|:|~|@|\?|>|\*|\$|\%[0-9]{2}|[0-9]))";

struct Token {
  std::string text;
  std::size_t offset = 0;  // byte offset in the source string

  friend bool operator==(const Token& a, const Token& b) { return a.text == b.text; }
};

/// Splits a SMILES string into tokens. Total: characters the pattern does
/// not cover become single-character tokens, so the tokens always
/// concatenate back to the input.
inline std::vector<Token> tokenize(std::string_view smiles) {
  static const std::regex re(kSmilesTokenPattern);
  std::vector<Token> out;
  auto it = smiles.begin();
  while (it != smiles.end()) {
    std::match_results<std::string_view::const_iterator> m;
    const auto offset = static_cast<std::size_t>(it - smiles.begin());
    if (std::regex_search(it, smiles.end(), m, re, std::regex_constants::match_continuous)) {
      out.push_back({m.str(), offset});
      it += m.length();
    } else {
      out.push_back({std::string(1, *it), offset});
      ++it;
    }
  }
  return out;
}

inline std::vector<std::string> tokenize_strings(std::string_view smiles) {
  std::vector<std::string> out;
  for (auto& t : tokenize(smiles)) out.push_back(std::move(t.text));
  return out;
}

inline std::string detokenize(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += t;
  return s;
}

}  // namespace g2s::chem
