// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "g2s/chem/tokenizer.hpp"
#include "g2s/graph/batch.hpp"

namespace g2s::model {

inline constexpr std::array<std::string_view, 4> kSpecialTokens = {"<pad>", "<s>", "</s>", "<unk>"};

class Vocab {
 public:
  Vocab() {
    for (auto s : kSpecialTokens) push(std::string(s));
  }

  /// Ordered by descending frequency, ties by first occurrence.
  static Vocab build(const std::vector<std::vector<std::string>>& sequences) {
    std::unordered_map<std::string, std::pair<long, std::size_t>> stats;  // count, first seen
    std::size_t order = 0;
    for (const auto& seq : sequences)
      for (const auto& tok : seq) {
        auto [it, inserted] = stats.try_emplace(tok, 0, order);
        if (inserted) ++order;
        ++it->second.first;
      }
    std::vector<std::pair<std::string, std::pair<long, std::size_t>>> items(stats.begin(), stats.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second.first != b.second.first) return a.second.first > b.second.first;
      return a.second.second < b.second.second;
    });
    Vocab v;
    for (const auto& [tok, _] : items) v.push(tok);
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? graph::kUnk : it->second;
  }

  /// Token ids of a SMILES string followed by EOS.
  std::vector<int> encode(std::string_view smiles) const {
    std::vector<int> out;
    for (const auto& t : chem::tokenize(smiles)) out.push_back(id(t.text));
    out.push_back(graph::kEos);
    return out;
  }

  /// Concatenates tokens up to the first EOS, skipping specials.
  std::string decode(std::span<const int> ids) const {
    std::string s;
    for (int i : ids) {
      if (i == graph::kEos) break;
      if (i < static_cast<int>(kSpecialTokens.size())) continue;
      s += token(i);
    }
    return s;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write vocab " + path);
    for (const auto& t : tokens_) os << t << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read vocab " + path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(is, line);) lines.push_back(line);
    if (lines.size() < kSpecialTokens.size()) throw std::runtime_error("vocab file too short: " + path);
    for (std::size_t i = 0; i < kSpecialTokens.size(); ++i)
      if (lines[i] != kSpecialTokens[i]) throw std::runtime_error("vocab file " + path + " lacks the special tokens");
    Vocab v;
    for (std::size_t i = kSpecialTokens.size(); i < lines.size(); ++i) v.push(lines[i]);
    return v;
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void push(std::string tok) {
    if (ids_.count(tok)) throw std::invalid_argument("duplicate vocab token: " + tok);
    ids_[tok] = static_cast<int>(tokens_.size());
    tokens_.push_back(std::move(tok));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace g2s::model
