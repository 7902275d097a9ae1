// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "g2s/chem/smiles_parser.hpp"
#include "g2s/chem/tokenizer.hpp"
#include "g2s/graph/batch.hpp"
#include "g2s/graph/featurize.hpp"
#include "g2s/model/vocab.hpp"

namespace g2s::app {

enum class Direction { Forward, Retro };

inline Direction direction_from(const std::string& s) {
  if (s == "forward") return Direction::Forward;
  if (s == "retro") return Direction::Retro;
  throw std::invalid_argument("unknown direction: " + s);
}

struct ReactionRecord {
  std::string reactants;
  std::string reagents;
  std::string products;
  Direction direction = Direction::Forward;

  /// Forward: reactants (with reagents dot-merged unless kept apart) to
  /// products. Retro: products to reactants.
  std::string source(bool merge_reagents = true) const {
    if (direction == Direction::Retro) return products;
    if (merge_reagents && !reagents.empty()) return reactants + "." + reagents;
    return reactants;
  }
  std::string target() const { return direction == Direction::Retro ? reactants : products; }
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "reactants>reagents>products"; every non-empty field must parse.
inline ReactionRecord parse_reaction(const std::string& line, Direction dir = Direction::Forward) {
  const auto a = line.find('>');
  const auto b = a == std::string::npos ? std::string::npos : line.find('>', a + 1);
  if (b == std::string::npos || line.find('>', b + 1) != std::string::npos)
    throw DatasetError("expected reactants>reagents>products");
  ReactionRecord r{line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1), dir};
  if (r.reactants.empty() || r.products.empty()) throw DatasetError("empty reactants or products");
  for (const auto* f : {&r.reactants, &r.reagents, &r.products}) {
    if (f->empty()) continue;
    try {
      chem::parse_smiles(*f);
    } catch (const chem::SmilesError& e) {
      throw DatasetError(std::string("unparseable SMILES '") + *f + "': " + e.what());
    }
  }
  return r;
}

/// Reads a reaction file, collecting line-numbered errors for bad lines.
inline std::vector<ReactionRecord> read_reactions(const std::filesystem::path& path, Direction dir,
                                                  std::vector<std::string>* errors = nullptr) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot read " + path.string());
  std::vector<ReactionRecord> out;
  int lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(parse_reaction(line, dir));
    } catch (const DatasetError& e) {
      if (!errors) throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      errors->push_back(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// One tokenized example as stored in the binary dataset files.
struct EncodedExample {
  std::string source;
  std::string target;
  std::uint32_t source_tokens = 0;
  std::vector<int> target_ids;  // ends in EOS
};

inline constexpr char kDatasetMagic[4] = {'G', '2', 'S', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;

namespace detail {
template <class U>
void put(std::ostream& os, U v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}
template <class U>
U take(std::istream& is) {
  U v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(U))) throw DatasetError("dataset file truncated");
  return v;
}
inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string take_string(std::istream& is) {
  std::string s(take<std::uint32_t>(is), '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(s.size()))) throw DatasetError("dataset file truncated");
  return s;
}
}  // namespace detail

inline void write_examples(const std::filesystem::path& path, const std::vector<EncodedExample>& xs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DatasetError("cannot write " + path.string());
  os.write(kDatasetMagic, 4);
  detail::put<std::uint32_t>(os, kDatasetVersion);
  detail::put<std::uint64_t>(os, xs.size());
  for (const auto& x : xs) {
    detail::put_string(os, x.source);
    detail::put_string(os, x.target);
    detail::put<std::uint32_t>(os, x.source_tokens);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(x.target_ids.size()));
    for (int id : x.target_ids) detail::put<std::int32_t>(os, id);
  }
}

inline std::vector<EncodedExample> read_examples(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot read " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kDatasetMagic, 4))
    throw DatasetError(path.string() + " is not a dataset file");
  if (detail::take<std::uint32_t>(is) != kDatasetVersion) throw DatasetError("unsupported dataset version");
  const auto n = detail::take<std::uint64_t>(is);
  std::vector<EncodedExample> xs(n);
  for (auto& x : xs) {
    x.source = detail::take_string(is);
    x.target = detail::take_string(is);
    x.source_tokens = detail::take<std::uint32_t>(is);
    x.target_ids.resize(detail::take<std::uint32_t>(is));
    for (auto& id : x.target_ids) id = detail::take<std::int32_t>(is);
  }
  return xs;
}

inline EncodedExample encode_example(const ReactionRecord& r, const model::Vocab& vocab, bool merge_reagents = true) {
  EncodedExample x;
  x.source = r.source(merge_reagents);
  x.target = r.target();
  x.source_tokens = static_cast<std::uint32_t>(chem::tokenize(x.source).size());
  x.target_ids = vocab.encode(x.target);
  return x;
}

struct PreprocessSummary {
  std::size_t lines_kept = 0;
  std::vector<std::string> errors;
};

/// Builds the vocabulary from training targets and writes vocab.txt plus
/// one .bin dataset per input split into `out_dir`.
inline PreprocessSummary preprocess(const std::vector<std::pair<std::string, std::filesystem::path>>& splits,
                                    const std::filesystem::path& out_dir, Direction dir, bool merge_reagents = true) {
  if (splits.empty() || splits.front().first != "train") throw DatasetError("preprocess needs a train split first");
  std::filesystem::create_directories(out_dir);
  PreprocessSummary summary;
  std::vector<std::vector<ReactionRecord>> records;
  for (const auto& [name, path] : splits) {
    records.push_back(read_reactions(path, dir, &summary.errors));
    summary.lines_kept += records.back().size();
  }
  std::vector<std::vector<std::string>> target_tokens;
  for (const auto& r : records.front()) target_tokens.push_back(chem::tokenize_strings(r.target()));
  const auto vocab = model::Vocab::build(target_tokens);
  vocab.save((out_dir / "vocab.txt").string());
  for (std::size_t s = 0; s < splits.size(); ++s) {
    std::vector<EncodedExample> xs;
    for (const auto& r : records[s]) xs.push_back(encode_example(r, vocab, merge_reagents));
    write_examples(out_dir / (splits[s].first + ".bin"), xs);
  }
  return summary;
}

/// An example ready for batching: featurized source graph plus target ids.
struct Example {
  graph::FeaturizedGraph graph;
  std::vector<int> target_ids;
  std::string source;
  std::string target;
  int source_tokens = 0;
};

inline Example make_example(const EncodedExample& x) {
  Example e;
  e.graph = graph::featurize(chem::parse_smiles(x.source));
  e.target_ids = x.target_ids;
  e.source = x.source;
  e.target = x.target;
  e.source_tokens = static_cast<int>(x.source_tokens);
  return e;
}

inline std::vector<Example> make_examples(const std::vector<EncodedExample>& xs) {
  std::vector<Example> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(make_example(x));
  return out;
}

/// Packs the selected examples into one batch.
inline graph::Batch collate_examples(const std::vector<Example>& xs, const std::vector<std::size_t>& idx) {
  std::vector<const graph::FeaturizedGraph*> gs;
  std::vector<const std::vector<int>*> ts;
  for (auto i : idx) {
    gs.push_back(&xs[i].graph);
    ts.push_back(&xs[i].target_ids);
  }
  return graph::collate(gs, ts);
}

}  // namespace g2s::app
