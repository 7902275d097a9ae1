// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "g2s/app/dataset.hpp"
#include "g2s/chem/elements.hpp"
#include "g2s/chem/mol_graph.hpp"
#include "g2s/chem/smiles_parser.hpp"
#include "g2s/chem/smiles_writer.hpp"

namespace g2s::app {

class SpecInfeasible : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class SynthTask { Canonicalize, HalideSwap };

inline SynthTask synth_task_from(const std::string& s) {
  if (s == "canonicalize") return SynthTask::Canonicalize;
  if (s == "halide_swap") return SynthTask::HalideSwap;
  throw std::invalid_argument("unknown synthetic task: " + s);
}

struct SynthTaskSpec {
  SynthTask task = SynthTask::HalideSwap;
  int n_train = 2000;
  int n_valid = 200;
  int n_test = 200;
  int max_atoms = 10;
  std::uint64_t seed = 0;
  double ring_probability = 0.3;
};

inline std::string synth_task_name(SynthTask t) { return t == SynthTask::Canonicalize ? "canonicalize" : "halide_swap"; }

inline void to_json(nlohmann::json& j, const SynthTaskSpec& s) {
  j = nlohmann::json{{"task", synth_task_name(s.task)}, {"n_train", s.n_train},     {"n_valid", s.n_valid},
                     {"n_test", s.n_test},                {"max_atoms", s.max_atoms}, {"seed", s.seed},
                     {"ring_probability", s.ring_probability}};
}

inline void from_json(const nlohmann::json& j, SynthTaskSpec& s) {
  if (!j.is_object()) throw std::invalid_argument("synthetic task spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "task") s.task = synth_task_from(value.get<std::string>());
    else if (key == "n_train") s.n_train = value.get<int>();
    else if (key == "n_valid") s.n_valid = value.get<int>();
    else if (key == "n_test") s.n_test = value.get<int>();
    else if (key == "max_atoms") s.max_atoms = value.get<int>();
    else if (key == "seed") s.seed = value.get<std::uint64_t>();
    else if (key == "ring_probability") s.ring_probability = value.get<double>();
    else throw std::invalid_argument("unknown synthetic task key: " + key);
  }
}

/// One generated example written as "source>>target".
struct SynthRecord {
  std::string source;
  std::string target;
};

struct SynthDataset {
  std::vector<SynthRecord> train, valid, test;
};

namespace detail {

inline int max_valence(int element) {
  switch (element) {
    case chem::element::kC: return 4;
    case chem::element::kN: return 3;
    case chem::element::kO:
    case chem::element::kS: return 2;
    default: return 1;  // halogens
  }
}

inline bool is_halogen(int element) {
  return element == chem::element::kF || element == chem::element::kCl || element == chem::element::kBr;
}

inline int free_valence(const chem::MolGraph& g, int u) {
  return max_valence(g.atoms[static_cast<std::size_t>(u)].element) -
         static_cast<int>(g.bond_order_sum(u) + 0.5);
}

inline void assign_hydrogens(chem::MolGraph& g) {
  g.rebuild_adjacency();
  for (int u = 0; u < g.num_atoms(); ++u) {
    auto& a = g.atoms[static_cast<std::size_t>(u)];
    a.hydrogens = chem::implicit_hydrogens(a.element, a.charge, g.bond_order_sum(u));
  }
  g.finalize();
}

/// Hop counts from `src` over current bonds.
inline std::vector<int> hops_from(const chem::MolGraph& g, int src) {
  std::vector<int> d(static_cast<std::size_t>(g.num_atoms()), -1);
  std::vector<int> q{src};
  d[static_cast<std::size_t>(src)] = 0;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (int b : g.out_bonds(q[i])) {
      const int v = g.bonds[static_cast<std::size_t>(b)].dst;
      if (d[static_cast<std::size_t>(v)] < 0) {
        d[static_cast<std::size_t>(v)] = d[static_cast<std::size_t>(q[i])] + 1;
        q.push_back(v);
      }
    }
  return d;
}

/// Random connected heavy-atom skeleton over C, N, O, S with at most one
/// ring. Returns false if growth got stuck.
template <class Rng>
bool grow_skeleton(chem::MolGraph& g, int n_atoms, double ring_probability, Rng& rng) {
  static constexpr std::array<int, 4> kElems = {chem::element::kC, chem::element::kN, chem::element::kO,
                                                chem::element::kS};
  std::discrete_distribution<int> pick_elem({60, 15, 15, 10});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  g = chem::MolGraph{};
  chem::AtomRecord first;
  first.element = kElems[static_cast<std::size_t>(pick_elem(rng))];
  g.add_atom(first);
  g.rebuild_adjacency();
  while (g.num_atoms() < n_atoms) {
    std::vector<int> open;
    for (int u = 0; u < g.num_atoms(); ++u)
      if (free_valence(g, u) > 0) open.push_back(u);
    if (open.empty()) return false;
    const int parent = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
    chem::AtomRecord a;
    a.element = kElems[static_cast<std::size_t>(pick_elem(rng))];
    const int room = std::min(free_valence(g, parent), max_valence(a.element));
    chem::BondOrder order = chem::BondOrder::Single;
    const double roll = unit(rng);
    if (room >= 3 && roll < 0.04) order = chem::BondOrder::Triple;
    else if (room >= 2 && roll < 0.15) order = chem::BondOrder::Double;
    const int child = g.add_atom(a);
    g.add_bond(parent, child, order);
    g.rebuild_adjacency();
  }
  if (g.num_atoms() >= 3 && unit(rng) < ring_probability) {
    std::vector<std::pair<int, int>> pairs;
    for (int u = 0; u < g.num_atoms(); ++u) {
      if (free_valence(g, u) <= 0) continue;
      const auto d = hops_from(g, u);
      for (int v = u + 1; v < g.num_atoms(); ++v)
        if (free_valence(g, v) > 0 && d[static_cast<std::size_t>(v)] >= 2) pairs.emplace_back(u, v);
    }
    if (!pairs.empty()) {
      const auto [u, v] = pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)];
      g.add_bond(u, v, chem::BondOrder::Single);
      g.rebuild_adjacency();
    }
  }
  return true;
}

/// Attaches one halogen to a random atom with a free valence.
template <class Rng>
bool attach_halogen(chem::MolGraph& g, Rng& rng) {
  static constexpr std::array<int, 3> kHalogens = {chem::element::kF, chem::element::kCl, chem::element::kBr};
  std::vector<int> open;
  for (int u = 0; u < g.num_atoms(); ++u)
    if (free_valence(g, u) > 0) open.push_back(u);
  if (open.empty()) return false;
  const int host = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
  chem::AtomRecord x;
  x.element = kHalogens[std::uniform_int_distribution<std::size_t>(0, kHalogens.size() - 1)(rng)];
  const int id = g.add_atom(x);
  g.add_bond(host, id, chem::BondOrder::Single);
  g.rebuild_adjacency();
  return true;
}

}  // namespace detail

/// Replaces the single halogen of `g` by a hydroxyl oxygen.
inline chem::MolGraph swap_halide(const chem::MolGraph& g) {
  int found = -1;
  for (int u = 0; u < g.num_atoms(); ++u)
    if (detail::is_halogen(g.atoms[static_cast<std::size_t>(u)].element)) {
      if (found >= 0) throw std::invalid_argument("swap_halide: more than one halogen");
      found = u;
    }
  if (found < 0) throw std::invalid_argument("swap_halide: no halogen");
  chem::MolGraph out = g;
  auto& a = out.atoms[static_cast<std::size_t>(found)];
  a.element = chem::element::kO;
  a.charge = 0;
  a.isotope = 0;
  a.aromatic = false;
  a.hydrogens = chem::implicit_hydrogens(a.element, 0, out.bond_order_sum(found));
  out.finalize();
  return out;
}

/// Draws random molecules and builds the requested splits. A canonical
/// form (source or target) used by one split never appears in another.
inline SynthDataset generate_synthetic(const SynthTaskSpec& spec) {
  if (spec.max_atoms < 2) throw SpecInfeasible("max_atoms must be at least 2");
  if (spec.n_train < 0 || spec.n_valid < 0 || spec.n_test < 0) throw SpecInfeasible("split sizes must be non-negative");
  std::mt19937_64 rng(spec.seed);
  SynthDataset ds;
  std::unordered_map<std::string, int> owner;  // canonical form -> split
  std::array<std::vector<SynthRecord>*, 3> splits = {&ds.train, &ds.valid, &ds.test};
  const std::array<int, 3> wanted = {spec.n_train, spec.n_valid, spec.n_test};
  const bool swap = spec.task == SynthTask::HalideSwap;
  for (int s = 0; s < 3; ++s) {
    long attempts = 0;
    const long max_attempts = 200L * (wanted[static_cast<std::size_t>(s)] + 10);
    while (static_cast<int>(splits[static_cast<std::size_t>(s)]->size()) < wanted[static_cast<std::size_t>(s)]) {
      if (++attempts > max_attempts)
        throw SpecInfeasible("could not draw enough distinct molecules with max_atoms=" +
                             std::to_string(spec.max_atoms));
      const int n = std::uniform_int_distribution<int>(2, spec.max_atoms)(rng);
      chem::MolGraph g;
      if (!detail::grow_skeleton(g, swap ? n - 1 : n, spec.ring_probability, rng)) continue;
      if (swap && !detail::attach_halogen(g, rng)) continue;
      detail::assign_hydrogens(g);
      const std::string source = chem::write_random(g, rng);
      const std::string source_canon = chem::write_canonical(g);
      const std::string target = swap ? chem::write_canonical(swap_halide(g)) : source_canon;
      // the written forms must survive a parse
      if (chem::canonicalize(source) != source_canon || chem::canonicalize(target) != target) continue;
      auto taken = [&](const std::string& key) {
        auto it = owner.find(key);
        return it != owner.end() && it->second != s;
      };
      // each source molecule is used once; a target may repeat within a split
      if (owner.count(source_canon) || taken(target)) continue;
      owner[source_canon] = s;
      owner[target] = s;
      splits[static_cast<std::size_t>(s)]->push_back({source, target});
    }
  }
  return ds;
}

/// Writes train.txt, valid.txt, test.txt as "reactants>>products" lines.
inline void write_synthetic(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::array<std::pair<const char*, const std::vector<SynthRecord>*>, 3> files = {
      {{"train.txt", &ds.train}, {"valid.txt", &ds.valid}, {"test.txt", &ds.test}}};
  for (const auto& [name, recs] : files) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    for (const auto& r : *recs) os << r.source << ">>" << r.target << '\n';
  }
}

/// Vocabulary over the target tokens of `records`.
inline model::Vocab target_vocab(const std::vector<SynthRecord>& records) {
  std::vector<std::vector<std::string>> seqs;
  seqs.reserve(records.size());
  for (const auto& r : records) seqs.push_back(chem::tokenize_strings(r.target));
  return model::Vocab::build(seqs);
}

inline std::vector<Example> synth_examples(const std::vector<SynthRecord>& records, const model::Vocab& vocab) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(make_example(encode_example({r.source, "", r.target}, vocab)));
  return out;
}

}  // namespace g2s::app
