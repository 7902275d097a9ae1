// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <span>
#include <string_view>
#include <vector>

#include "g2s/chem/elements.hpp"
#include "g2s/chem/mol_graph.hpp"

namespace g2s::graph {

/// Compressed lists: members of list i are indices[offsets[i] .. offsets[i+1]).
struct Csr {
  std::vector<int> offsets{0};
  std::vector<int> indices;

  int size() const { return static_cast<int>(offsets.size()) - 1; }
  std::span<const int> operator[](int i) const {
    const auto b = static_cast<std::size_t>(offsets[static_cast<std::size_t>(i)]);
    const auto e = static_cast<std::size_t>(offsets[static_cast<std::size_t>(i) + 1]);
    return std::span<const int>(indices).subspan(b, e - b);
  }
  void push_list(std::span<const int> xs) {
    indices.insert(indices.end(), xs.begin(), xs.end());
    offsets.push_back(static_cast<int>(indices.size()));
  }
};

// Atom symbol vocabulary for the one-hot symbol block; the last slot takes
// every element not listed.
inline constexpr std::array<std::string_view, 65> kAtomSymbols = {
    "C",  "N",  "O",  "S",  "F",  "Si", "P",  "Cl", "Br", "Mg", "Na", "Ca", "Fe",
    "As", "Al", "I",  "B",  "V",  "K",  "Tl", "Yb", "Sb", "Sn", "Ag", "Pd", "Co",
    "Se", "Ti", "Zn", "H",  "Li", "Ge", "Cu", "Au", "Ni", "Cd", "In", "Mn", "Zr",
    "Cr", "Pt", "Hg", "Pb", "W",  "Ru", "Nb", "Re", "Te", "Rh", "Tc", "Ba", "Bi",
    "Hf", "Mo", "U",  "Sm", "Os", "Ir", "Ce", "Gd", "Ga", "Cs", "Sr", "*",  "unk"};

// Block sizes of the atom vector, in layout order.
inline constexpr std::array<int, 8> kAtomBlocks = {65, 10, 5, 7, 5, 5, 3, 2};
// Block sizes of the bond vector, in layout order.
inline constexpr std::array<int, 4> kBondBlocks = {5, 3, 2, 2};

inline constexpr int block_total(std::span<const int> blocks) {
  int s = 0;
  for (int b : blocks) s += b;
  return s;
}
inline constexpr int kAtomFeatureDim = 102;
inline constexpr int kBondFeatureDim = 12;
static_assert(block_total(kAtomBlocks) == kAtomFeatureDim);
static_assert(block_total(kBondBlocks) == kBondFeatureDim);

inline constexpr int kDistanceInf = 1 << 15;
inline constexpr int kNumBuckets = 11;

enum class Hybridization { SP, SP2, SP3, SP3D, SP3D2 };

inline int symbol_slot(int element) {
  const auto sym = chem::element_symbol(element);
  for (std::size_t i = 0; i + 1 < kAtomSymbols.size(); ++i)
    if (kAtomSymbols[i] == sym) return static_cast<int>(i);
  return static_cast<int>(kAtomSymbols.size()) - 1;
}

inline Hybridization hybridization(const chem::MolGraph& g, int u) {
  const int deg = g.degree(u);
  if (deg == 5) return Hybridization::SP3D;
  if (deg == 6) return Hybridization::SP3D2;
  int doubles = 0, triples = 0, aromatic = 0;
  for (int b : g.out_bonds(u)) {
    switch (g.bonds[static_cast<std::size_t>(b)].order) {
      case chem::BondOrder::Double:
        ++doubles;
        break;
      case chem::BondOrder::Triple:
        ++triples;
        break;
      case chem::BondOrder::Aromatic:
        ++aromatic;
        break;
      default:
        break;
    }
  }
  if (triples > 0 || doubles >= 2) return Hybridization::SP;
  if (doubles == 1 || aromatic > 0) return Hybridization::SP2;
  return Hybridization::SP3;
}

/// Clamps v into [0, size) with out-of-range values mapped to the last slot.
inline int clamp_slot(int v, int size) { return (v < 0 || v >= size) ? size - 1 : v; }

/// Per-atom block indices (one entry per block of kAtomBlocks).
inline std::array<int, 8> atom_feature_slots(const chem::MolGraph& g, int u) {
  const auto& a = g.atoms[static_cast<std::size_t>(u)];
  const int valency = static_cast<int>(std::floor(g.bond_order_sum(u) + 1e-9)) + a.hydrogens;
  int chir = 2;
  if (a.chirality == chem::Chirality::CCW) chir = 0;
  if (a.chirality == chem::Chirality::CW) chir = 1;
  return {symbol_slot(a.element),
          clamp_slot(g.degree(u), 10),
          clamp_slot(a.charge + 2, 5),
          clamp_slot(valency, 7),
          static_cast<int>(hybridization(g, u)),
          std::min(a.hydrogens, 4),
          chir,
          a.aromatic ? 0 : 1};
}

inline std::array<int, 4> bond_feature_slots(const chem::BondRecord& b) {
  int stereo = 2;
  if (b.stereo == chem::BondStereo::Up) stereo = 0;
  if (b.stereo == chem::BondStereo::Down) stereo = 1;
  return {static_cast<int>(b.order), stereo, b.conjugated ? 0 : 1, b.ring ? 0 : 1};
}

/// All-pairs shortest path lengths by BFS; unreachable pairs hold kDistanceInf.
inline std::vector<int> shortest_paths(const chem::MolGraph& g) {
  const auto n = static_cast<std::size_t>(g.num_atoms());
  std::vector<int> d(n * n, kDistanceInf);
  std::deque<int> q;
  for (std::size_t s = 0; s < n; ++s) {
    int* row = d.data() + s * n;
    row[s] = 0;
    q.assign(1, static_cast<int>(s));
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      for (int b : g.out_bonds(u)) {
        const auto v = static_cast<std::size_t>(g.bonds[static_cast<std::size_t>(b)].dst);
        if (row[v] == kDistanceInf) {
          row[v] = row[static_cast<std::size_t>(u)] + 1;
          q.push_back(static_cast<int>(v));
        }
      }
    }
  }
  return d;
}

/// Distance bucket: exact below 8, 8 for [8, 15), 9 for longer paths within
/// one molecule, 10 across molecules.
inline int bucketize(int distance, bool same_molecule) {
  if (!same_molecule) return 10;
  if (distance < 8) return distance;
  if (distance < 15) return 8;
  return 9;
}

/// Model-ready view of one (possibly multi-molecule) input graph.
struct FeaturizedGraph {
  int num_atoms = 0;
  int num_edges = 0;  // directed
  std::vector<float> atom_feats;  // num_atoms x kAtomFeatureDim
  std::vector<float> bond_feats;  // num_edges x kBondFeatureDim
  std::vector<int> edge_src;
  std::vector<int> edge_dst;
  Csr incoming;      // per directed bond (u,v): bonds (w,u), w != v
  Csr incoming_all;  // per atom u: bonds (w,u)
  std::vector<int> buckets;  // num_atoms x num_atoms
};

inline FeaturizedGraph featurize(const chem::MolGraph& g) {
  FeaturizedGraph f;
  f.num_atoms = g.num_atoms();
  f.num_edges = g.num_bonds();
  const auto n = static_cast<std::size_t>(f.num_atoms);
  f.atom_feats.assign(n * kAtomFeatureDim, 0.0f);
  for (int u = 0; u < f.num_atoms; ++u) {
    const auto slots = atom_feature_slots(g, u);
    int base = 0;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      f.atom_feats[static_cast<std::size_t>(u) * kAtomFeatureDim + static_cast<std::size_t>(base + slots[k])] = 1.0f;
      base += kAtomBlocks[k];
    }
  }
  f.bond_feats.assign(g.bonds.size() * kBondFeatureDim, 0.0f);
  for (int e = 0; e < f.num_edges; ++e) {
    const auto& b = g.bonds[static_cast<std::size_t>(e)];
    f.edge_src.push_back(b.src);
    f.edge_dst.push_back(b.dst);
    const auto slots = bond_feature_slots(b);
    int base = 0;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      f.bond_feats[static_cast<std::size_t>(e) * kBondFeatureDim + static_cast<std::size_t>(base + slots[k])] = 1.0f;
      base += kBondBlocks[k];
    }
  }
  std::vector<int> list;
  for (int e = 0; e < f.num_edges; ++e) {
    const auto& b = g.bonds[static_cast<std::size_t>(e)];
    list.clear();
    for (int out : g.out_bonds(b.src)) {
      const int in = g.rev[static_cast<std::size_t>(out)];  // (w, u)
      if (g.bonds[static_cast<std::size_t>(in)].src != b.dst) list.push_back(in);
    }
    std::sort(list.begin(), list.end());
    f.incoming.push_list(list);
  }
  for (int u = 0; u < f.num_atoms; ++u) {
    list.clear();
    for (int out : g.out_bonds(u)) list.push_back(g.rev[static_cast<std::size_t>(out)]);
    std::sort(list.begin(), list.end());
    f.incoming_all.push_list(list);
  }
  const auto dist = shortest_paths(g);
  f.buckets.resize(n * n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v)
      f.buckets[u * n + v] = bucketize(dist[u * n + v], g.component[u] == g.component[v]);
  return f;
}

}  // namespace g2s::graph
