// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "g2s/app/synthetic.hpp"
#include "g2s/chem/mol_graph.hpp"
#include "g2s/chem/smiles_parser.hpp"
#include "g2s/chem/smiles_writer.hpp"
#include "g2s/graph/featurize.hpp"

namespace g2s::fixtures {

// Parser fixtures covering the supported grammar.
inline const std::vector<std::string>& smiles_fixtures() {
  static const std::vector<std::string> xs = {
      "C",
      "CCO",
      "OCC",
      "CC(=O)O",
      "C1CC1",
      "C.C",
      "c1ccccc1",
      "c1ccncc1",
      "Cc1ccc(O)cc1",
      "C#N",
      "C=C=C",
      "O=C(O)c1ccccc1C(=O)O",
      "[NH4+]",
      "[O-]C(=O)C",
      "[Na+].[Cl-]",
      "C[N+](C)(C)C",
      "[13CH4]",
      "N[C@@H](C)C(=O)O",
      "N[C@H](C)C(=O)O",
      "F/C=C/F",
      "F/C=C\\F",
      "C1CC2CCC1CC2",
      "C%12CCCCC%12",
      "CS(=O)(=O)C",
      "OP(=O)(O)O",
      "BrCCCl",
      "ClC(Cl)(Cl)Cl",
      "c1ccc2ccccc2c1",
      "C1=CC=CC=C1",
      "CC(C)(C)C(=O)OC",
      "O=[N+]([O-])c1ccccc1",
      "CCN(CC)CC.Cl",
      "[Fe+2]",
      "C-C",
      "c1cc[nH]c1",
      "N#CC(=O)Cl",
      "*C",
  };
  return xs;
}

// Random connected molecule from the synthetic grammar, plus up to two extra
// ring closures so multi-ring graphs are covered too.
template <class Rng>
chem::MolGraph random_molecule(int max_atoms, Rng& rng) {
  chem::MolGraph g;
  while (true) {
    const int n = std::uniform_int_distribution<int>(1, max_atoms)(rng);
    if (!app::detail::grow_skeleton(g, n, 0.5, rng)) continue;
    const int extra = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int k = 0; k < extra; ++k) {
      std::vector<std::pair<int, int>> pairs;
      for (int u = 0; u < g.num_atoms(); ++u)
        for (int v = u + 1; v < g.num_atoms(); ++v)
          if (app::detail::free_valence(g, u) > 0 && app::detail::free_valence(g, v) > 0 && g.find_bond(u, v) < 0)
            pairs.emplace_back(u, v);
      if (pairs.empty()) break;
      const auto [u, v] = pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)];
      g.add_bond(u, v, chem::BondOrder::Single);
      g.rebuild_adjacency();
    }
    app::detail::assign_hydrogens(g);
    return g;
  }
}

template <class Rng>
std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Arbitrary undirected topology (possibly disconnected, no chemistry).
template <class Rng>
chem::MolGraph random_topology(int n, double edge_probability, Rng& rng) {
  chem::MolGraph g;
  for (int i = 0; i < n; ++i) g.add_atom({});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (unit(rng) < edge_probability) g.add_bond(u, v, chem::BondOrder::Single);
  g.finalize();
  return g;
}

inline std::vector<int> floyd_warshall(const chem::MolGraph& g) {
  const auto n = static_cast<std::size_t>(g.num_atoms());
  const long inf = 1L << 40;
  std::vector<long> d(n * n, inf);
  for (std::size_t i = 0; i < n; ++i) d[i * n + i] = 0;
  for (const auto& b : g.bonds) d[static_cast<std::size_t>(b.src) * n + static_cast<std::size_t>(b.dst)] = 1;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::min(d[i * n + j], d[i * n + k] + d[k * n + j]);
  std::vector<int> out(n * n);
  for (std::size_t i = 0; i < n * n; ++i) out[i] = d[i] >= inf ? graph::kDistanceInf : static_cast<int>(d[i]);
  return out;
}

// Brute-force isomorphism over atom data and bond orders; small graphs only.
inline bool isomorphic(const chem::MolGraph& a, const chem::MolGraph& b) {
  if (a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds()) return false;
  const int n = a.num_atoms();
  auto same_atom = [&](int u, int v) {
    const auto& x = a.atoms[static_cast<std::size_t>(u)];
    const auto& y = b.atoms[static_cast<std::size_t>(v)];
    return x.element == y.element && x.charge == y.charge && x.hydrogens == y.hydrogens && x.aromatic == y.aromatic &&
           x.isotope == y.isotope && (x.chirality == chem::Chirality::None) == (y.chirality == chem::Chirality::None) &&
           a.degree(u) == b.degree(v);
  };
  std::vector<int> map(static_cast<std::size_t>(n), -1);
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  auto extend = [&](auto&& self, int u) -> bool {
    if (u == n) return true;
    for (int v = 0; v < n; ++v) {
      if (used[static_cast<std::size_t>(v)] || !same_atom(u, v)) continue;
      bool ok = true;
      for (int w = 0; w < u && ok; ++w) {
        const int ab = a.find_bond(u, w);
        const int bb = b.find_bond(v, map[static_cast<std::size_t>(w)]);
        if ((ab < 0) != (bb < 0)) ok = false;
        else if (ab >= 0 && a.bonds[static_cast<std::size_t>(ab)].order != b.bonds[static_cast<std::size_t>(bb)].order)
          ok = false;
      }
      if (!ok) continue;
      map[static_cast<std::size_t>(u)] = v;
      used[static_cast<std::size_t>(v)] = true;
      if (self(self, u + 1)) return true;
      used[static_cast<std::size_t>(v)] = false;
    }
    return false;
  };
  return extend(extend, 0);
}

}  // namespace g2s::fixtures
