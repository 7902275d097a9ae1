// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

namespace g2s::chem {

enum class BondOrder : std::uint8_t { Single, Double, Triple, Aromatic };
enum class Chirality : std::uint8_t { None, CCW, CW };  // '@' and '@@'
enum class BondStereo : std::uint8_t { None, Up, Down };  // '/' and '\'

// Marks the implicit hydrogen inside AtomRecord::chiral_order.
inline constexpr int kImplicitH = -1;

struct AtomRecord {
  int element = 6;
  int charge = 0;
  int hydrogens = 0;  // total attached hydrogens
  bool aromatic = false;
  Chirality chirality = Chirality::None;
  int isotope = 0;
  // Neighbor order the chirality tag refers to (atom ids, kImplicitH for the
  // bracket hydrogen). Empty unless chirality != None.
  std::vector<int> chiral_order;
};

// One direction of a bond. The reverse direction lives at rev[id].
struct BondRecord {
  int src = 0;
  int dst = 0;
  BondOrder order = BondOrder::Single;
  BondStereo stereo = BondStereo::None;  // as seen walking src -> dst
  bool ring = false;
  bool conjugated = false;
};

inline BondStereo flip(BondStereo s) {
  switch (s) {
    case BondStereo::Up:
      return BondStereo::Down;
    case BondStereo::Down:
      return BondStereo::Up;
    default:
      return BondStereo::None;
  }
}

inline double bond_valence(BondOrder o) {
  switch (o) {
    case BondOrder::Single:
      return 1.0;
    case BondOrder::Double:
      return 2.0;
    case BondOrder::Triple:
      return 3.0;
    case BondOrder::Aromatic:
      return 1.5;
  }
  return 1.0;
}

/// Molecular graph with both directions of every bond materialized.
/// Directed bonds are stored in reverse pairs (2k, 2k+1).
class MolGraph {
 public:
  std::vector<AtomRecord> atoms;
  std::vector<BondRecord> bonds;
  std::vector<int> rev;
  std::vector<int> component;

  int num_atoms() const { return static_cast<int>(atoms.size()); }
  int num_bonds() const { return static_cast<int>(bonds.size()); }  // directed
  int num_components() const {
    int n = 0;
    for (int c : component) n = std::max(n, c + 1);
    return n;
  }

  int add_atom(AtomRecord a) {
    atoms.push_back(std::move(a));
    out_.emplace_back();
    return num_atoms() - 1;
  }

  // Adds u->v and v->u; returns the id of u->v.
  int add_bond(int u, int v, BondOrder order, BondStereo stereo_uv = BondStereo::None) {
    const int id = num_bonds();
    bonds.push_back({u, v, order, stereo_uv, false, false});
    bonds.push_back({v, u, order, flip(stereo_uv), false, false});
    rev.push_back(id + 1);
    rev.push_back(id);
    out_[static_cast<std::size_t>(u)].push_back(id);
    out_[static_cast<std::size_t>(v)].push_back(id + 1);
    return id;
  }

  // Directed bond ids leaving atom u.
  std::span<const int> out_bonds(int u) const { return out_[static_cast<std::size_t>(u)]; }
  int degree(int u) const { return static_cast<int>(out_bonds(u).size()); }

  int find_bond(int u, int v) const {
    for (int b : out_bonds(u))
      if (bonds[static_cast<std::size_t>(b)].dst == v) return b;
    return -1;
  }

  double bond_order_sum(int u) const {
    double s = 0;
    for (int b : out_bonds(u)) s += bond_valence(bonds[static_cast<std::size_t>(b)].order);
    return s;
  }

  /// Recomputes component ids, ring flags (bonds that are not bridges) and
  /// conjugation flags from the current topology.
  void finalize() {
    compute_components();
    compute_ring_flags();
    compute_conjugation();
  }

  /// Rebuilds adjacency from bonds. Needed after editing `bonds` directly.
  void rebuild_adjacency() {
    out_.assign(atoms.size(), {});
    for (int b = 0; b < num_bonds(); ++b)
      out_[static_cast<std::size_t>(bonds[static_cast<std::size_t>(b)].src)].push_back(b);
  }

 private:
  std::vector<std::vector<int>> out_;

  void compute_components() {
    component.assign(atoms.size(), -1);
    int next = 0;
    for (int s = 0; s < num_atoms(); ++s) {
      if (component[static_cast<std::size_t>(s)] >= 0) continue;
      std::queue<int> q;
      q.push(s);
      component[static_cast<std::size_t>(s)] = next;
      while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int b : out_bonds(u)) {
          const int v = bonds[static_cast<std::size_t>(b)].dst;
          if (component[static_cast<std::size_t>(v)] < 0) {
            component[static_cast<std::size_t>(v)] = next;
            q.push(v);
          }
        }
      }
      ++next;
    }
  }

  // Tarjan bridge finding, iterative.
  void compute_ring_flags() {
    const auto n = atoms.size();
    std::vector<int> disc(n, -1), low(n, 0);
    int timer = 0;
    struct Frame {
      int atom;
      int via;  // directed bond used to enter, -1 for roots
      std::size_t next;
    };
    for (auto& b : bonds) b.ring = false;
    std::vector<bool> bridge(bonds.size(), false);
    for (std::size_t root = 0; root < n; ++root) {
      if (disc[root] >= 0) continue;
      std::vector<Frame> stack{{static_cast<int>(root), -1, 0}};
      disc[root] = low[root] = timer++;
      while (!stack.empty()) {
        Frame& f = stack.back();
        const auto u = static_cast<std::size_t>(f.atom);
        const auto& adj = out_[u];
        if (f.next < adj.size()) {
          const int b = adj[f.next++];
          if (f.via >= 0 && b == rev[static_cast<std::size_t>(f.via)]) continue;
          const auto v = static_cast<std::size_t>(bonds[static_cast<std::size_t>(b)].dst);
          if (disc[v] < 0) {
            disc[v] = low[v] = timer++;
            stack.push_back({static_cast<int>(v), b, 0});
          } else {
            low[u] = std::min(low[u], disc[v]);
          }
        } else {
          const int via = f.via;
          stack.pop_back();
          if (via >= 0) {
            const auto p = static_cast<std::size_t>(bonds[static_cast<std::size_t>(via)].src);
            low[p] = std::min(low[p], low[u]);
            if (low[u] > disc[p]) {
              bridge[static_cast<std::size_t>(via)] = true;
              bridge[static_cast<std::size_t>(rev[static_cast<std::size_t>(via)])] = true;
            }
          }
        }
      }
    }
    for (std::size_t b = 0; b < bonds.size(); ++b) bonds[b].ring = !bridge[b];
  }

  void compute_conjugation() {
    std::vector<bool> unsaturated(atoms.size(), false);
    for (const auto& b : bonds)
      if (b.order != BondOrder::Single) unsaturated[static_cast<std::size_t>(b.src)] = true;
    for (auto& b : bonds)
      b.conjugated = b.order == BondOrder::Aromatic ||
                     (unsaturated[static_cast<std::size_t>(b.src)] &&
                      unsaturated[static_cast<std::size_t>(b.dst)]);
  }
};

/// Returns a copy of g with atom i moved to position perm[i]. If pair_order
/// is given, undirected bond k of the result is bond pair_order[k] of g.
inline MolGraph permute(const MolGraph& g, std::span<const int> perm,
                        std::span<const int> pair_order = {}) {
  if (perm.size() != g.atoms.size()) throw std::invalid_argument("permute: size mismatch");
  if (!pair_order.empty() && 2 * pair_order.size() != g.bonds.size())
    throw std::invalid_argument("permute: bond order size mismatch");
  MolGraph out;
  out.atoms.resize(g.atoms.size());
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    AtomRecord a = g.atoms[i];
    for (int& nb : a.chiral_order)
      if (nb != kImplicitH) nb = perm[static_cast<std::size_t>(nb)];
    out.atoms[static_cast<std::size_t>(perm[i])] = std::move(a);
  }
  out.rebuild_adjacency();
  for (int k = 0; k < g.num_bonds() / 2; ++k) {
    const int pair = pair_order.empty() ? k : pair_order[static_cast<std::size_t>(k)];
    const auto& r = g.bonds[static_cast<std::size_t>(2 * pair)];
    out.add_bond(perm[static_cast<std::size_t>(r.src)], perm[static_cast<std::size_t>(r.dst)],
                 r.order, r.stereo);
  }
  out.finalize();
  // Keep the original component labelling attached to each atom.
  for (std::size_t i = 0; i < g.atoms.size(); ++i)
    out.component[static_cast<std::size_t>(perm[i])] = g.component[i];
  return out;
}

}  // namespace g2s::chem
