// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "g2s/chem/elements.hpp"
#include "g2s/chem/mol_graph.hpp"
#include "g2s/chem/smiles_parser.hpp"

namespace g2s::chem {

namespace detail {

inline int bond_code(BondOrder o) { return static_cast<int>(o); }

// Dense ranks 0..k-1 from arbitrary comparable keys.
template <class Key>
std::vector<int> dense_ranks(const std::vector<Key>& keys) {
  std::vector<int> idx(keys.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return keys[static_cast<std::size_t>(a)] < keys[static_cast<std::size_t>(b)];
  });
  std::vector<int> rank(keys.size(), 0);
  int r = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i > 0 && keys[static_cast<std::size_t>(idx[i - 1])] < keys[static_cast<std::size_t>(idx[i])]) ++r;
    rank[static_cast<std::size_t>(idx[i])] = r;
  }
  return rank;
}

inline int count_classes(const std::vector<int>& rank) {
  int m = -1;
  for (int r : rank) m = std::max(m, r);
  return m + 1;
}

// Splits classes by sorted (neighbor rank, bond order) lists until stable.
inline std::vector<int> refine(const MolGraph& g, std::vector<int> rank) {
  int classes = count_classes(rank);
  while (true) {
    std::vector<std::pair<int, std::vector<std::pair<int, int>>>> keys(rank.size());
    for (int u = 0; u < g.num_atoms(); ++u) {
      auto& k = keys[static_cast<std::size_t>(u)];
      k.first = rank[static_cast<std::size_t>(u)];
      for (int b : g.out_bonds(u)) {
        const auto& bond = g.bonds[static_cast<std::size_t>(b)];
        k.second.emplace_back(rank[static_cast<std::size_t>(bond.dst)], bond_code(bond.order));
      }
      std::sort(k.second.begin(), k.second.end());
    }
    auto next = dense_ranks(keys);
    const int next_classes = count_classes(next);
    rank = std::move(next);
    if (next_classes == classes) break;
    classes = next_classes;
  }
  return rank;
}

inline std::vector<int> split_atom(std::vector<int> rank, int atom) {
  const int r = rank[static_cast<std::size_t>(atom)];
  for (std::size_t u = 0; u < rank.size(); ++u) {
    rank[u] *= 2;
    if (rank[u] == 2 * r && static_cast<int>(u) != atom) rank[u] += 1;
  }
  return dense_ranks(rank);
}

// Lowest rank value shared by more than one atom, or -1.
inline int lowest_tied_class(const std::vector<int>& rank) {
  std::vector<int> count(rank.size(), 0);
  for (int r : rank) ++count[static_cast<std::size_t>(r)];
  for (std::size_t r = 0; r < count.size(); ++r)
    if (count[r] > 1) return static_cast<int>(r);
  return -1;
}

inline bool has_stereo(const MolGraph& g) {
  for (const auto& a : g.atoms)
    if (a.chirality != Chirality::None) return true;
  for (const auto& b : g.bonds)
    if (b.stereo != BondStereo::None) return true;
  return false;
}

inline int permutation_parity(const std::vector<int>& from, const std::vector<int>& to) {
  // Parity of the permutation taking `from` to `to` (same elements).
  std::vector<int> pos(to.size());
  for (std::size_t i = 0; i < to.size(); ++i) {
    auto it = std::find(from.begin(), from.end(), to[i]);
    if (it == from.end()) return 0;
    pos[i] = static_cast<int>(it - from.begin());
  }
  int inversions = 0;
  for (std::size_t i = 0; i < pos.size(); ++i)
    for (std::size_t j = i + 1; j < pos.size(); ++j)
      if (pos[i] > pos[j]) ++inversions;
  return inversions & 1;
}

inline std::string ring_label(int n) {
  if (n < 10) return std::string(1, static_cast<char>('0' + n));
  std::string s = "%";
  s += static_cast<char>('0' + n / 10);
  s += static_cast<char>('0' + n % 10);
  return s;
}

class Writer {
 public:
  Writer(const MolGraph& g, std::span<const int> rank) : g_(g), rank_(rank.begin(), rank.end()) {}

  std::string run() {
    const auto n = static_cast<std::size_t>(g_.num_atoms());
    visited_.assign(n, false);
    children_.assign(n, {});
    opens_.assign(n, {});
    closes_.assign(n, {});
    parent_bond_.assign(n, -1);
    tree_bond_.assign(g_.bonds.size(), false);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return rank_of(a) < rank_of(b); });
    std::string out;
    for (int start : order) {
      if (visited_[static_cast<std::size_t>(start)]) continue;
      build_tree(start);
      if (!out.empty()) out += '.';
      free_labels_.assign(100, true);
      free_labels_[0] = false;  // start numbering at 1
      emit(start, out);
    }
    return out;
  }

 private:
  const MolGraph& g_;
  std::vector<int> rank_;
  std::vector<bool> visited_;
  std::vector<std::vector<int>> children_;  // directed tree bonds parent -> child, in emission order
  std::vector<std::vector<int>> opens_;     // directed ring bonds opener -> closer
  std::vector<std::vector<int>> closes_;    // directed ring bonds closer -> opener
  std::vector<int> parent_bond_;            // bond parent -> atom
  std::vector<bool> tree_bond_;
  std::vector<bool> free_labels_;
  std::vector<int> label_of_;  // per directed ring bond opener -> closer

  int rank_of(int u) const { return rank_[static_cast<std::size_t>(u)]; }

  std::vector<int> sorted_out(int u) const {
    auto span = g_.out_bonds(u);
    std::vector<int> bs(span.begin(), span.end());
    std::sort(bs.begin(), bs.end(), [&](int a, int b) {
      return rank_of(g_.bonds[static_cast<std::size_t>(a)].dst) < rank_of(g_.bonds[static_cast<std::size_t>(b)].dst);
    });
    return bs;
  }

  // Depth-first spanning tree; non-tree bonds become ring closures.
  void build_tree(int start) {
    struct Frame {
      int atom;
      std::vector<int> nbrs;
      std::size_t next;
    };
    std::vector<Frame> stack;
    visited_[static_cast<std::size_t>(start)] = true;
    stack.push_back({start, sorted_out(start), 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next >= f.nbrs.size()) {
        stack.pop_back();
        continue;
      }
      const int b = f.nbrs[f.next++];
      const int u = f.atom;
      const int v = g_.bonds[static_cast<std::size_t>(b)].dst;
      const int rb = g_.rev[static_cast<std::size_t>(b)];
      const int via = parent_bond_[static_cast<std::size_t>(u)];
      if (via >= 0 && b == g_.rev[static_cast<std::size_t>(via)]) continue;
      if (!visited_[static_cast<std::size_t>(v)]) {
        visited_[static_cast<std::size_t>(v)] = true;
        parent_bond_[static_cast<std::size_t>(v)] = b;
        tree_bond_[static_cast<std::size_t>(b)] = tree_bond_[static_cast<std::size_t>(rb)] = true;
        children_[static_cast<std::size_t>(u)].push_back(b);
        stack.push_back({v, sorted_out(v), 0});
      } else if (!tree_bond_[static_cast<std::size_t>(b)]) {
        // v is an ancestor of u still on the stack: ring bond opened at v.
        bool seen = false;
        for (int x : closes_[static_cast<std::size_t>(u)])
          if (x == b) seen = true;
        for (int x : opens_[static_cast<std::size_t>(u)])
          if (x == b) seen = true;
        if (seen) continue;
        bool reverse_seen = false;
        for (int x : opens_[static_cast<std::size_t>(v)])
          if (x == rb) reverse_seen = true;
        if (reverse_seen) continue;
        opens_[static_cast<std::size_t>(v)].push_back(rb);
        closes_[static_cast<std::size_t>(u)].push_back(b);
      }
    }
  }

  static std::string bond_symbol(const MolGraph& g, int b) {
    const auto& bond = g.bonds[static_cast<std::size_t>(b)];
    if (bond.stereo == BondStereo::Up) return "/";
    if (bond.stereo == BondStereo::Down) return "\\";
    const bool both_arom = g.atoms[static_cast<std::size_t>(bond.src)].aromatic &&
                           g.atoms[static_cast<std::size_t>(bond.dst)].aromatic;
    switch (bond.order) {
      case BondOrder::Single:
        return both_arom ? "-" : "";
      case BondOrder::Double:
        return "=";
      case BondOrder::Triple:
        return "#";
      case BondOrder::Aromatic:
        return both_arom ? "" : ":";
    }
    return "";
  }

  std::string atom_text(int u, const std::vector<int>& written_order) const {
    const auto& a = g_.atoms[static_cast<std::size_t>(u)];
    const bool organic = in_organic_subset(a.element);
    const int implied = implicit_hydrogens(a.element, a.charge, g_.bond_order_sum(u));
    const bool aromatic_ok = !a.aromatic || may_be_aromatic(a.element);
    std::string sym(element_symbol(a.element));
    if (a.aromatic && aromatic_ok) sym[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(sym[0])));
    if (organic && a.charge == 0 && a.isotope == 0 && a.chirality == Chirality::None &&
        a.hydrogens == implied && (a.element != element::kWildcard || a.hydrogens == 0))
      return sym;
    std::string s = "[";
    if (a.isotope > 0) s += std::to_string(a.isotope);
    s += sym;
    if (a.chirality != Chirality::None) {
      Chirality c = a.chirality;
      if (permutation_parity(a.chiral_order, written_order) == 1)
        c = c == Chirality::CCW ? Chirality::CW : Chirality::CCW;
      s += c == Chirality::CCW ? "@" : "@@";
    }
    if (a.hydrogens > 0) {
      s += 'H';
      if (a.hydrogens > 1) s += std::to_string(a.hydrogens);
    }
    if (a.charge != 0) {
      s += a.charge > 0 ? '+' : '-';
      const int mag = std::abs(a.charge);
      if (mag > 1) s += std::to_string(mag);
    }
    s += ']';
    return s;
  }

  int take_label() {
    for (std::size_t i = 1; i < free_labels_.size(); ++i) {
      if (free_labels_[i]) {
        free_labels_[i] = false;
        return static_cast<int>(i);
      }
    }
    throw std::runtime_error("too many open ring bonds");
  }

  void emit(int u, std::string& out) {
    if (label_of_.empty()) label_of_.assign(g_.bonds.size(), 0);
    const auto uu = static_cast<std::size_t>(u);
    // Neighbor order as written, for chirality parity.
    std::vector<int> written;
    if (parent_bond_[uu] >= 0) written.push_back(g_.bonds[static_cast<std::size_t>(parent_bond_[uu])].src);
    const auto& atom = g_.atoms[uu];
    if (atom.chirality != Chirality::None && atom.hydrogens > 0) written.push_back(kImplicitH);
    std::string rings;
    for (int b : closes_[uu]) {
      const int opener_bond = g_.rev[static_cast<std::size_t>(b)];
      const int label = label_of_[static_cast<std::size_t>(opener_bond)];
      free_labels_[static_cast<std::size_t>(label)] = true;
      rings += ring_label(label);
      written.push_back(g_.bonds[static_cast<std::size_t>(b)].dst);
    }
    for (int b : opens_[uu]) {
      const int label = take_label();
      label_of_[static_cast<std::size_t>(b)] = label;
      rings += bond_symbol(g_, b) + ring_label(label);
      written.push_back(g_.bonds[static_cast<std::size_t>(b)].dst);
    }
    for (int b : children_[uu]) written.push_back(g_.bonds[static_cast<std::size_t>(b)].dst);
    out += atom_text(u, written);
    out += rings;
    const auto& kids = children_[uu];
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const int b = kids[i];
      const bool branch = i + 1 < kids.size();
      if (branch) out += '(';
      out += bond_symbol(g_, b);
      emit(g_.bonds[static_cast<std::size_t>(b)].dst, out);
      if (branch) out += ')';
    }
  }
};

}  // namespace detail

/// Writes SMILES with traversal preferences given by `rank` (lower first):
/// each component starts at its lowest-ranked atom and neighbors are
/// visited in rank order.
inline std::string write_smiles(const MolGraph& g, std::span<const int> rank) {
  return detail::Writer(g, rank).run();
}

/// Canonical atom ranks: partition refinement over atom invariants with
/// tie-breaking by splitting the lowest-index member of the lowest tied class.
inline std::vector<int> canonical_ranks(const MolGraph& g) {
  std::vector<std::tuple<int, int, int, int, int, int>> keys;
  keys.reserve(g.atoms.size());
  for (int u = 0; u < g.num_atoms(); ++u) {
    const auto& a = g.atoms[static_cast<std::size_t>(u)];
    keys.emplace_back(a.element, a.charge, g.degree(u), a.hydrogens, a.aromatic ? 1 : 0, a.isotope);
  }
  auto rank = detail::refine(g, detail::dense_ranks(keys));
  for (int r = detail::lowest_tied_class(rank); r >= 0; r = detail::lowest_tied_class(rank)) {
    int pick = -1;
    for (int u = 0; u < g.num_atoms() && pick < 0; ++u)
      if (rank[static_cast<std::size_t>(u)] == r) pick = u;
    rank = detail::refine(g, detail::split_atom(std::move(rank), pick));
  }
  return rank;
}

namespace detail {

// For stereo-bearing graphs the choice inside a tied class can change the
// written stereo marks, so every choice is tried (up to a budget) and the
// smallest string kept.
inline void search_ties(const MolGraph& g, const std::vector<int>& rank, int& budget, std::string& best) {
  const int r = lowest_tied_class(rank);
  if (r < 0) {
    --budget;
    auto s = write_smiles(g, rank);
    if (best.empty() || s < best) best = std::move(s);
    return;
  }
  for (int u = 0; u < g.num_atoms(); ++u) {
    if (rank[static_cast<std::size_t>(u)] != r) continue;
    if (budget <= 0) return;
    search_ties(g, refine(g, split_atom(rank, u)), budget, best);
  }
}

}  // namespace detail

/// Deterministic SMILES, invariant to atom ordering of the input graph.
inline std::string write_canonical(const MolGraph& g) {
  if (!detail::has_stereo(g)) return write_smiles(g, canonical_ranks(g));
  std::vector<std::tuple<int, int, int, int, int, int>> keys;
  for (int u = 0; u < g.num_atoms(); ++u) {
    const auto& a = g.atoms[static_cast<std::size_t>(u)];
    keys.emplace_back(a.element, a.charge, g.degree(u), a.hydrogens, a.aromatic ? 1 : 0, a.isotope);
  }
  int budget = 720;
  std::string best;
  detail::search_ties(g, detail::refine(g, detail::dense_ranks(keys)), budget, best);
  return best;
}

/// A valid SMILES for g rooted at a random atom with random branch order.
template <class Rng>
std::string write_random(const MolGraph& g, Rng& rng) {
  std::vector<int> rank(g.atoms.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  return write_smiles(g, rank);
}

inline std::string canonicalize(std::string_view smiles) { return write_canonical(parse_smiles(smiles)); }

}  // namespace g2s::chem
