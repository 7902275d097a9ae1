// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "g2s/chem/elements.hpp"
#include "g2s/chem/mol_graph.hpp"
#include "g2s/chem/tokenizer.hpp"

namespace g2s::chem {

enum class SmilesErrorKind { UnclosedRing, UnbalancedParen, BadBracketAtom, UnknownElement, Syntax };

inline const char* to_string(SmilesErrorKind k) {
  switch (k) {
    case SmilesErrorKind::UnclosedRing:
      return "UnclosedRing";
    case SmilesErrorKind::UnbalancedParen:
      return "UnbalancedParen";
    case SmilesErrorKind::BadBracketAtom:
      return "BadBracketAtom";
    case SmilesErrorKind::UnknownElement:
      return "UnknownElement";
    case SmilesErrorKind::Syntax:
      return "Syntax";
  }
  return "?";
}

class SmilesError : public std::runtime_error {
 public:
  SmilesError(SmilesErrorKind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " at byte " + std::to_string(offset) +
                           ": " + what),
        kind_(kind),
        offset_(offset) {}

  SmilesErrorKind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  SmilesErrorKind kind_;
  std::size_t offset_;
};

/// Hydrogens implied by the organic-subset valence rules. Aromatic bonds
/// count 1.5 and the sum is floored.
inline int implicit_hydrogens(int element, int charge, double bond_sum) {
  if (charge != 0) return 0;
  const int used = static_cast<int>(std::floor(bond_sum + 1e-9));
  for (int v : default_valences(element))
    if (v >= used) return v - used;
  return 0;
}

namespace detail {

struct PendingBond {
  std::optional<BondOrder> order;
  BondStereo stereo = BondStereo::None;
  std::size_t offset = 0;
  bool set = false;
};

struct RingOpen {
  int atom;
  PendingBond bond;
  std::size_t offset;
  int chiral_slot;  // index in atom's chiral_order awaiting the partner, or -1
};

inline AtomRecord parse_bracket(const Token& tok) {
  const std::string_view s(tok.text);
  const std::size_t base = tok.offset;
  std::size_t i = 1;
  const std::size_t end = s.size() - 1;  // closing ']'
  auto fail = [&](const std::string& why) -> AtomRecord {
    throw SmilesError(SmilesErrorKind::BadBracketAtom, base + i, why + " in " + tok.text);
  };
  AtomRecord a;
  a.hydrogens = 0;
  while (i < end && std::isdigit(static_cast<unsigned char>(s[i]))) {
    a.isotope = a.isotope * 10 + (s[i] - '0');
    ++i;
  }
  if (i >= end) fail("missing element");
  if (s[i] == '*') {
    a.element = element::kWildcard;
    ++i;
  } else if (std::islower(static_cast<unsigned char>(s[i]))) {
    // aromatic: se, as, te or a single letter
    std::optional<int> z;
    if (i + 1 < end && std::islower(static_cast<unsigned char>(s[i + 1]))) {
      std::string two{static_cast<char>(std::toupper(static_cast<unsigned char>(s[i]))), s[i + 1]};
      z = element_from_symbol(two);
      if (z && may_be_aromatic(*z)) i += 2;
      else z.reset();
    }
    if (!z) {
      std::string one{static_cast<char>(std::toupper(static_cast<unsigned char>(s[i])))};
      z = element_from_symbol(one);
      if (!z || !may_be_aromatic(*z))
        throw SmilesError(SmilesErrorKind::UnknownElement, base + i, "unknown aromatic symbol in " + tok.text);
      ++i;
    }
    a.element = *z;
    a.aromatic = true;
  } else if (std::isupper(static_cast<unsigned char>(s[i]))) {
    std::optional<int> z;
    if (i + 1 < end && std::islower(static_cast<unsigned char>(s[i + 1]))) {
      z = element_from_symbol(s.substr(i, 2));
      if (z) i += 2;
    }
    if (!z) {
      z = element_from_symbol(s.substr(i, 1));
      if (!z) throw SmilesError(SmilesErrorKind::UnknownElement, base + i, "unknown element in " + tok.text);
      ++i;
    }
    a.element = *z;
  } else {
    fail("expected element symbol");
  }
  if (i < end && s[i] == '@') {
    ++i;
    a.chirality = Chirality::CCW;
    if (i < end && s[i] == '@') {
      ++i;
      a.chirality = Chirality::CW;
    }
    if (i < end && std::isupper(static_cast<unsigned char>(s[i])) && s[i] != 'H')
      fail("unsupported chirality class");
  }
  if (i < end && s[i] == 'H') {
    ++i;
    a.hydrogens = 1;
    if (i < end && std::isdigit(static_cast<unsigned char>(s[i]))) {
      a.hydrogens = s[i] - '0';
      ++i;
    }
  }
  if (i < end && (s[i] == '+' || s[i] == '-')) {
    const char sign = s[i];
    const int unit = sign == '+' ? 1 : -1;
    ++i;
    int mag = 1;
    if (i < end && std::isdigit(static_cast<unsigned char>(s[i]))) {
      mag = 0;
      while (i < end && std::isdigit(static_cast<unsigned char>(s[i]))) {
        mag = mag * 10 + (s[i] - '0');
        ++i;
      }
    } else {
      while (i < end && s[i] == sign) {
        ++mag;
        ++i;
      }
    }
    a.charge = unit * mag;
  }
  if (i < end && s[i] == ':') {
    ++i;
    if (i >= end || !std::isdigit(static_cast<unsigned char>(s[i]))) fail("bad atom class");
    while (i < end && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  }
  if (i != end) fail("unexpected character");
  return a;
}

inline std::optional<int> organic_atom(std::string_view t, bool& aromatic) {
  aromatic = false;
  if (t == "B") return element::kB;
  if (t == "Br") return element::kBr;
  if (t == "C") return element::kC;
  if (t == "Cl") return element::kCl;
  if (t == "N") return element::kN;
  if (t == "O") return element::kO;
  if (t == "S") return element::kS;
  if (t == "P") return element::kP;
  if (t == "F") return element::kF;
  if (t == "I") return element::kI;
  if (t == "*") return element::kWildcard;
  aromatic = true;
  if (t == "b") return element::kB;
  if (t == "c") return element::kC;
  if (t == "n") return element::kN;
  if (t == "o") return element::kO;
  if (t == "s") return element::kS;
  if (t == "p") return element::kP;
  aromatic = false;
  return std::nullopt;
}

}  // namespace detail

/// Parses the supported SMILES subset into a MolGraph.
/// Throws SmilesError carrying the byte offset of the offending input.
inline MolGraph parse_smiles(std::string_view smiles) {
  using detail::PendingBond;
  if (smiles.empty()) throw SmilesError(SmilesErrorKind::Syntax, 0, "empty SMILES");
  const auto tokens = tokenize(smiles);
  MolGraph g;
  std::vector<bool> bracketed;
  std::vector<int> branch_stack;
  std::map<int, detail::RingOpen> rings;
  int prev = -1;
  PendingBond pending;

  auto resolve_order = [&](const PendingBond& b, int u, int v) {
    if (b.order) return *b.order;
    const bool arom = g.atoms[static_cast<std::size_t>(u)].aromatic &&
                      g.atoms[static_cast<std::size_t>(v)].aromatic;
    return arom ? BondOrder::Aromatic : BondOrder::Single;
  };

  auto check_new_bond = [&](int u, int v, std::size_t offset) {
    if (u == v) throw SmilesError(SmilesErrorKind::Syntax, offset, "atom bonded to itself");
    if (g.find_bond(u, v) >= 0) throw SmilesError(SmilesErrorKind::Syntax, offset, "duplicate bond");
  };

  auto add_atom = [&](AtomRecord a, bool bracket, std::size_t offset) {
    const int id = g.add_atom(std::move(a));
    bracketed.push_back(bracket);
    auto& atom = g.atoms.back();
    if (prev >= 0) {
      check_new_bond(prev, id, offset);
      g.add_bond(prev, id, resolve_order(pending, prev, id), pending.stereo);
      auto& p = g.atoms[static_cast<std::size_t>(prev)];
      if (p.chirality != Chirality::None) p.chiral_order.push_back(id);
      if (atom.chirality != Chirality::None) atom.chiral_order.push_back(prev);
    } else if (pending.set) {
      throw SmilesError(SmilesErrorKind::Syntax, pending.offset, "bond without preceding atom");
    }
    if (atom.chirality != Chirality::None && atom.hydrogens > 0) atom.chiral_order.push_back(kImplicitH);
    pending = {};
    prev = id;
  };

  for (const auto& tok : tokens) {
    const std::string& t = tok.text;
    const char c0 = t[0];
    if (c0 == '[') {
      add_atom(detail::parse_bracket(tok), true, tok.offset);
      continue;
    }
    bool aromatic = false;
    if (auto z = detail::organic_atom(t, aromatic)) {
      AtomRecord a;
      a.element = *z;
      a.aromatic = aromatic;
      add_atom(std::move(a), false, tok.offset);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c0)) || c0 == '%') {
      const int num = c0 == '%' ? std::stoi(t.substr(1)) : c0 - '0';
      if (prev < 0) throw SmilesError(SmilesErrorKind::Syntax, tok.offset, "ring bond without atom");
      auto it = rings.find(num);
      if (it == rings.end()) {
        auto& atom = g.atoms[static_cast<std::size_t>(prev)];
        int slot = -1;
        if (atom.chirality != Chirality::None) {
          slot = static_cast<int>(atom.chiral_order.size());
          atom.chiral_order.push_back(-2);  // filled on closure
        }
        rings.emplace(num, detail::RingOpen{prev, pending, tok.offset, slot});
      } else {
        const detail::RingOpen open = it->second;
        rings.erase(it);
        if (open.bond.order && pending.order && *open.bond.order != *pending.order)
          throw SmilesError(SmilesErrorKind::Syntax, tok.offset, "conflicting ring bond orders");
        check_new_bond(open.atom, prev, tok.offset);
        PendingBond b = open.bond.order ? open.bond : pending;
        // Stereo marks are read from the side that carries them.
        BondStereo st = BondStereo::None;
        if (open.bond.stereo != BondStereo::None) st = open.bond.stereo;
        else if (pending.stereo != BondStereo::None) st = flip(pending.stereo);
        g.add_bond(open.atom, prev, resolve_order(b, open.atom, prev), st);
        auto& opener = g.atoms[static_cast<std::size_t>(open.atom)];
        if (open.chiral_slot >= 0) opener.chiral_order[static_cast<std::size_t>(open.chiral_slot)] = prev;
        auto& closer = g.atoms[static_cast<std::size_t>(prev)];
        if (closer.chirality != Chirality::None) closer.chiral_order.push_back(open.atom);
      }
      pending = {};
      continue;
    }
    switch (c0) {
      case '(':
        if (prev < 0) throw SmilesError(SmilesErrorKind::Syntax, tok.offset, "branch without atom");
        if (pending.set) throw SmilesError(SmilesErrorKind::Syntax, tok.offset, "bond before branch");
        branch_stack.push_back(prev);
        break;
      case ')':
        if (branch_stack.empty()) throw SmilesError(SmilesErrorKind::UnbalancedParen, tok.offset, "unmatched ')'");
        if (pending.set) throw SmilesError(SmilesErrorKind::Syntax, pending.offset, "dangling bond");
        prev = branch_stack.back();
        branch_stack.pop_back();
        break;
      case '.':
        if (pending.set) throw SmilesError(SmilesErrorKind::Syntax, pending.offset, "dangling bond");
        if (!branch_stack.empty()) throw SmilesError(SmilesErrorKind::UnbalancedParen, tok.offset, "'.' inside branch");
        prev = -1;
        break;
      case '-':
      case '=':
      case '#':
      case ':':
      case '/':
      case '\\':
        if (pending.set) throw SmilesError(SmilesErrorKind::Syntax, tok.offset, "consecutive bond symbols");
        pending.set = true;
        pending.offset = tok.offset;
        if (c0 == '=') pending.order = BondOrder::Double;
        else if (c0 == '#') pending.order = BondOrder::Triple;
        else if (c0 == ':') pending.order = BondOrder::Aromatic;
        else pending.order = BondOrder::Single;
        if (c0 == '/') pending.stereo = BondStereo::Up;
        if (c0 == '\\') pending.stereo = BondStereo::Down;
        break;
      default:
        if (std::isalpha(static_cast<unsigned char>(c0)))
          throw SmilesError(SmilesErrorKind::UnknownElement, tok.offset, "unknown atom '" + t + "'");
        throw SmilesError(SmilesErrorKind::Syntax, tok.offset, "unexpected '" + t + "'");
    }
  }
  if (pending.set) throw SmilesError(SmilesErrorKind::Syntax, pending.offset, "dangling bond");
  if (!branch_stack.empty())
    throw SmilesError(SmilesErrorKind::UnbalancedParen, smiles.size(), "unclosed '('");
  if (!rings.empty()) {
    std::size_t off = smiles.size();
    for (const auto& [num, open] : rings) off = std::min(off, open.offset);
    throw SmilesError(SmilesErrorKind::UnclosedRing, off, "unclosed ring bond");
  }
  for (int u = 0; u < g.num_atoms(); ++u) {
    auto& a = g.atoms[static_cast<std::size_t>(u)];
    if (!bracketed[static_cast<std::size_t>(u)])
      a.hydrogens = implicit_hydrogens(a.element, a.charge, g.bond_order_sum(u));
  }
  g.finalize();
  return g;
}

/// True when parse_smiles accepts the string.
inline bool is_valid_smiles(std::string_view smiles) {
  try {
    (void)parse_smiles(smiles);
    return true;
  } catch (const SmilesError&) {
    return false;
  }
}

}  // namespace g2s::chem
