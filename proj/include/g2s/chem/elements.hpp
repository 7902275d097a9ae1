// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>

namespace g2s::chem {

// Index = atomic number; 0 is the '*' wildcard.
inline constexpr std::array<std::string_view, 119> kElementSymbols = {
    "*",  "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na",
    "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",
    "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br",
    "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag",
    "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu",
    "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi",
    "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am",
    "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh",
    "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

namespace element {
inline constexpr int kWildcard = 0;
inline constexpr int kH = 1;
inline constexpr int kB = 5;
inline constexpr int kC = 6;
inline constexpr int kN = 7;
inline constexpr int kO = 8;
inline constexpr int kF = 9;
inline constexpr int kP = 15;
inline constexpr int kS = 16;
inline constexpr int kCl = 17;
inline constexpr int kBr = 35;
inline constexpr int kI = 53;
}  // namespace element

inline std::optional<int> element_from_symbol(std::string_view sym) {
  for (std::size_t z = 0; z < kElementSymbols.size(); ++z)
    if (kElementSymbols[z] == sym) return static_cast<int>(z);
  return std::nullopt;
}

inline std::string_view element_symbol(int z) {
  if (z < 0 || z >= static_cast<int>(kElementSymbols.size())) return "*";
  return kElementSymbols[static_cast<std::size_t>(z)];
}

// Members of the SMILES organic subset may be written without brackets.
inline bool in_organic_subset(int z) {
  switch (z) {
    case element::kWildcard:
    case element::kB:
    case element::kC:
    case element::kN:
    case element::kO:
    case element::kP:
    case element::kS:
    case element::kF:
    case element::kCl:
    case element::kBr:
    case element::kI:
      return true;
    default:
      return false;
  }
}

// Elements that may appear in lowercase (aromatic) form.
inline bool may_be_aromatic(int z) {
  switch (z) {
    case element::kB:
    case element::kC:
    case element::kN:
    case element::kO:
    case element::kP:
    case element::kS:
    case 33:  // As
    case 34:  // Se
    case 52:  // Te
      return true;
    default:
      return false;
  }
}

namespace detail {
inline constexpr std::array<int, 1> kVal1{1};
inline constexpr std::array<int, 1> kVal2{2};
inline constexpr std::array<int, 1> kVal3{3};
inline constexpr std::array<int, 1> kVal4{4};
inline constexpr std::array<int, 2> kVal35{3, 5};
inline constexpr std::array<int, 3> kVal246{2, 4, 6};
}  // namespace detail

// Standard valences of the organic subset, ascending. Empty for other elements.
inline std::span<const int> default_valences(int z) {
  switch (z) {
    case element::kB:
      return detail::kVal3;
    case element::kC:
      return detail::kVal4;
    case element::kN:
      return detail::kVal3;
    case element::kO:
      return detail::kVal2;
    case element::kP:
      return detail::kVal35;
    case element::kS:
      return detail::kVal246;
    case element::kF:
    case element::kCl:
    case element::kBr:
    case element::kI:
      return detail::kVal1;
    default:
      return {};
  }
}

}  // namespace g2s::chem
