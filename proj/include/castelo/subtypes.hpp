#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "castelo/error.hpp"
#include "castelo/io.hpp"
#include "castelo/types.hpp"

namespace castelo {

// Grouping of ligand atoms into subtypes of near-identical Lennard-Jones
// parameters. Protein atoms are never subtyped.
struct SubtypeMap {
  std::map<std::string, int> type_to_subtype;
  std::vector<std::vector<int>> subtype_members;  // ligand atom indices, ascending

  int subtype_count() const { return static_cast<int>(subtype_members.size()); }

  int subtype_of_atom(int atom_index) const {
    for (int s = 0; s < subtype_count(); ++s)
      for (int a : subtype_members[s])
        if (a == atom_index) return s;
    return -1;
  }
};

namespace detail {

inline double rel_diff(double a, double b) {
  double m = std::max(std::abs(a), std::abs(b));
  if (m == 0.0) return 0.0;
  return std::abs(a - b) / m;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[b] = a;
  }
};

}  // namespace detail

// Two atom types belong to the same subtype iff they are connected under the
// pairwise relation "both sigma and epsilon within `tolerance` relative
// difference" (transitive closure). Subtype ids are assigned in ascending
// order of the smallest member type's (sigma, epsilon).
inline SubtypeMap build_subtype_map(const Topology& topo, double tolerance = 0.10) {
  struct TypeInfo {
    std::string name;
    double sigma = 0.0;
    double epsilon = 0.0;
  };
  std::vector<TypeInfo> types;
  std::map<std::string, int> type_index;
  bool any_ligand = false;
  for (const auto& a : topo.atoms) {
    if (a.role != Role::Ligand) continue;
    any_ligand = true;
    auto it = type_index.find(a.atom_type);
    if (it == type_index.end()) {
      type_index[a.atom_type] = static_cast<int>(types.size());
      types.push_back({a.atom_type, a.sigma, a.epsilon});
    } else {
      const auto& t = types[it->second];
      if (t.sigma != a.sigma || t.epsilon != a.epsilon)
        fail(Errc::InvalidSpec,
             "atom type '" + a.atom_type + "' appears with conflicting parameters (" + fmt_shortest(t.sigma) + "," +
                 fmt_shortest(t.epsilon) + ") vs (" + fmt_shortest(a.sigma) + "," + fmt_shortest(a.epsilon) + ")",
             a.index);
    }
  }
  if (!any_ligand) fail(Errc::EmptyLigand, "topology contains no ligand atoms to subtype");

  int nt = static_cast<int>(types.size());
  detail::UnionFind uf(nt);
  for (int i = 0; i < nt; ++i)
    for (int j = i + 1; j < nt; ++j)
      if (detail::rel_diff(types[i].sigma, types[j].sigma) <= tolerance &&
          detail::rel_diff(types[i].epsilon, types[j].epsilon) <= tolerance)
        uf.unite(i, j);

  // component -> smallest (sigma, epsilon) of its member types
  std::map<int, std::pair<double, double>> comp_key;
  for (int i = 0; i < nt; ++i) {
    int r = uf.find(i);
    auto key = std::make_pair(types[i].sigma, types[i].epsilon);
    auto it = comp_key.find(r);
    if (it == comp_key.end() || key < it->second) comp_key[r] = key;
  }
  std::vector<std::pair<std::pair<double, double>, int>> order;
  for (const auto& [root, key] : comp_key) order.emplace_back(key, root);
  std::sort(order.begin(), order.end());

  std::map<int, int> root_to_subtype;
  for (std::size_t s = 0; s < order.size(); ++s) root_to_subtype[order[s].second] = static_cast<int>(s);

  SubtypeMap map;
  map.subtype_members.resize(order.size());
  for (const auto& [name, ti] : type_index) map.type_to_subtype[name] = root_to_subtype[uf.find(ti)];
  for (const auto& a : topo.atoms)
    if (a.role == Role::Ligand) map.subtype_members[map.type_to_subtype[a.atom_type]].push_back(a.index);
  for (auto& members : map.subtype_members) std::sort(members.begin(), members.end());
  return map;
}

// Extracts the rows of a per-ligand-atom matrix that belong to one subtype,
// in ascending atom order. Rows of `m` are indexed by position in the ligand
// atom list, so callers pass that list to translate atom indices.
inline BitMatrix select_subtype_rows(const BitMatrix& m, const std::vector<int>& ligand_atoms, const SubtypeMap& map,
                                     int subtype_id) {
  if (subtype_id < 0 || subtype_id >= map.subtype_count())
    fail(Errc::UnknownSubtype, "subtype " + std::to_string(subtype_id) + " out of range [0," +
                                   std::to_string(map.subtype_count()) + ")",
         subtype_id);
  std::map<int, int> row_of_atom;
  for (std::size_t r = 0; r < ligand_atoms.size(); ++r) row_of_atom[ligand_atoms[r]] = static_cast<int>(r);
  const auto& members = map.subtype_members[subtype_id];
  BitMatrix out(static_cast<int>(members.size()), m.cols);
  for (std::size_t i = 0; i < members.size(); ++i) {
    auto it = row_of_atom.find(members[i]);
    if (it == row_of_atom.end())
      fail(Errc::UnknownSubtype, "subtype member atom " + std::to_string(members[i]) + " has no matrix row",
           members[i]);
    std::copy_n(m.row(it->second), m.cols, out.row(static_cast<int>(i)));
  }
  return out;
}

inline ordered_json subtype_map_to_json(const SubtypeMap& map) {
  ordered_json j;
  j["version"] = 1;
  j["subtype_count"] = map.subtype_count();
  ordered_json t = ordered_json::object();
  for (const auto& [name, s] : map.type_to_subtype) t[name] = s;
  j["type_to_subtype"] = std::move(t);
  ordered_json members = ordered_json::array();
  for (const auto& v : map.subtype_members) members.push_back(v);
  j["subtype_members"] = std::move(members);
  return j;
}

inline SubtypeMap subtype_map_from_json(const json& j) {
  SubtypeMap map;
  if (!j.contains("type_to_subtype") || !j.contains("subtype_members"))
    fail(Errc::MissingField, "subtype map: missing type_to_subtype/subtype_members");
  for (auto it = j["type_to_subtype"].begin(); it != j["type_to_subtype"].end(); ++it)
    map.type_to_subtype[it.key()] = it.value().get<int>();
  for (const auto& v : j["subtype_members"]) map.subtype_members.push_back(v.get<std::vector<int>>());
  return map;
}

}  // namespace castelo
