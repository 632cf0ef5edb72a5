#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "castelo/error.hpp"
#include "castelo/io.hpp"
#include "castelo/subtypes.hpp"
#include "castelo/types.hpp"

namespace castelo {

struct ContactConfig {
  double cutoff = 4.5;         // Angstrom, ligand-protein contact distance
  double pocket_radius = 10.0; // Angstrom, pocket selection around frame-0 ligand
  bool heavy_atoms_only = false;
  bool all_protein = false;    // bypass pocket selection, use every protein atom
  int delta = 500;             // frames between a frame and its dynamism reference
};

struct ProteinSelection {
  std::vector<int> indices;  // topology atom indices, ascending
  int size() const { return static_cast<int>(indices.size()); }
};

// One frame of the two-channel featurization: raw contacts and the absolute
// difference against the contacts `delta` frames earlier.
struct DynamismTensor {
  BitMatrix contact;
  BitMatrix dynamism;
  int frame_index = 0;
  int reference_frame = 0;
};

inline bool is_hydrogen(const AtomRecord& a) { return a.element == "H"; }

// Protein atoms within pocket_radius of any ligand atom in frame 0.
inline ProteinSelection select_pocket(const TrajectoryFrameSeries& traj, const Topology& topo,
                                      const ContactConfig& cfg) {
  const double* f0 = traj.frame(0);
  std::vector<int> lig;
  for (const auto& a : topo.atoms)
    if (a.role == Role::Ligand && !(cfg.heavy_atoms_only && is_hydrogen(a))) lig.push_back(a.index);
  ProteinSelection sel;
  double r2 = cfg.pocket_radius * cfg.pocket_radius;
  for (const auto& a : topo.atoms) {
    if (a.role != Role::Protein) continue;
    if (cfg.heavy_atoms_only && is_hydrogen(a)) continue;
    if (cfg.all_protein) {
      sel.indices.push_back(a.index);
      continue;
    }
    const double* p = f0 + static_cast<std::size_t>(a.index) * 3;
    for (int li : lig) {
      const double* q = f0 + static_cast<std::size_t>(li) * 3;
      double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
      if (dx * dx + dy * dy + dz * dz <= r2) {
        sel.indices.push_back(a.index);
        break;
      }
    }
  }
  if (sel.indices.empty())
    fail(Errc::EmptySelection, "no protein atoms within " + fmt_shortest(cfg.pocket_radius) + " A of the ligand");
  return sel;
}

namespace detail {

// Uniform grid over the selection with cell edge = cutoff, so candidate
// partners of any ligand atom live in the surrounding 3x3x3 block.
class CellList {
 public:
  CellList(const double* frame, const std::vector<int>& atoms, double cell) : cell_(cell) {
    for (std::size_t k = 0; k < atoms.size(); ++k) {
      const double* p = frame + static_cast<std::size_t>(atoms[k]) * 3;
      cells_[key(coord(p[0]), coord(p[1]), coord(p[2]))].push_back(static_cast<int>(k));
    }
  }

  template <typename Fn>
  void for_neighbors(const double* p, Fn&& fn) const {
    long cx = coord(p[0]), cy = coord(p[1]), cz = coord(p[2]);
    for (long ix = cx - 1; ix <= cx + 1; ++ix)
      for (long iy = cy - 1; iy <= cy + 1; ++iy)
        for (long iz = cz - 1; iz <= cz + 1; ++iz) {
          auto it = cells_.find(key(ix, iy, iz));
          if (it == cells_.end()) continue;
          for (int k : it->second) fn(k);
        }
  }

 private:
  long coord(double x) const { return static_cast<long>(std::floor(x / cell_)); }
  static std::uint64_t key(long x, long y, long z) {
    std::uint64_t h = static_cast<std::uint64_t>(x) * 0x9e3779b97f4a7c15ull;
    h ^= static_cast<std::uint64_t>(y) * 0xc2b2ae3d27d4eb4full;
    h ^= static_cast<std::uint64_t>(z) * 0x165667b19e3779f9ull;
    return h;
  }

  double cell_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace detail

// N x M binary contact matrix for one frame; rows follow `ligand_atoms`
// (every ligand atom keeps a row even under heavy_atoms_only, hydrogens just
// never register contacts), columns follow the selection order.
inline BitMatrix contact_matrix(const double* frame, const Topology& topo, const std::vector<int>& ligand_atoms,
                                const ProteinSelection& sel, const ContactConfig& cfg) {
  BitMatrix m(static_cast<int>(ligand_atoms.size()), sel.size());
  detail::CellList grid(frame, sel.indices, cfg.cutoff);
  double c2 = cfg.cutoff * cfg.cutoff;
  for (std::size_t r = 0; r < ligand_atoms.size(); ++r) {
    const AtomRecord& a = topo.atoms[ligand_atoms[r]];
    if (cfg.heavy_atoms_only && is_hydrogen(a)) continue;
    const double* p = frame + static_cast<std::size_t>(a.index) * 3;
    std::uint8_t* row = m.row(static_cast<int>(r));
    grid.for_neighbors(p, [&](int col) {
      const double* q = frame + static_cast<std::size_t>(sel.indices[col]) * 3;
      double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
      if (dx * dx + dy * dy + dz * dz <= c2) row[col] = 1;
    });
  }
  return m;
}

inline std::vector<BitMatrix> contact_series(const TrajectoryFrameSeries& traj, const Topology& topo,
                                             const std::vector<int>& ligand_atoms, const ProteinSelection& sel,
                                             const ContactConfig& cfg) {
  std::vector<BitMatrix> out;
  out.reserve(traj.frame_count);
  for (int t = 0; t < traj.frame_count; ++t)
    out.push_back(contact_matrix(traj.frame(t), topo, ligand_atoms, sel, cfg));
  return out;
}

// For binary matrices |a - b| is exactly XOR.
inline BitMatrix absolute_difference(const BitMatrix& a, const BitMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    fail(Errc::ShapeMismatch, "contact matrices differ in shape");
  BitMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] ^ b.v[i];
  return out;
}

inline std::vector<DynamismTensor> dynamism_series(const std::vector<BitMatrix>& contacts, int delta) {
  if (delta < 0) fail(Errc::ConfigError, "delta must be non-negative");
  std::vector<DynamismTensor> out;
  out.reserve(contacts.size());
  for (std::size_t t = 0; t < contacts.size(); ++t) {
    int ref = static_cast<int>(t) >= delta ? static_cast<int>(t) - delta : 0;
    DynamismTensor d;
    d.frame_index = static_cast<int>(t);
    d.reference_frame = ref;
    d.contact = contacts[t];
    d.dynamism = absolute_difference(contacts[t], contacts[ref]);
    out.push_back(std::move(d));
  }
  return out;
}

namespace detail {

inline void or_reduce_rows(const BitMatrix& m, const std::vector<int>& rows, float* dst) {
  for (int c = 0; c < m.cols; ++c) dst[c] = 0.0f;
  for (int r : rows) {
    const std::uint8_t* src = m.row(r);
    for (int c = 0; c < m.cols; ++c)
      if (src[c]) dst[c] = 1.0f;
  }
}

}  // namespace detail

// Per-subtype model input for one frame: both channels OR-reduced over the
// subtype's member rows, shape [2, M].
inline TensorF subtype_input(const DynamismTensor& d, const std::vector<int>& ligand_atoms, const SubtypeMap& map,
                             int subtype_id) {
  if (subtype_id < 0 || subtype_id >= map.subtype_count())
    fail(Errc::UnknownSubtype, "subtype " + std::to_string(subtype_id) + " out of range", subtype_id);
  std::vector<int> rows;
  for (int a : map.subtype_members[subtype_id]) {
    auto it = std::find(ligand_atoms.begin(), ligand_atoms.end(), a);
    if (it == ligand_atoms.end())
      fail(Errc::UnknownSubtype, "subtype member atom " + std::to_string(a) + " not in ligand list", a);
    rows.push_back(static_cast<int>(it - ligand_atoms.begin()));
  }
  int M = d.contact.cols;
  TensorF t = TensorF::zeros({2, M});
  detail::or_reduce_rows(d.contact, rows, t.data.data());
  detail::or_reduce_rows(d.dynamism, rows, t.data.data() + M);
  return t;
}

// Whole-molecule input for one frame: the two channels stacked along the atom
// axis, shape [2N, M].
inline TensorF whole_molecule_input(const DynamismTensor& d) {
  int N = d.contact.rows, M = d.contact.cols;
  TensorF t = TensorF::zeros({2LL * N, M});
  for (std::size_t i = 0; i < d.contact.v.size(); ++i) t.data[i] = static_cast<float>(d.contact.v[i]);
  for (std::size_t i = 0; i < d.dynamism.v.size(); ++i)
    t.data[d.contact.v.size() + i] = static_cast<float>(d.dynamism.v[i]);
  return t;
}

// Full training tensors across a trajectory.
inline TensorF build_subtype_inputs(const std::vector<DynamismTensor>& series, const std::vector<int>& ligand_atoms,
                                    const SubtypeMap& map, int subtype_id) {
  if (series.empty()) fail(Errc::EmptySelection, "empty dynamism series");
  int M = series[0].contact.cols;
  TensorF out = TensorF::zeros({static_cast<std::int64_t>(series.size()), 2, M});
  for (std::size_t t = 0; t < series.size(); ++t) {
    TensorF one = subtype_input(series[t], ligand_atoms, map, subtype_id);
    std::copy(one.data.begin(), one.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(t) * 2 * M);
  }
  return out;
}

inline TensorF build_whole_inputs(const std::vector<DynamismTensor>& series) {
  if (series.empty()) fail(Errc::EmptySelection, "empty dynamism series");
  int N = series[0].contact.rows, M = series[0].contact.cols;
  TensorF out = TensorF::zeros({static_cast<std::int64_t>(series.size()), 2LL * N, M});
  for (std::size_t t = 0; t < series.size(); ++t) {
    TensorF one = whole_molecule_input(series[t]);
    std::copy(one.data.begin(), one.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(t) * 2 * N * M);
  }
  return out;
}

inline ordered_json selection_to_json(const ProteinSelection& sel) {
  ordered_json j;
  j["version"] = 1;
  j["indices"] = sel.indices;
  return j;
}

inline ProteinSelection selection_from_json(const json& j) {
  if (!j.contains("indices")) fail(Errc::MissingField, "selection: missing 'indices'");
  ProteinSelection sel;
  sel.indices = j["indices"].get<std::vector<int>>();
  return sel;
}

}  // namespace castelo
