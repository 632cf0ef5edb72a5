#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "castelo/error.hpp"

namespace castelo {

enum class Role { Ligand, Protein, Other };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::Ligand: return "ligand";
    case Role::Protein: return "protein";
    case Role::Other: return "other";
  }
  return "other";
}

struct AtomRecord {
  int index = 0;
  std::string name;
  std::string element;
  std::string atom_type;
  double sigma = 0.0;    // Lennard-Jones radius parameter, Angstrom
  double epsilon = 0.0;  // well depth, kcal/mol
  Role role = Role::Other;
  int residue_id = 0;
  std::string residue_name;
};

struct Topology {
  std::vector<AtomRecord> atoms;

  int natoms() const { return static_cast<int>(atoms.size()); }

  std::vector<int> indices_with_role(Role r) const {
    std::vector<int> out;
    for (const auto& a : atoms)
      if (a.role == r) out.push_back(a.index);
    return out;
  }

  std::vector<int> ligand_indices() const { return indices_with_role(Role::Ligand); }
  std::vector<int> protein_indices() const { return indices_with_role(Role::Protein); }
};

// Frame-major coordinate block: coords[(t * natoms + i) * 3 + k].
struct TrajectoryFrameSeries {
  int frame_count = 0;
  int natoms = 0;
  std::vector<double> coords;
  std::vector<double> time_ps;

  const double* frame(int t) const { return coords.data() + static_cast<std::size_t>(t) * natoms * 3; }
  double* frame(int t) { return coords.data() + static_cast<std::size_t>(t) * natoms * 3; }

  double frame_stride_ps() const {
    if (frame_count < 2) return 20.0;
    return time_ps[1] - time_ps[0];
  }
};

// Dense row-major 0/1 matrix, byte per entry.
struct BitMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> v;

  BitMatrix() = default;
  BitMatrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0) {}

  std::uint8_t at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
  void set(int r, int c, std::uint8_t x) { v[static_cast<std::size_t>(r) * cols + c] = x; }
  const std::uint8_t* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
  std::uint8_t* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }

  bool operator==(const BitMatrix& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

// Minimal dense tensor used for float32 artifacts (inputs, latents).
struct TensorF {
  std::vector<std::int64_t> dims;
  std::vector<float> data;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  static TensorF zeros(std::vector<std::int64_t> d) {
    TensorF t;
    t.dims = std::move(d);
    t.data.assign(static_cast<std::size_t>(t.numel()), 0.0f);
    return t;
  }
};

}  // namespace castelo
