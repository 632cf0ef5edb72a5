#include <catch2/catch_amalgamated.hpp>

#include "castelo/subtypes.hpp"

using namespace castelo;

namespace {

// small topology builder; protein atom appended so the topology is valid
Topology make_topo(const std::vector<std::tuple<std::string, double, double>>& ligand_types) {
  Topology t;
  int idx = 0;
  for (const auto& [type, sigma, eps] : ligand_types) {
    AtomRecord a;
    a.index = idx++;
    a.name = "L" + std::to_string(a.index);
    a.atom_type = type;
    a.sigma = sigma;
    a.epsilon = eps;
    a.role = Role::Ligand;
    a.residue_id = 1;
    a.residue_name = "LIG";
    a.element = "C";
    t.atoms.push_back(a);
  }
  AtomRecord p;
  p.index = idx;
  p.name = "P0";
  p.atom_type = "PP";
  p.sigma = 1.7;
  p.epsilon = 0.2;
  p.role = Role::Protein;
  p.residue_id = 2;
  p.residue_name = "ALA";
  p.element = "C";
  t.atoms.push_back(p);
  return t;
}

}  // namespace

TEST_CASE("identical parameters collapse to one subtype") {
  Topology t = make_topo({{"A", 2.0, 0.1}, {"B", 2.0, 0.1}, {"C", 2.0, 0.1}});
  SubtypeMap m = build_subtype_map(t);
  REQUIRE(m.subtype_count() == 1);
  REQUIRE(m.subtype_members[0] == std::vector<int>{0, 1, 2});
}

TEST_CASE("distant parameters make distinct subtypes ordered by sigma then epsilon") {
  Topology t = make_topo({{"BIG", 3.0, 0.5}, {"SMALL", 1.0, 0.01}, {"MID", 2.0, 0.1}});
  SubtypeMap m = build_subtype_map(t);
  REQUIRE(m.subtype_count() == 3);
  // id 0 = smallest (sigma, epsilon)
  REQUIRE(m.type_to_subtype.at("SMALL") == 0);
  REQUIRE(m.type_to_subtype.at("MID") == 1);
  REQUIRE(m.type_to_subtype.at("BIG") == 2);
}

TEST_CASE("tolerance boundary is inclusive") {
  // rel diff exactly 0.10 when sigma pair is (1.8, 2.0): |0.2|/2.0 = 0.1
  Topology t = make_topo({{"A", 1.8, 0.1}, {"B", 2.0, 0.1}});
  REQUIRE(build_subtype_map(t, 0.10).subtype_count() == 1);
  REQUIRE(build_subtype_map(t, 0.0999).subtype_count() == 2);
}

TEST_CASE("grouping is a transitive closure") {
  // A~B and B~C within 10%, but A vs C differ by ~19%; the chain still joins
  // all three
  Topology t = make_topo({{"A", 2.00, 0.1}, {"B", 2.20, 0.1}, {"C", 2.42, 0.1}});
  SubtypeMap m = build_subtype_map(t, 0.10);
  REQUIRE(m.subtype_count() == 1);
}

TEST_CASE("epsilon alone can split a subtype") {
  Topology t = make_topo({{"A", 2.0, 0.10}, {"B", 2.0, 0.20}});
  SubtypeMap m = build_subtype_map(t, 0.10);
  REQUIRE(m.subtype_count() == 2);
  REQUIRE(m.type_to_subtype.at("A") == 0);  // lower epsilon wins id 0
}

TEST_CASE("protein types never join the universe") {
  Topology t = make_topo({{"A", 1.7, 0.2}});  // matches the protein atom params exactly
  SubtypeMap m = build_subtype_map(t);
  REQUIRE(m.subtype_count() == 1);
  REQUIRE(m.type_to_subtype.count("PP") == 0);
  REQUIRE(m.subtype_members[0] == std::vector<int>{0});
}

TEST_CASE("conflicting parameters for one type are rejected") {
  Topology t = make_topo({{"A", 2.0, 0.1}, {"A", 2.1, 0.1}});
  try {
    build_subtype_map(t);
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::InvalidSpec);
  }
}

TEST_CASE("no ligand atoms is an error") {
  Topology t;
  AtomRecord p;
  p.index = 0;
  p.name = "P0";
  p.atom_type = "PP";
  p.sigma = 1.7;
  p.epsilon = 0.2;
  p.role = Role::Protein;
  t.atoms.push_back(p);
  try {
    build_subtype_map(t);
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::EmptyLigand);
  }
}

TEST_CASE("row selection extracts members in atom order") {
  Topology t = make_topo({{"A", 2.0, 0.1}, {"X", 9.0, 3.0}, {"B", 2.05, 0.1}});
  SubtypeMap m = build_subtype_map(t);
  REQUIRE(m.subtype_count() == 2);
  REQUIRE(m.subtype_members[0] == std::vector<int>{0, 2});

  std::vector<int> ligand{0, 1, 2};
  BitMatrix full(3, 4);
  full.set(0, 1, true);
  full.set(1, 2, true);
  full.set(2, 3, true);
  BitMatrix sel = select_subtype_rows(full, ligand, m, 0);
  REQUIRE(sel.rows == 2);
  REQUIRE(sel.at(0, 1));
  REQUIRE(sel.at(1, 3));
  REQUIRE_FALSE(sel.at(0, 2));

  try {
    select_subtype_rows(full, ligand, m, 5);
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::UnknownSubtype);
  }
}

TEST_CASE("subtype map json round trip") {
  Topology t = make_topo({{"A", 2.0, 0.1}, {"B", 3.0, 0.5}});
  SubtypeMap m = build_subtype_map(t);
  SubtypeMap m2 = subtype_map_from_json(json::parse(subtype_map_to_json(m).dump()));
  REQUIRE(m2.subtype_count() == m.subtype_count());
  REQUIRE(m2.type_to_subtype == m.type_to_subtype);
  REQUIRE(m2.subtype_members == m.subtype_members);
}

TEST_CASE("relative difference helper") {
  REQUIRE(detail::rel_diff(0.0, 0.0) == 0.0);
  REQUIRE(detail::rel_diff(1.0, 1.1) == Catch::Approx(0.1 / 1.1));
  REQUIRE(detail::rel_diff(2.0, 1.8) == Catch::Approx(0.1));
}
