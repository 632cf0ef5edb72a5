#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "castelo/fep.hpp"
#include "castelo/io.hpp"
#include "castelo/rng.hpp"

using namespace castelo;

namespace {

// Reference evaluation in long double without the max-shift trick.
long double zwanzig_naive(const std::vector<double>& u, double t) {
  long double kt = static_cast<long double>(kBoltzmannKcalPerMolK) * t;
  long double acc = 0.0L;
  for (double x : u) acc += std::exp(-static_cast<long double>(x) / kt);
  return -kt * std::log(acc / static_cast<long double>(u.size()));
}

}  // namespace

TEST_CASE("constant energy difference passes straight through") {
  EnergySamples s;
  s.delta_u.assign(500, 3.25);
  s.temperature = 310.0;
  FreeEnergyResult r = zwanzig(s);
  REQUIRE(r.delta_f == Catch::Approx(3.25).margin(1e-12));
  REQUIRE(r.std_err == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("two-value samples match the closed form") {
  double kt = kBoltzmannKcalPerMolK * 300.0;
  EnergySamples s;
  s.delta_u = {1.0, 2.0, 1.0, 2.0};
  s.temperature = 300.0;
  FreeEnergyResult r = zwanzig(s);
  double expect = -kt * std::log((std::exp(-1.0 / kt) + std::exp(-2.0 / kt)) / 2.0);
  REQUIRE(r.delta_f == Catch::Approx(expect).margin(1e-12));
  REQUIRE(r.delta_f == Catch::Approx(static_cast<double>(zwanzig_naive(s.delta_u, 300.0))).margin(1e-10));
}

TEST_CASE("estimate never exceeds the arithmetic mean") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    EnergySamples s;
    int n = 20 + static_cast<int>(rng.bounded(200));
    s.delta_u.resize(n);
    double mean = 0.0;
    for (auto& x : s.delta_u) {
      x = 2.0 * rng.normal() - 1.0;
      mean += x;
    }
    mean /= n;
    s.temperature = 310.0;
    FreeEnergyResult r = zwanzig(s);
    REQUIRE(r.delta_f <= mean + 1e-10);
    REQUIRE(r.delta_f ==
            Catch::Approx(static_cast<double>(zwanzig_naive(s.delta_u, s.temperature))).margin(1e-9));
  }
}

TEST_CASE("point estimate ignores sample order") {
  Rng rng(6);
  EnergySamples s;
  s.delta_u.resize(300);
  for (auto& x : s.delta_u) x = rng.normal();
  s.temperature = 310.0;
  double base = zwanzig(s).delta_f;
  rng.shuffle(s.delta_u);
  REQUIRE(zwanzig(s).delta_f == Catch::Approx(base).margin(1e-11));
}

TEST_CASE("shifting all samples by a constant shifts the estimate by it") {
  Rng rng(7);
  EnergySamples s;
  s.delta_u.resize(400);
  for (auto& x : s.delta_u) x = 0.7 * rng.normal() + 0.2;
  s.temperature = 300.0;
  double base = zwanzig(s).delta_f;
  EnergySamples shifted = s;
  for (auto& x : shifted.delta_u) x += 5.0;
  REQUIRE(zwanzig(shifted).delta_f == Catch::Approx(base + 5.0).margin(1e-10));
}

TEST_CASE("sample validation") {
  EnergySamples s;
  try {
    zwanzig(s);
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::EmptySamples);
  }
  s.delta_u = {1.0, std::nan(""), 2.0};
  try {
    zwanzig(s);
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::InvalidSpec);
    REQUIRE(e.where() == 1);
  }
  s.delta_u = {1.0};
  s.temperature = 0.0;
  try {
    zwanzig(s);
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::ConfigError);
  }
}

TEST_CASE("bootstrap error is deterministic and scales sanely") {
  Rng rng(8);
  EnergySamples s;
  s.delta_u.resize(1000);
  for (auto& x : s.delta_u) x = rng.normal();
  s.temperature = 310.0;
  FreeEnergyResult a = zwanzig(s, 42);
  FreeEnergyResult b = zwanzig(s, 42);
  REQUIRE(a.delta_f == b.delta_f);
  REQUIRE(a.std_err == b.std_err);
  REQUIRE(a.std_err > 0.0);
  REQUIRE(a.std_err < 0.5);  // light-tailed unit normal at n=1000

  FreeEnergyResult c = zwanzig(s, 43);
  REQUIRE(c.std_err != a.std_err);  // different resampling
  REQUIRE(c.delta_f == a.delta_f);  // point estimate unaffected by the seed
}

TEST_CASE("relative binding free energy subtracts legs") {
  FreeEnergyResult bound{-3.0, 0.3};
  FreeEnergyResult free_leg{-1.0, 0.4};
  FreeEnergyResult r = relative_binding_free_energy(bound, free_leg);
  REQUIRE(r.delta_f == Catch::Approx(2.0).margin(1e-15));
  REQUIRE(r.std_err == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("relative sweetness of the reference itself is one") {
  REQUIRE(computed_relative_sweetness(-6.9, -6.9, 310.0) == 1.0);
  REQUIRE(log10_relative_sweetness(-6.9, -6.9, 310.0) == 0.0);
  REQUIRE(computed_relative_sweetness(-6.9, -6.9, 250.0) == 1.0);
}

TEST_CASE("log10 sweetness reproduces the published ladder") {
  const double ref = -6.9;
  const double t = 310.0;
  struct Row {
    double ddf;
    double expect;
  };
  const Row rows[] = {{-6.9, 0.0}, {-10.2, 2.33}, {-11.7, 3.38}, {-10.6, 2.61}, {-11.1, 2.96}};
  for (const Row& row : rows) {
    double got = log10_relative_sweetness(row.ddf, ref, t);
    REQUIRE(got == Catch::Approx(row.expect).margin(0.02));
    REQUIRE(std::pow(10.0, got) ==
            Catch::Approx(computed_relative_sweetness(row.ddf, ref, t)).epsilon(1e-12));
  }
}

TEST_CASE("sweetness grows as the free energy drops") {
  double prev = -1.0;
  for (double ddf = -5.0; ddf > -14.0; ddf -= 0.5) {
    double crs = computed_relative_sweetness(ddf, -6.9, 310.0);
    REQUIRE(crs > prev);
    prev = crs;
  }
  try {
    computed_relative_sweetness(-7.0, -6.9, -10.0);
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::ConfigError);
  }
}

TEST_CASE("sample csv accepts an optional header") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "castelo_fep_csv";
  fs::create_directories(dir);
  fs::path p = dir / "u.csv";
  {
    std::ofstream out(p);
    out << "delta_u\n1.5\n-2.25\n\n3e-1\n";
  }
  std::vector<double> v = read_samples_csv(p.string());
  REQUIRE(v == std::vector<double>{1.5, -2.25, 0.3});

  {
    std::ofstream out(p);
    out << "1.0\nbogus\n";
  }
  try {
    read_samples_csv(p.string());
    FAIL("expected throw");
  } catch (const Error& e) {
    REQUIRE(e.code() == Errc::IoError);
  }
  fs::remove_all(dir);
}
