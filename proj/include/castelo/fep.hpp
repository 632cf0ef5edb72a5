#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "castelo/error.hpp"
#include "castelo/rng.hpp"

namespace castelo {

inline constexpr double kBoltzmannKcalPerMolK = 0.0019872041;
inline constexpr double kDefaultTemperatureK = 310.0;

struct EnergySamples {
  std::vector<double> delta_u;  // per-snapshot potential energy difference, kcal/mol
  double temperature = kDefaultTemperatureK;
};

struct FreeEnergyResult {
  double delta_f = 0.0;  // kcal/mol
  double std_err = 0.0;  // block-bootstrap standard error, kcal/mol
};

namespace detail {

// -kT * log(mean(exp(-u_i/kT))), evaluated with the max shifted out so the
// exponentials cannot overflow.
inline double zwanzig_estimate(const double* u, std::size_t n, double kt) {
  double mmax = -u[0] / kt;
  for (std::size_t i = 1; i < n; ++i) mmax = std::max(mmax, -u[i] / kt);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(-u[i] / kt - mmax);
  return -kt * (mmax + std::log(acc / static_cast<double>(n)));
}

}  // namespace detail

// Exponential-averaging (Zwanzig) free energy difference with a contiguous
// block bootstrap for the standard error: the samples are cut into
// `n_blocks` consecutive blocks, resampled with replacement `n_boot` times,
// and the error is the sample standard deviation of the re-estimates.
inline FreeEnergyResult zwanzig(const EnergySamples& samples, std::uint64_t bootstrap_seed = 0,
                                int n_boot = 100, int n_blocks = 10) {
  if (samples.delta_u.empty()) fail(Errc::EmptySamples, "no energy samples");
  if (!(samples.temperature > 0.0)) fail(Errc::ConfigError, "temperature must be positive");
  for (std::size_t i = 0; i < samples.delta_u.size(); ++i)
    if (!std::isfinite(samples.delta_u[i]))
      fail(Errc::InvalidSpec, "non-finite energy sample at index " + std::to_string(i), static_cast<long>(i));

  double kt = kBoltzmannKcalPerMolK * samples.temperature;
  std::size_t n = samples.delta_u.size();

  FreeEnergyResult res;
  res.delta_f = detail::zwanzig_estimate(samples.delta_u.data(), n, kt);

  int nb = std::min<int>(n_blocks, static_cast<int>(n));
  std::vector<std::pair<std::size_t, std::size_t>> blocks(nb);  // [begin, end)
  for (int b = 0; b < nb; ++b) {
    blocks[b].first = n * static_cast<std::size_t>(b) / nb;
    blocks[b].second = n * static_cast<std::size_t>(b + 1) / nb;
  }

  Rng rng(bootstrap_seed);
  std::vector<double> boot(n_boot);
  std::vector<double> resampled;
  resampled.reserve(n + static_cast<std::size_t>(nb));
  for (int r = 0; r < n_boot; ++r) {
    resampled.clear();
    for (int b = 0; b < nb; ++b) {
      auto [lo, hi] = blocks[rng.bounded(static_cast<std::uint64_t>(nb))];
      resampled.insert(resampled.end(), samples.delta_u.begin() + lo, samples.delta_u.begin() + hi);
    }
    boot[r] = detail::zwanzig_estimate(resampled.data(), resampled.size(), kt);
  }
  double mean = 0.0;
  for (double b : boot) mean += b;
  mean /= n_boot;
  double var = 0.0;
  for (double b : boot) var += (b - mean) * (b - mean);
  res.std_err = n_boot > 1 ? std::sqrt(var / (n_boot - 1)) : 0.0;
  return res;
}

// ddF = dF(free leg) - dF(bound leg); errors add in quadrature.
inline FreeEnergyResult relative_binding_free_energy(const FreeEnergyResult& bound, const FreeEnergyResult& free_leg) {
  FreeEnergyResult res;
  res.delta_f = free_leg.delta_f - bound.delta_f;
  res.std_err = std::hypot(bound.std_err, free_leg.std_err);
  return res;
}

// Relative sweetness against a reference compound's ddF, on the exponential
// scale: exp(-(ddF - ddF_ref) / kT).
inline double computed_relative_sweetness(double ddf, double ddf_ref, double temperature = kDefaultTemperatureK) {
  if (!(temperature > 0.0)) fail(Errc::ConfigError, "temperature must be positive");
  return std::exp(-(ddf - ddf_ref) / (kBoltzmannKcalPerMolK * temperature));
}

inline double log10_relative_sweetness(double ddf, double ddf_ref, double temperature = kDefaultTemperatureK) {
  if (!(temperature > 0.0)) fail(Errc::ConfigError, "temperature must be positive");
  return -(ddf - ddf_ref) / (kBoltzmannKcalPerMolK * temperature * std::log(10.0));
}

}  // namespace castelo
