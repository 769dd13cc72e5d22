#pragma once

// Error laws for the Monte-Carlo lab. Skewed normal and skewed t are given
// in centred parameters (mean, sd, skewness, excess kurtosis) and converted
// to Azzalini's direct parameters numerically.

#include "cqfm/core.hpp"
#include "cqfm/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cqfm {

enum class ErrorFamily {
  SkewNormal,         // params: mean, sd, gamma1
  SkewT,              // params: mean, sd, gamma1, gamma2
  AsymLaplace,        // params: location, scale, kappa
  LogNormal,          // params: mu, sigma (of the underlying normal)
  MixtureSkewNormal,  // params: weight, sd1, sd2, gamma1 (both means 0)
  Normal,             // params: mean, sd
  T1,                 // standard Cauchy, no params
  Laplace,            // params: location, scale
  MixtureNormal9,     // params: weight, variance2: w N(0,1) + (1-w) N(0,var2)
  MixtureNormal100,   // same, default variance2 = 100
};

std::string to_string(ErrorFamily f);
ErrorFamily parse_error_family(const std::string& s);

struct ErrorSpec {
  ErrorFamily family = ErrorFamily::Normal;
  std::vector<double> params;
  // Subtract the analytic mean. Not allowed for T1.
  bool center = true;

  // Parameter settings used in the simulation study; centred except t1.
  static ErrorSpec defaults(ErrorFamily family);
  void validate() const;
};

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool finite = true;  // false for T1
};

// Analytic moments of the (possibly centred) law.
Moments analytic_moments(const ErrorSpec& spec);

// Direct parameters of a standard skew-normal / skew-t.
struct SkewNormalShape {
  double delta;  // alpha / sqrt(1 + alpha^2)
};
struct SkewTShape {
  double delta;
  double df;
};

// Skewness of the skew-normal as a function of delta.
double skew_normal_skewness(double delta);
// Skewness and excess kurtosis of the skew-t with (delta, df), df > 4.
double skew_t_skewness(double delta, double df);
double skew_t_excess_kurtosis(double delta, double df);

// Inverts the skewness map by bisection. |gamma1| must be < 0.99527.
SkewNormalShape solve_skew_normal(double gamma1);
// Nested bisection: inner on delta for gamma1, outer on df for gamma2.
// Throws ArgumentError naming the feasible range when the target cannot be
// reached, or when either search needs more than 200 steps.
SkewTShape solve_skew_t(double gamma1, double gamma2);

// Draws n i.i.d. values.
std::vector<double> sample_error(const ErrorSpec& spec, std::size_t n,
                                 std::uint64_t rng_seed);

// Same, from an existing generator; used by the panel simulator.
void sample_error(const ErrorSpec& spec, Philox& rng, double* out, std::size_t n);

}  // namespace cqfm
