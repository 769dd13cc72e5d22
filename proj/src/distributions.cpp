#include "cqfm/distributions.hpp"

#include "cqfm/core.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

namespace cqfm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxBisection = 200;

struct FamilyName {
  ErrorFamily family;
  const char* name;
};

constexpr FamilyName kNames[] = {
    {ErrorFamily::SkewNormal, "skew-normal"},
    {ErrorFamily::SkewT, "skew-t"},
    {ErrorFamily::AsymLaplace, "asym-laplace"},
    {ErrorFamily::LogNormal, "log-normal"},
    {ErrorFamily::MixtureSkewNormal, "mixture-skew-normal"},
    {ErrorFamily::Normal, "normal"},
    {ErrorFamily::T1, "t1"},
    {ErrorFamily::Laplace, "laplace"},
    {ErrorFamily::MixtureNormal9, "mixture-normal-9"},
    {ErrorFamily::MixtureNormal100, "mixture-normal-100"},
};

std::size_t expected_params(ErrorFamily f) {
  switch (f) {
    case ErrorFamily::SkewNormal: return 3;
    case ErrorFamily::SkewT: return 4;
    case ErrorFamily::AsymLaplace: return 3;
    case ErrorFamily::LogNormal: return 2;
    case ErrorFamily::MixtureSkewNormal: return 4;
    case ErrorFamily::Normal: return 2;
    case ErrorFamily::T1: return 0;
    case ErrorFamily::Laplace: return 2;
    case ErrorFamily::MixtureNormal9: return 2;
    case ErrorFamily::MixtureNormal100: return 2;
  }
  return 0;
}

// E[Z / sqrt(W/df)] factor for the skew-t: sqrt(df/pi) Gamma((df-1)/2) / Gamma(df/2).
double skew_t_b(double df) {
  return std::sqrt(df / kPi) * std::exp(std::lgamma(0.5 * (df - 1.0)) - std::lgamma(0.5 * df));
}

// Bisection for an increasing function on [lo, hi]; returns the root.
double bisect_increasing(const std::function<double(double)>& f, double target,
                         double lo, double hi, double tol, const char* what) {
  for (int step = 0; step < kMaxBisection; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= tol) return 0.5 * (lo + hi);
  }
  throw ArgumentError(std::string(what) + ": bisection did not converge in 200 steps");
}

struct SkewNormalDirect {
  double xi, omega, delta;
};

SkewNormalDirect skew_normal_direct(double mean, double sd, double gamma1) {
  const double delta = solve_skew_normal(gamma1).delta;
  const double mu_z = delta * std::sqrt(2.0 / kPi);
  const double omega = sd / std::sqrt(1.0 - mu_z * mu_z);
  return {mean - omega * mu_z, omega, delta};
}

double draw_skew_normal(const SkewNormalDirect& d, Philox& rng) {
  const double u0 = std::abs(rng.normal());
  const double u1 = rng.normal();
  return d.xi + d.omega * (d.delta * u0 + std::sqrt(1.0 - d.delta * d.delta) * u1);
}

}  // namespace

std::string to_string(ErrorFamily f) {
  for (const auto& n : kNames) {
    if (n.family == f) return n.name;
  }
  return "?";
}

ErrorFamily parse_error_family(const std::string& s) {
  for (const auto& n : kNames) {
    if (s == n.name) return n.family;
  }
  std::string all;
  for (const auto& n : kNames) all += std::string(all.empty() ? "" : ", ") + n.name;
  throw ArgumentError("unknown error family '" + s + "' (expected one of " + all + ")");
}

ErrorSpec ErrorSpec::defaults(ErrorFamily family) {
  ErrorSpec s;
  s.family = family;
  s.center = true;
  switch (family) {
    case ErrorFamily::SkewNormal: s.params = {0.0, 1.0, 0.99}; break;
    case ErrorFamily::SkewT: s.params = {0.0, 1.0, 0.99, 3.0}; break;
    case ErrorFamily::AsymLaplace: s.params = {0.0, 0.5, 4.0}; break;
    case ErrorFamily::LogNormal: s.params = {0.0, 1.5}; break;
    case ErrorFamily::MixtureSkewNormal: s.params = {0.9, 1.0, 3.0, 0.99}; break;
    case ErrorFamily::Normal: s.params = {0.0, 1.0}; break;
    case ErrorFamily::T1: s.center = false; break;
    case ErrorFamily::Laplace: s.params = {0.0, 1.0}; break;
    case ErrorFamily::MixtureNormal9: s.params = {0.9, 9.0}; break;
    case ErrorFamily::MixtureNormal100: s.params = {0.9, 100.0}; break;
  }
  return s;
}

void ErrorSpec::validate() const {
  if (params.size() != expected_params(family)) {
    throw ArgumentError(to_string(family) + " expects " +
                        std::to_string(expected_params(family)) + " parameters");
  }
  auto positive = [&](std::size_t i, const char* what) {
    if (!(params[i] > 0.0)) throw ArgumentError(to_string(family) + ": " + what + " must be > 0");
  };
  auto weight = [&](std::size_t i) {
    if (!(params[i] >= 0.0 && params[i] <= 1.0)) {
      throw ArgumentError(to_string(family) + ": mixture weight must lie in [0, 1]");
    }
  };
  switch (family) {
    case ErrorFamily::SkewNormal:
    case ErrorFamily::SkewT:
    case ErrorFamily::Normal:
      positive(1, "sd");
      break;
    case ErrorFamily::AsymLaplace:
      positive(1, "scale");
      positive(2, "kappa");
      break;
    case ErrorFamily::LogNormal: positive(1, "sigma"); break;
    case ErrorFamily::MixtureSkewNormal:
      weight(0);
      positive(1, "sd1");
      positive(2, "sd2");
      break;
    case ErrorFamily::T1:
      if (center) throw ArgumentError("t1 has no mean; centering is undefined");
      break;
    case ErrorFamily::Laplace: positive(1, "scale"); break;
    case ErrorFamily::MixtureNormal9:
    case ErrorFamily::MixtureNormal100:
      weight(0);
      positive(1, "variance");
      break;
  }
  for (double p : params) {
    if (!std::isfinite(p)) throw ArgumentError(to_string(family) + ": non-finite parameter");
  }
}

double skew_normal_skewness(double delta) {
  const double mu = delta * std::sqrt(2.0 / kPi);
  return 0.5 * (4.0 - kPi) * mu * mu * mu / std::pow(1.0 - mu * mu, 1.5);
}

double skew_t_skewness(double delta, double df) {
  const double mu = skew_t_b(df) * delta;
  const double var = df / (df - 2.0) - mu * mu;
  return mu * (df * (3.0 - delta * delta) / (df - 3.0) - 3.0 * df / (df - 2.0) + 2.0 * mu * mu) /
         std::pow(var, 1.5);
}

double skew_t_excess_kurtosis(double delta, double df) {
  const double mu = skew_t_b(df) * delta;
  const double mu2 = mu * mu;
  const double var = df / (df - 2.0) - mu2;
  const double m4 = 3.0 * df * df / ((df - 2.0) * (df - 4.0)) -
                    4.0 * mu2 * df * (3.0 - delta * delta) / (df - 3.0) +
                    6.0 * mu2 * df / (df - 2.0) - 3.0 * mu2 * mu2;
  return m4 / (var * var) - 3.0;
}

SkewNormalShape solve_skew_normal(double gamma1) {
  const double limit = skew_normal_skewness(1.0);
  if (!(std::abs(gamma1) < limit)) {
    std::ostringstream os;
    os << "skew-normal skewness " << gamma1 << " infeasible; feasible range is (-"
       << limit << ", " << limit << ")";
    throw ArgumentError(os.str());
  }
  if (gamma1 == 0.0) return {0.0};
  const double delta = bisect_increasing(skew_normal_skewness, std::abs(gamma1), 0.0, 1.0,
                                         1e-15, "skew-normal shape");
  return {std::copysign(delta, gamma1)};
}

SkewTShape solve_skew_t(double gamma1, double gamma2) {
  const double g1 = std::abs(gamma1);
  // Inner solve: delta matching g1 at fixed df.
  auto delta_for = [&](double df) {
    const double reach = skew_t_skewness(1.0 - 1e-15, df);
    if (!(g1 < reach)) {
      std::ostringstream os;
      os << "skew-t skewness " << gamma1 << " infeasible at df=" << df
         << "; feasible |gamma1| < " << reach;
      throw ArgumentError(os.str());
    }
    if (g1 == 0.0) return 0.0;
    return bisect_increasing([df](double d) { return skew_t_skewness(d, df); }, g1, 0.0,
                             1.0 - 1e-15, 1e-15, "skew-t delta");
  };
  // Outer solve on x = ln(df - 4): kurtosis decreases in df.
  auto kurt_at = [&](double x) {
    const double df = 4.0 + std::exp(x);
    return skew_t_excess_kurtosis(delta_for(df), df);
  };
  double lo = std::log(1e-3);  // df = 4.001
  double hi = std::log(1e5);
  const double k_lo = kurt_at(lo);
  const double k_hi = kurt_at(hi);
  if (!(gamma2 <= k_lo && gamma2 >= k_hi)) {
    std::ostringstream os;
    os << "skew-t excess kurtosis " << gamma2 << " infeasible for skewness " << gamma1
       << "; feasible range is [" << k_hi << ", " << k_lo << "]";
    throw ArgumentError(os.str());
  }
  const double x = bisect_increasing([&](double v) { return -kurt_at(v); }, -gamma2, lo, hi,
                                     1e-13, "skew-t degrees of freedom");
  const double df = 4.0 + std::exp(x);
  return {std::copysign(delta_for(df), gamma1), df};
}

Moments analytic_moments(const ErrorSpec& spec) {
  spec.validate();
  const auto& p = spec.params;
  Moments m;
  switch (spec.family) {
    case ErrorFamily::SkewNormal:
      m = {p[0], p[1], p[2], 0.0, true};
      {
        const double delta = solve_skew_normal(p[2]).delta;
        const double mu = delta * std::sqrt(2.0 / kPi);
        const double s2 = 1.0 - mu * mu;
        m.excess_kurtosis = 2.0 * (kPi - 3.0) * mu * mu * mu * mu / (s2 * s2);
      }
      break;
    case ErrorFamily::SkewT: m = {p[0], p[1], p[2], p[3], true}; break;
    case ErrorFamily::AsymLaplace: {
      const double k = p[2];
      const double c = p[1] / std::sqrt(2.0);
      const double var = k * k + 1.0 / (k * k);
      m.mean = p[0] + c * (1.0 / k - k);
      m.sd = c * std::sqrt(var);
      m.skewness = 2.0 * (1.0 / (k * k * k) - k * k * k) / std::pow(var, 1.5);
      const double k4 = k * k * k * k;
      m.excess_kurtosis = 6.0 * (k4 + 1.0 / k4) / (var * var);
      break;
    }
    case ErrorFamily::LogNormal: {
      const double s2 = p[1] * p[1];
      const double e = std::exp(s2);
      m.mean = std::exp(p[0] + 0.5 * s2);
      m.sd = std::sqrt((e - 1.0) * std::exp(2.0 * p[0] + s2));
      m.skewness = (e + 2.0) * std::sqrt(e - 1.0);
      m.excess_kurtosis = e * e * e * e + 2.0 * e * e * e + 3.0 * e * e - 6.0;
      break;
    }
    case ErrorFamily::MixtureSkewNormal: {
      // Components have mean 0 and the same skewness, so moments combine
      // through raw moments of order 2, 3 and 4.
      const double w = p[0];
      const double delta = solve_skew_normal(p[3]).delta;
      const double mu = delta * std::sqrt(2.0 / kPi);
      const double s2 = 1.0 - mu * mu;
      const double ek = 2.0 * (kPi - 3.0) * mu * mu * mu * mu / (s2 * s2);
      auto raw = [&](double sd, int order) {
        if (order == 2) return sd * sd;
        if (order == 3) return p[3] * sd * sd * sd;
        return (ek + 3.0) * sd * sd * sd * sd;
      };
      const double m2 = w * raw(p[1], 2) + (1 - w) * raw(p[2], 2);
      const double m3 = w * raw(p[1], 3) + (1 - w) * raw(p[2], 3);
      const double m4 = w * raw(p[1], 4) + (1 - w) * raw(p[2], 4);
      m = {0.0, std::sqrt(m2), m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0, true};
      break;
    }
    case ErrorFamily::Normal: m = {p[0], p[1], 0.0, 0.0, true}; break;
    case ErrorFamily::T1: m.finite = false; break;
    case ErrorFamily::Laplace: m = {p[0], std::sqrt(2.0) * p[1], 0.0, 3.0, true}; break;
    case ErrorFamily::MixtureNormal9:
    case ErrorFamily::MixtureNormal100: {
      const double w = p[0];
      const double m2 = w + (1 - w) * p[1];
      const double m4 = 3.0 * (w + (1 - w) * p[1] * p[1]);
      m = {0.0, std::sqrt(m2), 0.0, m4 / (m2 * m2) - 3.0, true};
      break;
    }
  }
  if (spec.center && m.finite) m.mean = 0.0;
  return m;
}

void sample_error(const ErrorSpec& spec, Philox& rng, double* out, std::size_t n) {
  spec.validate();
  const auto& p = spec.params;
  double shift = 0.0;
  if (spec.center) shift = analytic_moments(ErrorSpec{spec.family, p, false}).mean;

  switch (spec.family) {
    case ErrorFamily::SkewNormal: {
      const auto d = skew_normal_direct(p[0], p[1], p[2]);
      for (std::size_t i = 0; i < n; ++i) out[i] = draw_skew_normal(d, rng);
      break;
    }
    case ErrorFamily::SkewT: {
      const auto shape = solve_skew_t(p[2], p[3]);
      const double mu_z = skew_t_b(shape.df) * shape.delta;
      const double omega = p[1] / std::sqrt(shape.df / (shape.df - 2.0) - mu_z * mu_z);
      const double xi = p[0] - omega * mu_z;
      const SkewNormalDirect base{0.0, 1.0, shape.delta};
      for (std::size_t i = 0; i < n; ++i) {
        const double z = draw_skew_normal(base, rng);
        const double w = rng.chi_squared(shape.df);
        out[i] = xi + omega * z / std::sqrt(w / shape.df);
      }
      break;
    }
    case ErrorFamily::AsymLaplace: {
      const double c = p[1] / std::sqrt(2.0);
      const double k = p[2];
      for (std::size_t i = 0; i < n; ++i) {
        const double u1 = rng.uniform();
        const double u2 = rng.uniform();
        out[i] = p[0] + c * (k * std::log(u1) - std::log(u2) / k);
      }
      break;
    }
    case ErrorFamily::LogNormal:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(p[0] + p[1] * rng.normal());
      break;
    case ErrorFamily::MixtureSkewNormal: {
      const auto d1 = skew_normal_direct(0.0, p[1], p[3]);
      const auto d2 = skew_normal_direct(0.0, p[2], p[3]);
      for (std::size_t i = 0; i < n; ++i) {
        const bool first = rng.uniform() < p[0];
        out[i] = draw_skew_normal(first ? d1 : d2, rng);
      }
      break;
    }
    case ErrorFamily::Normal:
      for (std::size_t i = 0; i < n; ++i) out[i] = p[0] + p[1] * rng.normal();
      break;
    case ErrorFamily::T1:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::tan(kPi * (rng.uniform() - 0.5));
      break;
    case ErrorFamily::Laplace:
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = p[0] + p[1] * (rng.exponential() - rng.exponential());
      }
      break;
    case ErrorFamily::MixtureNormal9:
    case ErrorFamily::MixtureNormal100: {
      const double sd2 = std::sqrt(p[1]);
      for (std::size_t i = 0; i < n; ++i) {
        const bool first = rng.uniform() < p[0];
        out[i] = (first ? 1.0 : sd2) * rng.normal();
      }
      break;
    }
  }
  if (shift != 0.0) {
    for (std::size_t i = 0; i < n; ++i) out[i] -= shift;
  }
}

std::vector<double> sample_error(const ErrorSpec& spec, std::size_t n,
                                 std::uint64_t rng_seed) {
  if (n < 1) throw ArgumentError("sample_error: n must be >= 1");
  Philox rng(rng_seed);
  std::vector<double> out(n);
  sample_error(spec, rng, out.data(), n);
  return out;
}

}  // namespace cqfm
