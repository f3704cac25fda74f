#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

namespace vole
{

/// Constants of the continuous model. Ages and times are in years.
struct ModelParams {
    double a0 = 0.18; ///< maturation age
    double a1 = 2.0; ///< maximal age
    double m0 = 50.0; ///< fecundity ceiling (births per female per year)
    double gamma = 8.25; ///< density-dependence exponent
    double rho = 0.41; ///< winter length as a fraction of the year
    double eps_season = 0.1; ///< width of the spring and autumn ramps
    bool fecundity_smooth = true; ///< C1 fecundity with a parabolic junction
    bool season_smooth = true; ///< C1 cosine-ramped season

    /// Ramp width actually used: min(eps_season, rho, 1 - rho).
    double effective_eps() const;

    /// Throws a config error when an invariant (0 < a0 < a1, m0 > 0, ...) fails.
    void validate() const;

    /// gamma >= 1, a1 >= max(2 a0, a0 + 1), c0 m0 > 2 and rho + eps < 1.
    bool theory_conditions() const;

    /// Human-readable list of the theory conditions that do not hold.
    std::vector<std::string> theory_violations() const;
};

/// Parabola joining the constant and power branches of the C1 fecundity:
/// m(N) / m0 = a + b N + c N^2 on (n1, n2].
struct FecundityCurve {
    double n1;
    double n2;
    double a;
    double b;
    double c;
};

struct TheoryBounds {
    double n_max; ///< upper bound on the mature density
    double c0; ///< survival integral over the guaranteed summer
    double lower; ///< asymptotic lower bound on the mature density
    double lipschitz; ///< Lipschitz constant of t -> N(t)
};

double survival_rate(double age, double a1);

double fecundity_c0(double n, double m0, double gamma);

/// Closed-form coefficients. Requires gamma > 2, otherwise n1 <= 0.
FecundityCurve fecundity_coefficients(double gamma);

double fecundity_c1(double n, double m0, double gamma);

double season_c0(double t, double rho);

/// eps is clamped to min(eps, rho, 1 - rho).
double season_c1(double t, double rho, double eps);

/// Fecundity with coefficients computed once; m(N) as configured by the params.
class Fecundity
{
public:
    explicit Fecundity(const ModelParams& params);

    double operator()(double n) const
    {
        if (!m_smooth) {
            return n <= 1.0 ? m_m0 : m_m0 * std::pow(n, -m_gamma);
        }
        if (n <= m_curve.n1) {
            return m_m0;
        }
        if (n <= m_curve.n2) {
            return m_m0 * (m_curve.a + (m_curve.b + m_curve.c * n) * n);
        }
        return m_m0 * std::pow(n, -m_gamma);
    }

    bool smooth() const
    {
        return m_smooth;
    }

private:
    double m_m0;
    double m_gamma;
    bool m_smooth;
    FecundityCurve m_curve{};
};

/// Seasonal factor as configured by the params (C0 or C1).
double season(const ModelParams& params, double t);

/// Non-seasonal equilibrium [m0 (a1 - a0)^2 / (2 a1)]^(1/gamma).
double equilibrium_density(const ModelParams& params);

TheoryBounds population_bounds(const ModelParams& params);

/// F(lambda) = int_{a0}^{a1} S(a) exp(-a lambda) da in closed form.
std::complex<double> characteristic_value(std::complex<double> lambda, double a0, double a1);

/// Hopf thresholds gamma_0 < gamma_1 < ... of the non-seasonal equilibrium.
/// scan_step is the sign-change scan resolution on u.
std::vector<double> gamma_thresholds(double a0, double a1, int count, double scan_step = 1e-3);

} // namespace vole
