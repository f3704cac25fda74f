#include "vole/kernels.hpp"
#include "vole/errors.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

namespace vole
{

double ModelParams::effective_eps() const
{
    return std::max(0.0, std::min({eps_season, rho, 1.0 - rho}));
}

void ModelParams::validate() const
{
    std::ostringstream msg;
    if (!(a0 > 0.0 && a0 < a1)) {
        msg << "need 0 < a0 < a1 (a0=" << a0 << ", a1=" << a1 << ")";
    }
    else if (!(m0 > 0.0)) {
        msg << "need m0 > 0 (m0=" << m0 << ")";
    }
    else if (!(gamma > 0.0)) {
        msg << "need gamma > 0 (gamma=" << gamma << ")";
    }
    else if (!(rho >= 0.0 && rho < 1.0)) {
        msg << "need 0 <= rho < 1 (rho=" << rho << ")";
    }
    else if (!(eps_season >= 0.0)) {
        msg << "need eps_season >= 0 (eps_season=" << eps_season << ")";
    }
    else if (fecundity_smooth && gamma <= 2.0) {
        msg << "C1 fecundity requires gamma > 2 (gamma=" << gamma << "); use the C0 curve";
    }
    else {
        return;
    }
    throw config_error(msg.str());
}

std::vector<std::string> ModelParams::theory_violations() const
{
    std::vector<std::string> out;
    const double eps = effective_eps();
    const double c0 = (1.0 - rho - eps) * (1.0 - (1.0 + rho + eps + 2.0 * a0) / (2.0 * a1));
    if (!(gamma >= 1.0)) {
        out.emplace_back("gamma >= 1");
    }
    if (!(a1 >= std::max(2.0 * a0, a0 + 1.0))) {
        out.emplace_back("a1 >= max(2 a0, a0 + 1)");
    }
    if (!(c0 * m0 > 2.0)) {
        out.emplace_back("c0 m0 > 2");
    }
    if (!(rho + eps < 1.0)) {
        out.emplace_back("rho + eps < 1");
    }
    return out;
}

bool ModelParams::theory_conditions() const
{
    return theory_violations().empty();
}

double survival_rate(double age, double a1)
{
    if (!(age >= 0.0 && age <= a1)) {
        std::ostringstream msg;
        msg << "survival_rate: age " << age << " outside [0, " << a1 << "]";
        throw domain_error(msg.str());
    }
    return 1.0 - age / a1;
}

double fecundity_c0(double n, double m0, double gamma)
{
    if (!(n >= 0.0)) {
        throw domain_error("fecundity_c0: negative density");
    }
    return n <= 1.0 ? m0 : m0 * std::pow(n, -gamma);
}

FecundityCurve fecundity_coefficients(double gamma)
{
    if (!(gamma > 2.0)) {
        std::ostringstream msg;
        msg << "fecundity_coefficients: gamma=" << gamma << " <= 2 has no C1 junction";
        throw unsupported_error(msg.str());
    }
    FecundityCurve f{};
    const double root2 = std::pow(2.0, 1.0 / gamma);
    f.n2 = root2;
    f.n1 = root2 * (1.0 - 2.0 / gamma);
    f.c = -gamma * gamma / (8.0 * root2 * root2);
    f.a = 0.5 * (1.0 + gamma - gamma * gamma / 4.0);
    f.b = (gamma * gamma / 4.0 - gamma / 2.0) / root2;
    return f;
}

double fecundity_c1(double n, double m0, double gamma)
{
    if (!(n >= 0.0)) {
        throw domain_error("fecundity_c1: negative density");
    }
    const FecundityCurve f = fecundity_coefficients(gamma);
    if (n <= f.n1) {
        return m0;
    }
    if (n <= f.n2) {
        return m0 * (f.a + f.b * n + f.c * n * n);
    }
    return m0 * std::pow(n, -gamma);
}

namespace
{
double phase(double t)
{
    double r = t - std::floor(t);
    // floor can round t - floor(t) up to exactly 1 for tiny negative t
    return r >= 1.0 ? 0.0 : r;
}
} // namespace

double season_c0(double t, double rho)
{
    return phase(t) < rho ? 0.0 : 1.0;
}

double season_c1(double t, double rho, double eps)
{
    eps = std::max(0.0, std::min({eps, rho, 1.0 - rho}));
    if (eps == 0.0) {
        return season_c0(t, rho);
    }
    constexpr double pi = std::numbers::pi;
    const double x = phase(t);
    const double h = 0.5 * eps;
    if (x < h) {
        return 0.5 * (1.0 + std::cos(pi * (x / eps + 0.5)));
    }
    if (x < rho - h) {
        return 0.0;
    }
    if (x < rho + h) {
        return 0.5 * (1.0 + std::cos(pi * ((x - rho) / eps - 0.5)));
    }
    if (x < 1.0 - h) {
        return 1.0;
    }
    return 0.5 * (1.0 + std::cos(pi * ((x - 1.0) / eps + 0.5)));
}

Fecundity::Fecundity(const ModelParams& params)
    : m_m0(params.m0)
    , m_gamma(params.gamma)
    , m_smooth(params.fecundity_smooth)
{
    if (m_smooth) {
        m_curve = fecundity_coefficients(params.gamma);
    }
}

double season(const ModelParams& params, double t)
{
    return params.season_smooth ? season_c1(t, params.rho, params.eps_season) : season_c0(t, params.rho);
}

double equilibrium_density(const ModelParams& params)
{
    const double span = params.a1 - params.a0;
    const double inv_integral = 2.0 * params.a1 / (span * span);
    if (!(inv_integral <= 0.5 * params.m0)) {
        std::ostringstream msg;
        msg << "equilibrium_density: 2 a1/(a1-a0)^2 = " << inv_integral << " exceeds m0/2 = " << 0.5 * params.m0
            << "; no equilibrium on the power branch";
        throw numeric_error(msg.str());
    }
    return std::pow(params.m0 * span * span / (2.0 * params.a1), 1.0 / params.gamma);
}

TheoryBounds population_bounds(const ModelParams& params)
{
    const double eps = params.effective_eps();
    const double ratio = 1.0 - params.a0 / params.a1;
    TheoryBounds b{};
    b.n_max = params.m0 * params.a1 / 2.0 * ratio * ratio;
    b.c0 = (1.0 - params.rho - eps) * (1.0 - (1.0 + params.rho + eps + 2.0 * params.a0) / (2.0 * params.a1));
    b.lower = std::max(0.0, b.c0 * params.m0 / 2.0 * std::pow(b.n_max, 1.0 - params.gamma));
    b.lipschitz = params.m0 * (3.0 - params.a0 / params.a1);
    return b;
}

std::complex<double> characteristic_value(std::complex<double> lambda, double a0, double a1)
{
    if (std::abs(lambda) < 1e-8) {
        const double span = a1 - a0;
        return {span * span / (2.0 * a1), 0.0};
    }
    if (std::abs(lambda) * a1 < 0.5) {
        // Taylor series in lambda; the closed form cancels badly here.
        std::complex<double> sum = 0.0;
        std::complex<double> coef = 1.0; // (-lambda)^n / n!
        double p0 = a0;
        double p1 = a1;
        for (int n = 0; n < 60; ++n) {
            const double moment = (p1 / (n + 1) - p1 * a1 / ((n + 2) * a1)) - (p0 / (n + 1) - p0 * a0 / ((n + 2) * a1));
            const std::complex<double> term = coef * moment;
            sum += term;
            if (std::abs(term) < 1e-18 * std::abs(sum)) {
                break;
            }
            coef *= -lambda / static_cast<double>(n + 1);
            p0 *= a0;
            p1 *= a1;
        }
        return sum;
    }
    const std::complex<double> inv = 1.0 / lambda;
    const std::complex<double> inv2 = inv * inv / a1;
    return (inv * (1.0 - a0 / a1) - inv2) * std::exp(-a0 * lambda) + inv2 * std::exp(-a1 * lambda);
}

std::vector<double> gamma_thresholds(double a0, double a1, int count, double scan_step)
{
    if (count < 1) {
        throw domain_error("gamma_thresholds: count must be >= 1");
    }
    if (!(a0 >= 0.0 && a0 < a1)) {
        throw domain_error("gamma_thresholds: need 0 <= a0 < a1");
    }
    auto im_f = [&](double u) { return characteristic_value({0.0, -u}, a0, a1).imag(); };

    constexpr double chunk = 50.0;
    constexpr double u_limit = 1e4;
    const double scale = (a1 - a0) * (a1 - a0) / (2.0 * a1);

    std::vector<double> out;
    double u_prev = scan_step;
    double f_prev = im_f(u_prev);
    for (double hi = chunk; static_cast<int>(out.size()) < count; hi += chunk) {
        if (hi > u_limit) {
            std::ostringstream msg;
            msg << "gamma_thresholds: found " << out.size() << " of " << count << " thresholds below u=" << u_limit;
            throw numeric_error(msg.str());
        }
        const auto steps = static_cast<long>(std::llround((hi - u_prev) / scan_step));
        const double base = u_prev;
        for (long i = 1; i <= steps && static_cast<int>(out.size()) < count; ++i) {
            const double u = base + static_cast<double>(i) * scan_step;
            const double f = im_f(u);
            if ((f_prev < 0.0) != (f < 0.0)) {
                double lo = u_prev;
                double up = u;
                double f_lo = f_prev;
                while (up - lo > 1e-10) {
                    const double mid = 0.5 * (lo + up);
                    const double f_mid = im_f(mid);
                    if ((f_mid < 0.0) == (f_lo < 0.0)) {
                        lo = mid;
                        f_lo = f_mid;
                    }
                    else {
                        up = mid;
                    }
                }
                const double root = 0.5 * (lo + up);
                const std::complex<double> value = characteristic_value({0.0, -root}, a0, a1);
                if (value.real() < 0.0) {
                    out.push_back(1.0 + scale / std::abs(value));
                }
            }
            u_prev = u;
            f_prev = f;
        }
    }
    if (!std::is_sorted(out.begin(), out.end())) {
        throw numeric_error("gamma_thresholds: thresholds not increasing; scan resolution too coarse");
    }
    return out;
}

} // namespace vole
