#include "vole/analysis.hpp"

#include "vole/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace vole
{

namespace
{

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. If several calls throw,
/// the exception with the smallest index is rethrown.
template <class Fn>
void parallel_for(size_t n, int jobs, Fn&& fn)
{
    const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(jobs, 1)));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<size_t> next{0};
    std::mutex guard;
    size_t failed_at = n;
    std::exception_ptr failure;
    auto worker = [&] {
        for (size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(guard);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back(worker);
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

double euclid(const Point3& a, const Point3& b)
{
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double l1_3d(const Point3& a, const Point3& b)
{
    return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

std::string format_value(double v)
{
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

Point3 shadow_at(const std::vector<double>& series, size_t offset, int p)
{
    return {series[offset], series[offset + static_cast<size_t>(p)], series[offset + 2 * static_cast<size_t>(p)]};
}

} // namespace

// ---------------------------------------------------------------- sweeps

std::string axis_name(SweepAxis axis)
{
    switch (axis) {
    case SweepAxis::Gamma:
        return "gamma";
    case SweepAxis::Rho:
        return "rho";
    case SweepAxis::A0:
        return "a0";
    }
    return "gamma";
}

SweepAxis parse_axis(const std::string& name)
{
    if (name == "gamma") {
        return SweepAxis::Gamma;
    }
    if (name == "rho") {
        return SweepAxis::Rho;
    }
    if (name == "a0") {
        return SweepAxis::A0;
    }
    throw config_error("unknown sweep parameter '" + name + "' (expected gamma, rho or a0)");
}

ModelParams with_axis_value(const ModelParams& base, SweepAxis axis, double value)
{
    ModelParams params = base;
    switch (axis) {
    case SweepAxis::Gamma:
        params.gamma = value;
        break;
    case SweepAxis::Rho:
        params.rho = value;
        break;
    case SweepAxis::A0:
        params.a0 = value;
        break;
    }
    return params;
}

std::vector<double> parameter_grid(double from, double to, double step)
{
    if (!(step > 0.0) || !std::isfinite(from) || !std::isfinite(to) || to < from) {
        throw config_error("parameter grid needs from <= to and step > 0");
    }
    const auto n = static_cast<long long>(std::floor((to - from) / step + 1e-3));
    std::vector<double> grid;
    grid.reserve(static_cast<size_t>(n + 1));
    for (long long i = 0; i <= n; ++i) {
        grid.push_back(from + static_cast<double>(i) * step);
    }
    return grid;
}

BifurcationDiagram bifurcation_sweep(const ModelParams& base, SweepAxis axis, const std::vector<double>& grid,
                                     const SweepOptions& options)
{
    if (grid.empty()) {
        throw config_error("empty sweep grid");
    }
    const bool ascending = grid.size() < 2 || grid[1] > grid[0];
    for (size_t i = 1; i < grid.size(); ++i) {
        if (ascending ? !(grid[i] > grid[i - 1]) : !(grid[i] < grid[i - 1])) {
            throw config_error("sweep grid must be strictly monotone");
        }
    }
    if (options.first_year < 0 || options.last_year < options.first_year
        || options.last_year + (options.delta_t > 0 ? 1 : 0) > options.years) {
        throw config_error("sampling window must lie within the simulated horizon");
    }

    BifurcationDiagram diagram;
    diagram.axis = axis;
    diagram.grid = grid;
    diagram.samples.resize(grid.size());
    diagram.c0_fallback.assign(grid.size(), false);
    diagram.first_year = options.first_year;
    diagram.init = options.init;
    diagram.seed = options.seed;
    diagram.continuation = options.continuation;

    auto params_at = [&](size_t g) {
        ModelParams params = with_axis_value(base, axis, grid[g]);
        if (params.fecundity_smooth && params.gamma <= 2.0) {
            params.fecundity_smooth = false;
            diagram.c0_fallback[g] = true;
        }
        return params;
    };
    auto annotate = [&](size_t g, const Error& e) {
        return Error(e.category(), axis_name(axis) + "=" + format_value(grid[g]) + ": " + e.what());
    };

    if (!options.continuation) {
        std::vector<ModelParams> all;
        all.reserve(grid.size());
        for (size_t g = 0; g < grid.size(); ++g) {
            all.push_back(params_at(g));
        }
        parallel_for(grid.size(), options.jobs, [&](size_t g) {
            try {
                const DiscreteModel model(all[g], options.steps_per_year, options.refine);
                const BirthHistory history = initial_condition(options.init, options.seed, model);
                const Trajectory traj = run(model, history, options.years);
                diagram.samples[g] = annual_samples(traj, options.first_year, options.last_year, options.delta_t);
            } catch (const Error& e) {
                throw annotate(g, e);
            }
        });
        return diagram;
    }

    std::optional<BirthHistory> carry;
    for (size_t g = 0; g < grid.size(); ++g) {
        try {
            const DiscreteModel model(params_at(g), options.steps_per_year, options.refine);
            const BirthHistory history = carry ? *carry : initial_condition(options.init, options.seed, model);
            const Trajectory traj = run(model, history, options.years);
            diagram.samples[g] = annual_samples(traj, options.first_year, options.last_year, options.delta_t);
            const BirthHistory tail = traj.history_at(traj.last_step());
            std::vector<double> births(tail.births().begin(), tail.births().end());
            carry.emplace(std::move(births), 0);
        } catch (const Error& e) {
            throw annotate(g, e);
        }
    }
    return diagram;
}

std::optional<int> detect_period(std::span<const double> samples, double rel_tol, int max_period)
{
    if (samples.size() < 2) {
        return std::nullopt;
    }
    double lo = samples[0];
    double hi = samples[0];
    double amax = 0.0;
    for (double v : samples) {
        if (!std::isfinite(v)) {
            return std::nullopt;
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        amax = std::max(amax, std::abs(v));
    }
    const double tol = rel_tol * std::max(hi - lo, amax);
    const size_t n = samples.size();
    const size_t qmax = std::min<size_t>(static_cast<size_t>(std::max(max_period, 0)), n - 1);
    for (size_t q = 1; q <= qmax; ++q) {
        bool ok = true;
        for (size_t i = 0; i + q < n && ok; ++i) {
            ok = std::abs(samples[i + q] - samples[i]) <= tol;
        }
        if (ok) {
            return static_cast<int>(q);
        }
    }
    return std::nullopt;
}

int component_count(const EmbeddedCloud& cloud, int max_n, double separation)
{
    if (max_n < 1) {
        throw config_error("component_count needs max_n >= 1");
    }
    // n is admissible iff every pair closer than `separation` shares its year
    // class mod n, i.e. n divides the gcd of the year gaps of all close pairs.
    const size_t n = cloud.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return cloud.points[a][0] < cloud.points[b][0]; });
    long long g = 0;
    for (size_t i = 0; i < n; ++i) {
        const Point3& a = cloud.points[order[i]];
        for (size_t j = i + 1; j < n; ++j) {
            const Point3& b = cloud.points[order[j]];
            if (b[0] - a[0] > separation) {
                break;
            }
            if (euclid(a, b) <= separation) {
                g = std::gcd(g, std::abs(cloud.times[order[i]] - cloud.times[order[j]]));
            }
        }
        if (g == 1) {
            return 1;
        }
    }
    if (g == 0) {
        return max_n;
    }
    for (int k = max_n; k > 1; --k) {
        if (g % k == 0) {
            return k;
        }
    }
    return 1;
}

// ---------------------------------------------------------------- dimension

size_t box_count(std::span<const Point3> points, double eps)
{
    if (!(eps > 0.0)) {
        throw domain_error("box size must be positive");
    }
    std::vector<std::array<long long, 3>> keys;
    keys.reserve(points.size());
    for (const Point3& pt : points) {
        keys.push_back({static_cast<long long>(std::floor(pt[0] / eps)), static_cast<long long>(std::floor(pt[1] / eps)),
                        static_cast<long long>(std::floor(pt[2] / eps))});
    }
    std::sort(keys.begin(), keys.end());
    return static_cast<size_t>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

DimensionFit fractal_dimension(std::span<const Point3> points)
{
    if (points.size() < 2) {
        throw numeric_error("fractal dimension needs at least two points");
    }
    Point3 lo = points[0];
    Point3 hi = points[0];
    for (const Point3& pt : points) {
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], pt[c]);
            hi[c] = std::max(hi[c], pt[c]);
        }
    }
    const double diam = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    if (!(diam > 0.0)) {
        throw numeric_error("fractal dimension of a single point");
    }

    DimensionFit fit;
    fit.n0 = points.size();
    constexpr int grid_size = 24;
    for (int k = 0; k < grid_size; ++k) {
        const double eps = diam / 2.0 * std::pow(2.0, -13.0 * k / (grid_size - 1));
        fit.eps_grid.push_back(eps);
        fit.counts.push_back(box_count(points, eps));
    }
    const double limit = static_cast<double>(fit.n0) / 10.0;
    fit.eps0 = fit.eps_grid.back();
    for (size_t k = 0; k < fit.eps_grid.size(); ++k) {
        if (static_cast<double>(fit.counts[k]) >= limit) {
            fit.eps0 = fit.eps_grid[k];
            break;
        }
    }
    const double floor_eps = std::sqrt(fit.eps0);
    std::vector<double> xs;
    std::vector<double> ys;
    fit.in_window.assign(fit.eps_grid.size(), false);
    for (size_t k = 0; k < fit.eps_grid.size(); ++k) {
        if (static_cast<double>(fit.counts[k]) < limit && fit.eps_grid[k] > floor_eps) {
            fit.in_window[k] = true;
            xs.push_back(-std::log10(fit.eps_grid[k]));
            ys.push_back(std::log10(static_cast<double>(fit.counts[k])));
        }
    }
    if (xs.size() < 4) {
        throw numeric_error("insufficient scale range for a dimension fit (" + std::to_string(xs.size())
                            + " box sizes in the window)");
    }
    fit.eps_hi = std::pow(10.0, -xs.front());
    fit.eps_lo = std::pow(10.0, -xs.back());
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
    return fit;
}

// ---------------------------------------------------------------- fixed points

FixedPointResult locate_fixed_point(const Trajectory& traj, long long first_year, long long last_year)
{
    if (last_year < first_year) {
        throw config_error("empty year range");
    }
    const int p = traj.steps_per_year;
    if (!traj.has_step(first_year * p) || !traj.has_step((last_year + 4) * p)) {
        throw bounds_error("fixed point search needs years first..last+4 recorded");
    }
    long long best_year = first_year;
    double best = std::numeric_limits<double>::infinity();
    for (long long year = first_year; year <= last_year; ++year) {
        double d = 0.0;
        for (int k = 0; k < 3; ++k) {
            d += std::abs(traj.mature_at((year + k) * p) - traj.mature_at((year + k + 2) * p));
        }
        if (d < best) {
            best = d;
            best_year = year;
        }
    }
    FixedPointResult res;
    res.state = window_at_step(traj, best_year * p);
    const StateWindow image = window_at_step(traj, (best_year + 2) * p);
    res.residual_l1 = distance(res.state.values, image.values, Norm::L1);
    res.residual_3d = best;
    res.year = best_year;
    res.method = FixedPointMethod::Coarse;
    return res;
}

std::pair<StateWindow, StateWindow> default_bracket(const Trajectory& traj, const FixedPointResult& coarse,
                                                    double margin)
{
    const StateWindow& x = coarse.state;
    const StateWindow y = window_at_step(traj, x.start_step + 2LL * traj.steps_per_year);
    StateWindow a = x;
    StateWindow b = x;
    for (size_t i = 0; i < x.values.size(); ++i) {
        const double d = y.values[i] - x.values[i];
        a.values[i] = std::max(0.0, x.values[i] - margin * d);
        b.values[i] = std::max(0.0, y.values[i] + margin * d);
    }
    return {a, b};
}

FixedPointResult refine_fixed_point(const DiscreteModel& model, const FixedPointResult& coarse,
                                    const StateWindow& bracket_a, const StateWindow& bracket_b,
                                    const RefineOptions& options)
{
    const StateWindow& x0 = coarse.state;
    const size_t len = x0.values.size();
    if (bracket_a.values.size() != len || bracket_b.values.size() != len) {
        throw domain_error("bracket states must match the candidate window length");
    }
    if (options.iterations < 0 || options.samples < 3) {
        throw config_error("refinement needs iterations >= 0 and at least 3 samples");
    }
    FixedPointResult fallback = coarse;
    fallback.method = FixedPointMethod::Refined;
    if (coarse.residual_l1 == 0.0) {
        return fallback;
    }

    const long long two_years = 2LL * model.steps_per_year();
    const int p = model.steps_per_year();
    auto segment = [&](double s) {
        StateWindow w;
        w.start_step = x0.start_step;
        w.values.resize(len);
        for (size_t i = 0; i < len; ++i) {
            w.values[i] = bracket_a.values[i] + s * (bracket_b.values[i] - bracket_a.values[i]);
        }
        return w;
    };
    auto slice = [&](const std::vector<double>& series, long long offset) {
        return std::vector<double>(series.begin() + offset, series.begin() + offset + static_cast<long long>(len));
    };
    const double radius = options.radius_factor
                          * std::max(distance(bracket_a.values, x0.values, Norm::L1),
                                     distance(bracket_b.values, x0.values, Norm::L1));

    double lo = 0.0;
    double hi = 1.0;
    int done = 0;
    bool lost = false;
    const int k = options.samples;
    for (int it = 1; it <= options.iterations; ++it) {
        int first_in = -1;
        int last_in = -1;
        std::vector<double> s(static_cast<size_t>(k));
        for (int j = 0; j < k; ++j) {
            s[static_cast<size_t>(j)] = lo + (hi - lo) * j / (k - 1);
            try {
                const auto series = window_series(model, segment(s[static_cast<size_t>(j)]), it * two_years);
                if (distance(slice(series, it * two_years), x0.values, Norm::L1) < radius) {
                    if (first_in < 0) {
                        first_in = j;
                    }
                    last_in = j;
                }
            } catch (const Error&) {
                // diverged: outside the neighborhood
            }
        }
        if (first_in < 0) {
            lost = true;
            break;
        }
        lo = s[static_cast<size_t>(std::max(first_in - 1, 0))];
        hi = s[static_cast<size_t>(std::min(last_in + 1, k - 1))];
        done = it;
    }

    // Self-distance along the local unstable curve c(s) = T^(2 done)(segment(s)).
    const long long offset = done * two_years;
    auto self_distance = [&](double s) {
        try {
            const auto series = window_series(model, segment(s), offset + two_years);
            return distance(slice(series, offset), slice(series, offset + two_years), Norm::L1);
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    constexpr int grid = 201;
    double best_s = lo;
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (int j = 0; j < grid; ++j) {
        const double s = lo + (hi - lo) * j / (grid - 1);
        const double g = self_distance(s);
        if (g < best) {
            best = g;
            best_s = s;
            best_j = j;
        }
    }
    double a = lo + (hi - lo) * std::max(best_j - 1, 0) / (grid - 1);
    double b = lo + (hi - lo) * std::min(best_j + 1, grid - 1) / (grid - 1);
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double gc = self_distance(c);
    double gd = self_distance(d);
    for (int it = 0; it < 200 && (b - a) > 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(a));
         ++it) {
        if (gc < gd) {
            b = d;
            d = c;
            gd = gc;
            c = b - invphi * (b - a);
            gc = self_distance(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + invphi * (b - a);
            gd = self_distance(d);
        }
    }
    for (auto [s, g] : {std::pair{c, gc}, std::pair{d, gd}}) {
        if (g < best) {
            best = g;
            best_s = s;
        }
    }

    if (!(best < coarse.residual_l1)) {
        fallback.converged = false;
        fallback.method = FixedPointMethod::Coarse;
        return fallback;
    }
    const auto series = window_series(model, segment(best_s), offset + two_years);
    FixedPointResult res;
    res.state.start_step = x0.start_step + offset;
    res.state.values = slice(series, offset);
    const auto image = slice(series, offset + two_years);
    res.residual_l1 = distance(res.state.values, image, Norm::L1);
    res.residual_3d = l1_3d(shadow_at(res.state.values, 0, p), shadow_at(image, 0, p));
    res.method = FixedPointMethod::Refined;
    res.year = coarse.year;
    res.converged = !lost;
    return res;
}

// ---------------------------------------------------------------- differentials

WindowMap two_year_window_map(const DiscreteModel& model, long long start_step)
{
    return [model, start_step](const std::vector<double>& x) {
        StateWindow w{x, start_step};
        return two_year_map(model, w).values;
    };
}

Eigen::MatrixXd jacobian_fd(const WindowMap& map, const std::vector<double>& x, double fd_eps, int jobs)
{
    if (!(fd_eps > 0.0)) {
        throw domain_error("fd_eps must be positive");
    }
    const std::vector<double> fx = map(x);
    const auto rows = static_cast<Eigen::Index>(fx.size());
    const auto cols = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd jac(rows, cols);
    // Forward differences only: x + eps e_i stays in the nonnegative orthant.
    parallel_for(x.size(), jobs, [&](size_t i) {
        std::vector<double> xp = x;
        xp[i] += fd_eps;
        const std::vector<double> fp = map(xp);
        if (fp.size() != fx.size()) {
            throw domain_error("map changed its output length");
        }
        for (Eigen::Index r = 0; r < rows; ++r) {
            jac(r, static_cast<Eigen::Index>(i)) = (fp[static_cast<size_t>(r)] - fx[static_cast<size_t>(r)]) / fd_eps;
        }
    });
    return jac;
}

Eigen::MatrixXd jacobian_fd(const DiscreteModel& model, const StateWindow& x, double fd_eps, int jobs)
{
    return jacobian_fd(two_year_window_map(model, x.start_step), x.values, fd_eps, jobs);
}

SpectrumReport spectrum(const Eigen::MatrixXd& matrix, int k)
{
    if (matrix.rows() != matrix.cols() || matrix.rows() == 0) {
        throw domain_error("spectrum needs a nonempty square matrix");
    }
    if (k < 1 || k > matrix.rows()) {
        throw config_error("spectrum: k must lie in 1..dimension");
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(matrix, true);
    if (solver.info() != Eigen::Success) {
        throw numeric_error("eigen decomposition did not converge");
    }
    const Eigen::VectorXcd values = solver.eigenvalues();
    const Eigen::MatrixXcd vectors = solver.eigenvectors();
    std::vector<Eigen::Index> order(static_cast<size_t>(values.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double ma = std::abs(values[a]);
        const double mb = std::abs(values[b]);
        if (ma != mb) {
            return ma > mb;
        }
        if (values[a].real() != values[b].real()) {
            return values[a].real() > values[b].real();
        }
        return values[a].imag() > values[b].imag();
    });

    const double scale = matrix.norm();
    const Eigen::MatrixXcd a = matrix.cast<std::complex<double>>();
    SpectrumReport report;
    for (int r = 0; r < k; ++r) {
        const Eigen::Index idx = order[static_cast<size_t>(r)];
        const std::complex<double> lambda = values[idx];
        const Eigen::VectorXcd v = vectors.col(idx);
        const double denom = v.norm() * std::max(std::abs(lambda), 1e-12 * scale);
        const double residual = denom > 0.0 ? (a * v - lambda * v).norm() / denom : 0.0;
        if (!(residual < 1e-8)) {
            throw numeric_error("eigenpair " + std::to_string(r + 1) + " residual " + format_value(residual)
                                + " exceeds 1e-8");
        }
        report.eigenvalues.push_back(lambda);
        report.residuals.push_back(residual);
        std::vector<double> shape;
        if (std::abs(lambda.imag()) <= 1e-12 * std::max(std::abs(lambda), 1e-300)) {
            // real eigenvalue: the eigenvector is real up to a complex factor
            Eigen::Index pivot = 0;
            v.cwiseAbs().maxCoeff(&pivot);
            const Eigen::VectorXcd rotated = v * (std::abs(v[pivot]) / v[pivot]);
            shape.resize(static_cast<size_t>(v.size()));
            double mean_abs = 0.0;
            double sum = 0.0;
            for (Eigen::Index i = 0; i < v.size(); ++i) {
                shape[static_cast<size_t>(i)] = rotated[i].real();
                mean_abs += std::abs(rotated[i].real());
                sum += rotated[i].real();
            }
            mean_abs /= static_cast<double>(v.size());
            const double factor = (sum < 0.0 ? -1.0 : 1.0) / mean_abs;
            for (double& e : shape) {
                e *= factor;
            }
        }
        report.leading_vectors.push_back(std::move(shape));
    }
    return report;
}

// ---------------------------------------------------------------- curves

PolylineGeometry polyline_geometry(std::span<const Point3> shadows)
{
    const size_t n = shadows.size();
    if (n < 3) {
        throw domain_error("polyline geometry needs at least 3 vertices");
    }
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    PolylineGeometry geo;
    geo.ds.resize(n - 1);
    std::vector<Point3> tangent(n - 1);
    for (size_t j = 0; j + 1 < n; ++j) {
        const double ds = euclid(shadows[j + 1], shadows[j]);
        geo.ds[j] = ds;
        if (ds > 0.0) {
            for (int c = 0; c < 3; ++c) {
                tangent[j][c] = (shadows[j + 1][c] - shadows[j][c]) / ds;
            }
        } else {
            tangent[j] = {nan, nan, nan};
            ++geo.skipped;
        }
    }
    geo.curvature.resize(n - 2);
    for (size_t j = 0; j + 2 < n; ++j) {
        geo.curvature[j] = geo.ds[j] > 0.0 && geo.ds[j + 1] > 0.0 ? euclid(tangent[j + 1], tangent[j]) / geo.ds[j] : nan;
    }
    return geo;
}

PolylineGeometry polyline_geometry(const Polyline& polyline)
{
    PolylineGeometry geo = polyline_geometry(std::span<const Point3>(polyline.shadows));
    if (polyline.vertices.size() != polyline.shadows.size()) {
        return geo;
    }
    for (size_t j = 0; j + 1 < polyline.vertices.size(); ++j) {
        const auto& a = polyline.vertices[j];
        const auto& b = polyline.vertices[j + 1];
        std::vector<double> t(a.size());
        for (size_t i = 0; i < a.size(); ++i) {
            t[i] = b[i] - a[i];
        }
        const double mean_abs = norm(t, Norm::L1);
        for (double& e : t) {
            e = mean_abs > 0.0 ? e / mean_abs : std::numeric_limits<double>::quiet_NaN();
        }
        geo.tangents.push_back(std::move(t));
    }
    return geo;
}

double arclength(std::span<const Point3> shadows)
{
    double total = 0.0;
    for (size_t j = 0; j + 1 < shadows.size(); ++j) {
        total += euclid(shadows[j + 1], shadows[j]);
    }
    return total;
}

ManifoldResult unstable_manifold(const DiscreteModel& model, const StateWindow& fixpoint,
                                 const std::vector<double>& direction, const ManifoldOptions& options)
{
    const size_t len = fixpoint.values.size();
    if (direction.size() != len) {
        throw domain_error("direction must have the window length");
    }
    if (!(options.eta > 0.0) || !(options.delta > 0.0) || options.iterations < 0 || options.initial_vertices < 2) {
        throw config_error("manifold needs eta > 0, delta > 0, iterations >= 0 and >= 2 initial vertices");
    }
    const double dir_scale = norm(direction, Norm::L1);
    if (!(dir_scale > 0.0)) {
        throw domain_error("direction must be nonzero");
    }
    const int p = model.steps_per_year();
    const long long two_years = 2LL * p;

    struct Vertex {
        double s;
        std::vector<double> state;
        Point3 shadow;
    };
    auto make = [&](double s, int n) {
        StateWindow w;
        w.start_step = fixpoint.start_step;
        w.values.resize(len);
        for (size_t i = 0; i < len; ++i) {
            w.values[i] = fixpoint.values[i] + s * options.delta * direction[i] / dir_scale;
        }
        Vertex v{s, {}, {}};
        v.state = n == 0 ? w.values : advance_window(model, w, n * two_years).values;
        v.shadow = shadow_at(v.state, 0, p);
        return v;
    };

    ManifoldResult result;
    size_t used = 0;
    auto refine = [&](std::vector<Vertex> coarse, int n) {
        std::vector<Vertex> out;
        out.reserve(coarse.size());
        out.push_back(std::move(coarse.front()));
        for (size_t i = 1; i < coarse.size(); ++i) {
            std::vector<Vertex> stack;
            stack.push_back(std::move(coarse[i]));
            while (!stack.empty()) {
                const Vertex& prev = out.back();
                const Vertex& top = stack.back();
                const double mid = 0.5 * (prev.s + top.s);
                const bool splittable = mid != prev.s && mid != top.s;
                if (!result.truncated && splittable && euclid(prev.shadow, top.shadow) > options.eta) {
                    if (used >= options.vertex_budget) {
                        result.truncated = true;
                        continue;
                    }
                    ++used;
                    stack.push_back(make(mid, n));
                } else {
                    out.push_back(std::move(stack.back()));
                    stack.pop_back();
                }
            }
        }
        return out;
    };
    auto store = [&](const std::vector<Vertex>& vs, int n) {
        Polyline line;
        line.start_step = fixpoint.start_step + n * two_years;
        for (const Vertex& v : vs) {
            line.vertices.push_back(v.state);
            line.shadows.push_back(v.shadow);
            line.params.push_back(v.s);
        }
        result.iterates.push_back(std::move(line));
    };

    std::vector<Vertex> current;
    const size_t m = options.initial_vertices;
    for (size_t j = 0; j < m; ++j) {
        current.push_back(make(-1.0 + 2.0 * static_cast<double>(j) / static_cast<double>(m - 1), 0));
    }
    used = current.size();
    current = refine(std::move(current), 0);
    store(current, 0);
    for (int n = 1; n <= options.iterations && !result.truncated; ++n) {
        for (Vertex& v : current) {
            StateWindow w{std::move(v.state), fixpoint.start_step + (n - 1) * two_years};
            v.state = two_year_map(model, w).values;
            v.shadow = shadow_at(v.state, 0, p);
        }
        current = refine(std::move(current), n);
        store(current, n);
    }
    return result;
}

std::vector<Point3> FoldTrack::filament(long long steps) const
{
    if (steps < 0 || series.empty() || static_cast<size_t>(steps + 2LL * steps_per_year) >= series.front().size()) {
        throw bounds_error("filament instant outside the tracked horizon");
    }
    std::vector<Point3> out;
    out.reserve(series.size());
    for (const auto& s : series) {
        out.push_back(shadow_at(s, static_cast<size_t>(steps), steps_per_year));
    }
    return out;
}

FoldTrack fold_track(const DiscreteModel& model, const Trajectory& traj, long long year_a, long long year_b,
                     const FoldOptions& options)
{
    const int p = model.steps_per_year();
    if (traj.steps_per_year != p) {
        throw config_error("trajectory and model use different step counts");
    }
    if (options.n_points < 3 || options.pre_years < 0 || !(options.horizon_years >= 0.0) || options.stride_steps < 1) {
        throw config_error("fold tracking needs >= 3 points, pre_years >= 0, horizon >= 0 and stride >= 1");
    }
    const Point3 end_a = shadow(window_at_step(traj, year_a * p));
    const Point3 end_b = shadow(window_at_step(traj, year_b * p));
    if (euclid(end_a, end_b) < 10.0 * options.eta) {
        throw domain_error("degenerate fold anchors: 3-D distance below 10 eta");
    }
    const StateWindow wa = window_at_step(traj, (year_a - options.pre_years) * p);
    const StateWindow wb = window_at_step(traj, (year_b - options.pre_years) * p);
    const long long pre = static_cast<long long>(options.pre_years) * p;
    const long long h = std::llround(options.horizon_years * p);

    FoldTrack track;
    track.steps_per_year = p;
    track.origin_step = wa.start_step + pre;
    track.n_points = options.n_points;
    track.series.resize(options.n_points);
    const size_t len = wa.values.size();
    for (size_t j = 0; j < options.n_points; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(options.n_points - 1);
        StateWindow w;
        w.start_step = wa.start_step;
        w.values.resize(len);
        for (size_t i = 0; i < len; ++i) {
            w.values[i] = (1.0 - u) * wa.values[i] + u * wb.values[i];
        }
        std::vector<double> s = window_series(model, w, pre + h);
        track.series[j].assign(s.begin() + pre, s.end());
    }
    for (long long k = 0; k <= h; k += options.stride_steps) {
        const std::vector<Point3> shadows = track.filament(k);
        const PolylineGeometry geo = polyline_geometry(shadows);
        double best = -1.0;
        size_t arg = 0;
        for (size_t j = 0; j < geo.curvature.size(); ++j) {
            if (geo.curvature[j] > best) {
                best = geo.curvature[j];
                arg = j + 1;
            }
        }
        track.times.push_back(static_cast<double>(k) / p);
        track.max_curvature.push_back(best);
        track.argmax.push_back(arg);
    }
    return track;
}

double fold_emergence_time(const FoldTrack& track, double factor)
{
    if (track.max_curvature.empty()) {
        return -1.0;
    }
    const double base = track.max_curvature.front();
    for (size_t i = 0; i < track.times.size(); ++i) {
        if (track.max_curvature[i] >= factor * base) {
            return track.times[i];
        }
    }
    return -1.0;
}

size_t fold_location(const FoldTrack& track, double t_lo, double t_hi)
{
    double best = -1.0;
    size_t arg = 0;
    bool any = false;
    for (size_t i = 0; i < track.times.size(); ++i) {
        if (track.times[i] >= t_lo && track.times[i] <= t_hi && track.max_curvature[i] > best) {
            best = track.max_curvature[i];
            arg = track.argmax[i];
            any = true;
        }
    }
    if (!any) {
        throw bounds_error("no tracked instant in the requested time range");
    }
    return arg;
}

FoldAnchors find_fold_anchors(const DiscreteModel& model, const Trajectory& traj, long long first_year,
                              long long last_year, const FoldOptions& fold, const AnchorSearchOptions& search)
{
    const int p = model.steps_per_year();
    if (first_year - fold.pre_years < 0 || last_year < first_year) {
        throw config_error("anchor search range must start at least pre_years into the trajectory");
    }
    const auto count = static_cast<size_t>(last_year - first_year + 1);
    std::vector<Point3> now(count);
    std::vector<Point3> before(count);
    for (size_t i = 0; i < count; ++i) {
        const long long year = first_year + static_cast<long long>(i);
        now[i] = shadow(window_at_step(traj, year * p));
        before[i] = shadow(window_at_step(traj, (year - fold.pre_years) * p));
    }
    const double min_chord = 10.0 * fold.eta;
    struct Pair {
        double pre;
        size_t a;
        size_t b;
    };
    std::vector<Pair> pairs;
    std::vector<size_t> order(count);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return before[a][0] < before[b][0]; });
    const double r = search.preimage_radius;
    for (size_t i = 0; i < count; ++i) {
        for (size_t j = i + 1; j < count && before[order[j]][0] - before[order[i]][0] <= r; ++j) {
            const size_t a = std::min(order[i], order[j]);
            const size_t b = std::max(order[i], order[j]);
            if (std::abs(before[a][1] - before[b][1]) > r || std::abs(before[a][2] - before[b][2]) > r) {
                continue;
            }
            const double chord = euclid(now[a], now[b]);
            if (chord < min_chord || chord > search.max_chord) {
                continue;
            }
            const long long ya = first_year + static_cast<long long>(a);
            const long long yb = first_year + static_cast<long long>(b);
            const double pre = distance(window_at_step(traj, (ya - fold.pre_years) * p).values,
                                        window_at_step(traj, (yb - fold.pre_years) * p).values, Norm::Linf);
            if (pre <= r) {
                pairs.push_back({pre, a, b});
            }
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
        return x.pre != y.pre ? x.pre < y.pre : (x.a != y.a ? x.a < y.a : x.b < y.b);
    });
    if (pairs.size() > search.candidates) {
        pairs.resize(search.candidates);
    }

    FoldOptions probe = fold;
    probe.n_points = search.probe_points;
    probe.horizon_years = 2.0;
    probe.stride_steps = 1;
    std::optional<FoldAnchors> best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (const Pair& pr : pairs) {
        const long long ya = first_year + static_cast<long long>(pr.a);
        const long long yb = first_year + static_cast<long long>(pr.b);
        FoldTrack track;
        try {
            track = fold_track(model, traj, ya, yb, probe);
        } catch (const Error&) {
            continue;
        }
        if (!(track.max_curvature.front() * euclid(now[pr.a], now[pr.b]) <= search.straightness)
            || fold_emergence_time(track, search.fold_factor) < search.min_fold_time) {
            continue;
        }
        const size_t vertex = fold_location(track, 0.0, probe.horizon_years);
        const double fraction = static_cast<double>(vertex) / static_cast<double>(probe.n_points - 1);
        const double gap = std::abs(fraction - search.target_fraction);
        if (gap < best_gap) {
            best_gap = gap;
            best = FoldAnchors{ya, yb, pr.pre, fraction};
        }
    }
    if (!best) {
        throw numeric_error("no anchor pair with a forming fold in the search range");
    }
    return *best;
}

std::vector<SurveyEntry> hyperbolicity_survey(const WindowMap& map, const std::vector<std::vector<double>>& points,
                                              double fd_eps, double threshold_log, int k, int jobs)
{
    std::vector<SurveyEntry> out(points.size());
    parallel_for(points.size(), jobs, [&](size_t i) {
        SurveyEntry& e = out[i];
        e.point_id = i;
        e.spectrum = spectrum(jacobian_fd(map, points[i], fd_eps), k);
        e.spectrum.fd_epsilon = fd_eps;
        for (const auto& lambda : e.spectrum.eigenvalues) {
            const double modulus = std::abs(lambda);
            const bool flag = modulus > 0.0 && std::abs(std::log10(modulus)) < threshold_log;
            e.flagged.push_back(flag);
            e.any_flagged = e.any_flagged || flag;
        }
    });
    return out;
}

std::vector<SurveyEntry> hyperbolicity_survey(const DiscreteModel& model, const std::vector<StateWindow>& points,
                                              double fd_eps, double threshold_log, int k, int jobs)
{
    std::vector<SurveyEntry> out(points.size());
    parallel_for(points.size(), jobs, [&](size_t i) {
        const WindowMap map = two_year_window_map(model, points[i].start_step);
        out[i] = hyperbolicity_survey(map, {points[i].values}, fd_eps, threshold_log, k, 1).front();
        out[i].point_id = i;
    });
    return out;
}

std::vector<size_t> farthest_point_sampling(std::span<const Point3> points, size_t count)
{
    std::vector<size_t> picked;
    if (points.empty() || count == 0) {
        return picked;
    }
    count = std::min(count, points.size());
    std::vector<double> dist(points.size(), std::numeric_limits<double>::infinity());
    size_t current = 0;
    for (size_t c = 0; c < count; ++c) {
        picked.push_back(current);
        size_t next = 0;
        double far = -1.0;
        for (size_t i = 0; i < points.size(); ++i) {
            dist[i] = std::min(dist[i], euclid(points[i], points[current]));
            if (dist[i] > far) {
                far = dist[i];
                next = i;
            }
        }
        current = next;
    }
    return picked;
}

} // namespace vole
