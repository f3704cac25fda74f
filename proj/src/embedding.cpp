#include "vole/embedding.hpp"

#include "vole/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vole
{

namespace
{

double log_coordinate(double v, long long year)
{
    if (!(v > 0.0)) {
        throw domain_error("log-scale embedding needs N > 0 (year " + std::to_string(year) + ")");
    }
    return std::log10(v);
}

Point3 project(std::span<const double> w, int p, Scale scale, long long year)
{
    Point3 pt{w[0], w[static_cast<size_t>(p)], w[static_cast<size_t>(2 * p)]};
    if (scale == Scale::Log) {
        for (double& c : pt) {
            c = log_coordinate(c, year);
        }
    }
    return pt;
}

void check_range(long long first_year, long long last_year)
{
    if (last_year < first_year) {
        throw config_error("empty year range");
    }
}

} // namespace

EmbeddedCloud embed3(const Trajectory& traj, long long first_year, long long last_year, double delta_t, Scale scale)
{
    check_range(first_year, last_year);
    const int p = traj.steps_per_year;
    EmbeddedCloud cloud;
    cloud.delta_t = delta_t;
    cloud.scale = scale;
    const auto count = static_cast<size_t>(last_year - first_year + 1);
    cloud.points.reserve(count);
    cloud.times.reserve(count);
    for (long long year = first_year; year <= last_year; ++year) {
        const long long s = sample_step(year, delta_t, p);
        Point3 pt{traj.mature_at(s), traj.mature_at(s + p), traj.mature_at(s + 2LL * p)};
        if (scale == Scale::Log) {
            for (double& c : pt) {
                c = log_coordinate(c, year);
            }
        }
        cloud.points.push_back(pt);
        cloud.times.push_back(year);
    }
    return cloud;
}

StateWindow window_at_step(const Trajectory& traj, long long start_step)
{
    const long long len = 2LL * traj.steps_per_year + 1;
    if (!traj.has_step(start_step) || !traj.has_step(start_step + len - 1)) {
        throw bounds_error("window at step " + std::to_string(start_step) + " outside the recorded horizon");
    }
    const auto off = static_cast<size_t>(start_step - traj.first_step);
    StateWindow w;
    w.start_step = start_step;
    w.values.assign(traj.mature.begin() + static_cast<std::ptrdiff_t>(off),
                    traj.mature.begin() + static_cast<std::ptrdiff_t>(off + static_cast<size_t>(len)));
    return w;
}

StateWindow state_window(const Trajectory& traj, long long year, double delta_t)
{
    if (traj.steps_per_year != 100) {
        throw unsupported_error("state windows are defined for p = 100 only");
    }
    return window_at_step(traj, sample_step(year, delta_t, traj.steps_per_year));
}

Point3 shadow(std::span<const double> window_values)
{
    if (window_values.size() < 3 || window_values.size() % 2 == 0) {
        throw domain_error("window length must be 2p+1");
    }
    const size_t p = window_values.size() / 2;
    return {window_values[0], window_values[p], window_values[2 * p]};
}

Point3 shadow(const StateWindow& window)
{
    return shadow(std::span<const double>(window.values));
}

double norm(std::span<const double> x, Norm kind)
{
    if (x.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    switch (kind) {
    case Norm::L1:
        for (double v : x) {
            acc += std::abs(v);
        }
        return acc / static_cast<double>(x.size());
    case Norm::L2:
        for (double v : x) {
            acc += v * v;
        }
        return std::sqrt(acc / static_cast<double>(x.size()));
    case Norm::Linf:
        for (double v : x) {
            acc = std::max(acc, std::abs(v));
        }
        return acc;
    }
    return acc;
}

double distance(std::span<const double> a, std::span<const double> b, Norm kind)
{
    if (a.size() != b.size()) {
        throw domain_error("distance between vectors of different length");
    }
    const size_t n = a.size();
    if (n == 0) {
        return 0.0;
    }
    double acc = 0.0;
    switch (kind) {
    case Norm::L1:
        for (size_t i = 0; i < n; ++i) {
            acc += std::abs(a[i] - b[i]);
        }
        return acc / static_cast<double>(n);
    case Norm::L2:
        for (size_t i = 0; i < n; ++i) {
            const double d = a[i] - b[i];
            acc += d * d;
        }
        return std::sqrt(acc / static_cast<double>(n));
    case Norm::Linf:
        for (size_t i = 0; i < n; ++i) {
            acc = std::max(acc, std::abs(a[i] - b[i]));
        }
        return acc;
    }
    return acc;
}

std::vector<DistortionEntry> projection_distortion(const Trajectory& traj, std::span<const long long> centers,
                                                   double r, Norm kind, long long first_year, long long last_year,
                                                   double delta_t, Scale scale)
{
    if (!(r > 0.0)) {
        throw config_error("ball radius must be positive");
    }
    check_range(first_year, last_year);
    const int p = traj.steps_per_year;
    const size_t len = 2 * static_cast<size_t>(p) + 1;
    const auto count = static_cast<size_t>(last_year - first_year + 1);

    // Windows of every cloud year, stored back to back.
    std::vector<double> windows(count * len);
    std::vector<Point3> points(count);
    for (size_t i = 0; i < count; ++i) {
        const long long year = first_year + static_cast<long long>(i);
        const StateWindow w = window_at_step(traj, sample_step(year, delta_t, p));
        std::copy(w.values.begin(), w.values.end(), windows.begin() + static_cast<std::ptrdiff_t>(i * len));
        points[i] = project(w.values, p, scale, year);
    }
    auto window = [&](size_t i) { return std::span<const double>(windows.data() + i * len, len); };

    std::vector<DistortionEntry> out;
    out.reserve(centers.size());
    for (long long c : centers) {
        if (c < first_year || c > last_year) {
            throw bounds_error("distortion center " + std::to_string(c) + " outside the cloud years");
        }
        const auto ci = static_cast<size_t>(c - first_year);
        std::vector<size_t> ball{ci};
        for (size_t i = 0; i < count; ++i) {
            if (i != ci && distance(window(i), window(ci), kind) < r) {
                ball.push_back(i);
            }
        }
        DistortionEntry e;
        e.center = c;
        e.ball_count = ball.size() - 1;
        for (size_t a = 0; a < ball.size(); ++a) {
            for (size_t b = a + 1; b < ball.size(); ++b) {
                const double d3 = distance(points[ball[a]], points[ball[b]], kind);
                const double d201 = distance(window(ball[a]), window(ball[b]), kind);
                if (d3 < 1e-12) {
                    if (d201 >= 1e-12) {
                        ++e.coincident;
                    }
                    continue;
                }
                const double ratio = d201 / d3;
                if (!e.defined || ratio > e.sup_ratio) {
                    e.sup_ratio = ratio;
                }
                e.defined = true;
            }
        }
        out.push_back(e);
    }
    return out;
}

DivergenceResult neighborhood_divergence(const Trajectory& traj, long long center_year, double r, Norm kind,
                                         double horizon_years, long long first_year, long long last_year)
{
    if (!(r > 0.0) || !(horizon_years >= 0.0)) {
        throw config_error("divergence needs r > 0 and a nonnegative horizon");
    }
    check_range(first_year, last_year);
    const int p = traj.steps_per_year;
    const long long h = std::llround(horizon_years * p);
    const long long center_step = center_year * p;
    const StateWindow center = window_at_step(traj, center_step);
    auto covered = [&](long long s) { return traj.has_step(s - h) && traj.has_step(s + std::max(h, 2LL * p)); };
    if (!covered(center_step)) {
        throw bounds_error("horizon exceeds the recorded trajectory around the center");
    }

    DivergenceResult res;
    res.lags.reserve(static_cast<size_t>(2 * h + 1));
    for (long long k = -h; k <= h; ++k) {
        res.lags.push_back(static_cast<double>(k) / p);
    }
    for (long long year = first_year; year <= last_year; ++year) {
        const long long s0 = year * p;
        if (!covered(s0)) {
            continue;
        }
        const StateWindow w = window_at_step(traj, s0);
        const double d = distance(w.values, center.values, kind);
        if (!(d < r)) {
            continue;
        }
        DivergenceCurve curve;
        curve.year = year;
        curve.window_distance = d;
        curve.offsets.reserve(res.lags.size());
        for (long long k = -h; k <= h; ++k) {
            curve.offsets.push_back(traj.mature_at(s0 + k) - traj.mature_at(center_step + k));
        }
        res.curves.push_back(std::move(curve));
    }
    return res;
}

} // namespace vole
