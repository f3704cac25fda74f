#pragma once

#include "vole/simulator.hpp"

#include <array>
#include <span>
#include <vector>

namespace vole
{

using Point3 = std::array<double, 3>;

enum class Scale
{
    Linear,
    Log, // log10 componentwise
};

/// Normalized norms: ||x||_p^p = (1/n) sum |x_i|^p, ||x||_inf = max |x_i|.
enum class Norm
{
    L1,
    L2,
    Linf,
};

/// Points (N(t), N(t+1), N(t+2)) at integer years t, shifted by delta_t.
struct EmbeddedCloud {
    std::vector<Point3> points;
    std::vector<long long> times;
    double delta_t = 0.0;
    Scale scale = Scale::Linear;

    size_t size() const
    {
        return points.size();
    }
};

EmbeddedCloud embed3(const Trajectory& traj, long long first_year, long long last_year, double delta_t = 0.0,
                     Scale scale = Scale::Linear);

/// 2p+1 samples N(t + k/p), k = 0..2p, starting at year t + delta_t. Requires p = 100.
StateWindow state_window(const Trajectory& traj, long long year, double delta_t = 0.0);

/// Same as state_window without the p = 100 restriction.
StateWindow window_at_step(const Trajectory& traj, long long start_step);

/// 3-D shadow of a window: entries 0, p and 2p.
Point3 shadow(const StateWindow& window);
Point3 shadow(std::span<const double> window_values);

double norm(std::span<const double> x, Norm kind);
double distance(std::span<const double> a, std::span<const double> b, Norm kind);

struct DistortionEntry {
    long long center = 0;
    double sup_ratio = 0.0; ///< max over pairs in the ball of d_201 / d_3
    size_t ball_count = 0; ///< ball members other than the center
    size_t coincident = 0; ///< pairs with d_3 < 1e-12 and distinct windows
    bool defined = false; ///< false when no pair contributed a ratio
    bool infinite() const
    {
        return coincident > 0;
    }
};

/// For each center year, the ball of cloud years whose windows are within r of
/// the center window (in the chosen norm), and the largest ratio of window
/// distance to 3-D distance over unordered pairs inside the ball.
std::vector<DistortionEntry> projection_distortion(const Trajectory& traj, std::span<const long long> centers,
                                                   double r, Norm kind, long long first_year, long long last_year,
                                                   double delta_t = 0.0, Scale scale = Scale::Linear);

struct DivergenceCurve {
    long long year = 0;
    double window_distance = 0.0;
    std::vector<double> offsets; ///< N(year + s) - N(center + s), s on the step grid
};

struct DivergenceResult {
    std::vector<double> lags; ///< s values in years
    std::vector<DivergenceCurve> curves;
};

/// Orbit points in [first_year, last_year] whose windows lie within r of the
/// center's window, compared with the center over s in [-horizon, horizon].
DivergenceResult neighborhood_divergence(const Trajectory& traj, long long center_year, double r, Norm kind,
                                         double horizon_years, long long first_year, long long last_year);

} // namespace vole
