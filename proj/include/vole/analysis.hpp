#pragma once

#include "vole/embedding.hpp"
#include "vole/simulator.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vole
{

// ---------------------------------------------------------------- sweeps

enum class SweepAxis
{
    Gamma,
    Rho,
    A0,
};

std::string axis_name(SweepAxis axis);
SweepAxis parse_axis(const std::string& name);

/// Copy of `base` with the swept parameter set to `value`.
ModelParams with_axis_value(const ModelParams& base, SweepAxis axis, double value);

/// from, from + step, ... up to `to` (inclusive within step / 1000).
std::vector<double> parameter_grid(double from, double to, double step);

struct SweepOptions {
    int steps_per_year = 100;
    int refine = 100;
    int years = 20000;
    long long first_year = 19001;
    long long last_year = 20000;
    double delta_t = 0.0;
    InitialCondition init = InitialCondition::I;
    std::uint64_t seed = 1;
    bool continuation = false;
    int jobs = 1; ///< ignored for continuation sweeps
};

struct BifurcationDiagram {
    SweepAxis axis = SweepAxis::Gamma;
    std::vector<double> grid;
    std::vector<std::vector<double>> samples; ///< samples[g][y - first_year]
    std::vector<bool> c0_fallback; ///< smooth fecundity replaced by C0 (gamma <= 2)
    long long first_year = 0;
    InitialCondition init = InitialCondition::I;
    std::uint64_t seed = 0;
    bool continuation = false;
};

BifurcationDiagram bifurcation_sweep(const ModelParams& base, SweepAxis axis, const std::vector<double>& grid,
                                     const SweepOptions& options);

/// Smallest q <= max_period with |x[i+q] - x[i]| <= tol for all i, where
/// tol = rel_tol * max(spread, max |x|).
std::optional<int> detect_period(std::span<const double> samples, double rel_tol = 1e-4, int max_period = 64);

/// Largest n <= max_n whose year-mod-n classes are pairwise more than
/// `separation` apart (Euclidean, 3-D).
int component_count(const EmbeddedCloud& cloud, int max_n, double separation = 0.05);

// ---------------------------------------------------------------- dimension

size_t box_count(std::span<const Point3> points, double eps);

struct DimensionFit {
    std::vector<double> eps_grid; ///< decreasing
    std::vector<size_t> counts;
    std::vector<bool> in_window;
    size_t n0 = 0; ///< number of points
    double eps0 = 0.0; ///< largest eps with count >= n0 / 10
    double eps_lo = 0.0;
    double eps_hi = 0.0;
    double slope = 0.0;
    double r2 = 0.0;
};

/// Box-counting dimension over 24 geometric box sizes from diam/2 to
/// diam/2^14, diam being the largest side of the bounding box.
DimensionFit fractal_dimension(std::span<const Point3> points);

// ---------------------------------------------------------------- fixed points

enum class FixedPointMethod
{
    Coarse,
    Refined,
};

struct FixedPointResult {
    StateWindow state;
    double residual_l1 = 0.0; ///< normalized L1 distance between x and T^2 x (201 samples)
    double residual_3d = 0.0; ///< unnormalized L1 distance between the 3-D shadows
    FixedPointMethod method = FixedPointMethod::Coarse;
    long long year = 0; ///< coarse candidate year
    bool converged = true;
};

/// Sampled year in [first_year, last_year] minimizing the 3-D L1 distance
/// between x3(t) and x3(t + 2).
FixedPointResult locate_fixed_point(const Trajectory& traj, long long first_year, long long last_year);

/// Two states around a coarse candidate: x(t) and x(t + 2), pushed apart by
/// `margin` of their difference on each side.
std::pair<StateWindow, StateWindow> default_bracket(const Trajectory& traj, const FixedPointResult& coarse,
                                                    double margin = 0.5);

struct RefineOptions {
    int iterations = 10;
    int samples = 65; ///< parameter samples per iteration
    double radius_factor = 1.5; ///< neighborhood radius / largest bracket offset
};

FixedPointResult refine_fixed_point(const DiscreteModel& model, const FixedPointResult& coarse,
                                    const StateWindow& bracket_a, const StateWindow& bracket_b,
                                    const RefineOptions& options = {});

// ---------------------------------------------------------------- differentials

/// A map acting on window values.
using WindowMap = std::function<std::vector<double>(const std::vector<double>&)>;

/// T^2 on windows starting at `start_step`.
WindowMap two_year_window_map(const DiscreteModel& model, long long start_step);

Eigen::MatrixXd jacobian_fd(const WindowMap& map, const std::vector<double>& x, double fd_eps, int jobs = 1);
Eigen::MatrixXd jacobian_fd(const DiscreteModel& model, const StateWindow& x, double fd_eps, int jobs = 1);

struct SpectrumReport {
    std::vector<std::complex<double>> eigenvalues; ///< moduli nonincreasing
    std::vector<double> residuals; ///< ||Av - lv|| / (|l| ||v||) per eigenvalue
    std::vector<std::vector<double>> leading_vectors; ///< real leading vectors, mean |v_i| = 1
    double fd_epsilon = 0.0;
};

SpectrumReport spectrum(const Eigen::MatrixXd& matrix, int k);

// ---------------------------------------------------------------- curves

struct Polyline {
    std::vector<std::vector<double>> vertices; ///< 201-D states (may be empty for 3-D only curves)
    std::vector<Point3> shadows;
    std::vector<double> params;
    long long start_step = 0;

    size_t size() const
    {
        return shadows.size();
    }
};

struct PolylineGeometry {
    std::vector<double> ds; ///< ds[j] = |P[j+1] - P[j]|, size n - 1
    std::vector<double> curvature; ///< |T[j+1] - T[j]| / ds[j], size n - 2
    std::vector<std::vector<double>> tangents; ///< 201-D tangents, mean |t_i| = 1
    size_t skipped = 0; ///< segments of zero length
};

PolylineGeometry polyline_geometry(std::span<const Point3> shadows);
PolylineGeometry polyline_geometry(const Polyline& polyline);

double arclength(std::span<const Point3> shadows);

struct ManifoldOptions {
    int iterations = 12;
    double eta = 1e-2;
    double delta = 1e-5; ///< half-length of the initial segment (L1 mean units of direction)
    size_t initial_vertices = 11;
    size_t vertex_budget = 1000000;
};

struct ManifoldResult {
    std::vector<Polyline> iterates; ///< iterates[n] = T^(2n) of the initial segment
    bool truncated = false;
};

ManifoldResult unstable_manifold(const DiscreteModel& model, const StateWindow& fixpoint,
                                 const std::vector<double>& direction, const ManifoldOptions& options = {});

struct FoldOptions {
    size_t n_points = 1000;
    double horizon_years = 4.0;
    int pre_years = 10;
    int stride_steps = 1; ///< recording interval in steps
    double eta = 1e-2;
};

struct FoldTrack {
    int steps_per_year = 100;
    long long origin_step = 0; ///< step of t = 0
    std::vector<double> times; ///< years since t = 0
    std::vector<double> max_curvature;
    std::vector<size_t> argmax; ///< middle vertex of the sharpest corner
    size_t n_points = 0;
    std::vector<std::vector<double>> series; ///< per filament point, N from t = 0 on

    /// 3-D shadows of the filament `steps` after t = 0.
    std::vector<Point3> filament(long long steps) const;
};

FoldTrack fold_track(const DiscreteModel& model, const Trajectory& traj, long long year_a, long long year_b,
                     const FoldOptions& options = {});

/// First recorded time at which the maximum curvature exceeds `factor` times
/// its value at t = 0; negative if never.
double fold_emergence_time(const FoldTrack& track, double factor = 100.0);

/// Vertex index that holds the global curvature maximum over t in [t_lo, t_hi].
size_t fold_location(const FoldTrack& track, double t_lo, double t_hi);

struct AnchorSearchOptions {
    double preimage_radius = 2e-3; ///< L-inf distance between the windows pre_years earlier
    double max_chord = 1.5; ///< largest 3-D anchor distance
    size_t candidates = 200; ///< closest preimage pairs probed
    size_t probe_points = 200;
    double fold_factor = 100.0; ///< curvature growth that counts as a fold
    double straightness = 10.0; ///< bound on max curvature * chord at t = 0
    double min_fold_time = 1.0; ///< the filament must stay unfolded this long
    double target_fraction = 0.5; ///< preferred fold position along the segment
};

struct FoldAnchors {
    long long year_a = 0;
    long long year_b = 0;
    double preimage_distance = 0.0;
    double probe_fraction = 0.0; ///< fold position found by the probe track
};

/// Pair of orbit years whose states pre_years earlier are close, whose joining
/// filament is nearly straight at t = 0 and folds in [min_fold_time, 2]. Among such
/// pairs the one with the fold nearest target_fraction wins.
FoldAnchors find_fold_anchors(const DiscreteModel& model, const Trajectory& traj, long long first_year,
                              long long last_year, const FoldOptions& fold = {}, const AnchorSearchOptions& search = {});

struct SurveyEntry {
    size_t point_id = 0;
    SpectrumReport spectrum;
    std::vector<bool> flagged;
    bool any_flagged = false;
};

std::vector<SurveyEntry> hyperbolicity_survey(const DiscreteModel& model, const std::vector<StateWindow>& points,
                                              double fd_eps = 1e-3, double threshold_log = 0.17609125905568124,
                                              int k = 5, int jobs = 1);
std::vector<SurveyEntry> hyperbolicity_survey(const WindowMap& map, const std::vector<std::vector<double>>& points,
                                              double fd_eps, double threshold_log, int k, int jobs = 1);

/// Greedy farthest-point subset of the cloud; starts at index 0.
std::vector<size_t> farthest_point_sampling(std::span<const Point3> points, size_t count);

} // namespace vole
