#include "synthetic.hpp"

#include "vole/analysis.hpp"
#include "vole/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

using namespace vole;
using testing_support::chaotic_params;
using testing_support::synthetic_trajectory;

namespace
{

std::vector<Point3> segment_cloud(size_t n)
{
    std::vector<Point3> pts;
    for (size_t i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(n);
        pts.push_back({u, 0.5 * u, 0.25});
    }
    return pts;
}

// Left ends of the 2^depth middle-thirds intervals, times a segment.
std::vector<Point3> cantor_segment_cloud(int depth, size_t per_column)
{
    std::vector<double> xs{0.0};
    double width = 1.0;
    for (int d = 0; d < depth; ++d) {
        width /= 3.0;
        std::vector<double> next;
        for (double x : xs) {
            next.push_back(x);
            next.push_back(x + 2.0 * width);
        }
        xs = std::move(next);
    }
    std::vector<Point3> pts;
    for (double x : xs) {
        for (size_t j = 0; j < per_column; ++j) {
            pts.push_back({x, static_cast<double>(j) / static_cast<double>(per_column), 0.0});
        }
    }
    return pts;
}

struct FixedPointSetup {
    DiscreteModel model{chaotic_params()};
    Trajectory traj;
    FixedPointResult fp;

    FixedPointSetup()
    {
        traj = run(model, initial_condition(InitialCondition::II, 1, model), 20000);
        const FixedPointResult coarse = locate_fixed_point(traj, 1001, 19990);
        const auto [a, b] = default_bracket(traj, coarse);
        fp = refine_fixed_point(model, coarse, a, b);
    }
};

const FixedPointSetup& fixed_point_setup()
{
    static const FixedPointSetup setup;
    return setup;
}

} // namespace

TEST_CASE("parameter grids and axes")
{
    const auto g = parameter_grid(2.0, 2.5, 0.1);
    REQUIRE(g.size() == 6);
    CHECK(g.back() == doctest::Approx(2.5));
    CHECK(parse_axis("rho") == SweepAxis::Rho);
    CHECK(axis_name(SweepAxis::A0) == "a0");
    CHECK_THROWS_AS(parse_axis("m0"), Error);
    CHECK_THROWS_AS(parameter_grid(1.0, 0.0, 0.1), Error);
    const ModelParams p = with_axis_value(ModelParams{}, SweepAxis::Rho, 0.3);
    CHECK(p.rho == 0.3);
    CHECK(p.gamma == 8.25);
}

TEST_CASE("period detection")
{
    const std::vector<double> flat(200, 3.0);
    CHECK(detect_period(flat) == 1);
    std::vector<double> cycle;
    for (int i = 0; i < 200; ++i) {
        cycle.push_back(i % 2 == 0 ? 1.0 : 2.0);
    }
    CHECK(detect_period(cycle) == 2);
    std::vector<double> four;
    for (int i = 0; i < 200; ++i) {
        four.push_back(1.0 + 0.1 * (i % 4) + 1e-9 * (i % 3));
    }
    CHECK(detect_period(four) == 4);

    const DiscreteModel model(chaotic_params());
    const Trajectory t = run(model, initial_condition(InitialCondition::II, 1, model), 3000);
    CHECK_FALSE(detect_period(annual_samples(t, 2001, 3000), 1e-4).has_value());
}

TEST_CASE("sweeps at the start of the period-doubling range")
{
    ModelParams base;
    base.eps_season = 0.0;
    SweepOptions opt;
    opt.years = 3000;
    opt.first_year = 2001;
    opt.last_year = 3000;
    const BifurcationDiagram d = bifurcation_sweep(base, SweepAxis::Gamma, {2.0, 4.0}, opt);
    REQUIRE(d.samples.size() == 2);
    CHECK(d.c0_fallback[0]);
    CHECK_FALSE(d.c0_fallback[1]);
    const auto [lo, hi] = std::minmax_element(d.samples[0].begin(), d.samples[0].end());
    CHECK(*hi - *lo < 1e-6);
    CHECK(detect_period(d.samples[1]) == 2);
    std::set<long long> clusters;
    for (double v : d.samples[1]) {
        clusters.insert(std::llround(v * 1e4));
    }
    CHECK(clusters.size() == 2);
}

TEST_CASE("sweeps are deterministic and independent of the job count")
{
    ModelParams base;
    SweepOptions opt;
    opt.years = 400;
    opt.first_year = 301;
    opt.last_year = 400;
    const auto grid = parameter_grid(6.0, 7.0, 0.25);
    const BifurcationDiagram a = bifurcation_sweep(base, SweepAxis::Gamma, grid, opt);
    opt.jobs = 4;
    const BifurcationDiagram b = bifurcation_sweep(base, SweepAxis::Gamma, grid, opt);
    CHECK(a.samples == b.samples);
    opt.continuation = true;
    const BifurcationDiagram c = bifurcation_sweep(base, SweepAxis::Gamma, grid, opt);
    const BifurcationDiagram e = bifurcation_sweep(base, SweepAxis::Gamma, grid, opt);
    CHECK(c.samples == e.samples);
    CHECK(c.samples.front() == a.samples.front());
    CHECK(c.continuation);
}

TEST_CASE("component counting")
{
    const Trajectory two = synthetic_trajectory(300, [](long long s) { return (s / 100) % 2 == 0 ? 1.0 : 3.0; });
    CHECK(component_count(embed3(two, 1, 250), 20) == 2);
    const Trajectory flat = synthetic_trajectory(300, [](long long) { return 1.0; });
    CHECK(component_count(embed3(flat, 1, 250), 20) == 1);
    const Trajectory three = synthetic_trajectory(400, [](long long s) { return 1.0 + static_cast<double>((s / 100) % 3); });
    CHECK(component_count(embed3(three, 1, 300), 20) == 3);
}

TEST_CASE("period is a multiple of the component count")
{
    ModelParams p;
    p.eps_season = 0.0;
    for (double gamma : {5.0, 8.61}) {
        p.gamma = gamma;
        const DiscreteModel model(p);
        const Trajectory t = run(model, initial_condition(InitialCondition::I, 1, model), 20000);
        const int n = component_count(embed3(t, 19001, 19998), 20);
        const auto q = detect_period(annual_samples(t, 19001, 20000));
        CAPTURE(gamma);
        CAPTURE(n);
        if (q) {
            CHECK(*q % n == 0);
        }
    }
}

TEST_CASE("box counting")
{
    const std::vector<Point3> single{{0.3, 0.2, 0.1}};
    for (double eps : {1.0, 0.1, 1e-6}) {
        CHECK(box_count(single, eps) == 1);
    }
    std::vector<Point3> seg;
    for (int i = 0; i < 1000; ++i) {
        seg.push_back({(i + 0.5) / 1000.0, 0.0, 0.0});
    }
    CHECK(std::abs(static_cast<long>(box_count(seg, 0.01)) - 100) <= 2);

    std::vector<Point3> square;
    for (int i = 0; i < 400; ++i) {
        for (int j = 0; j < 400; ++j) {
            square.push_back({(i + 0.5) / 400.0, (j + 0.5) / 400.0, 0.0});
        }
    }
    const double r = static_cast<double>(box_count(square, 0.05)) / static_cast<double>(box_count(square, 0.1));
    CHECK(r == doctest::Approx(4.0).epsilon(0.1));
    CHECK_THROWS_AS(box_count(square, 0.0), Error);

    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point3> cloud(5000);
    for (auto& pt : cloud) {
        pt = {u(gen), u(gen) * u(gen), 0.2 * u(gen)};
    }
    size_t prev = 0;
    for (double eps = 1.0; eps > 1e-3; eps /= 1.3) {
        const size_t c = box_count(cloud, eps);
        CHECK(c >= prev);
        prev = c;
    }
    const double eps = 0.125;
    std::vector<Point3> moved = cloud;
    for (auto& pt : moved) {
        pt = {pt[0] + 3 * eps, pt[1] - 5 * eps, pt[2] + 17 * eps};
    }
    CHECK(box_count(moved, eps) == box_count(cloud, eps));
}

TEST_CASE("box-counting dimension of reference sets")
{
    const DimensionFit seg = fractal_dimension(segment_cloud(100000));
    CHECK(seg.slope == doctest::Approx(1.0).epsilon(0.1));
    CHECK(seg.r2 > 0.99);
    CHECK(seg.n0 == 100000);
    for (size_t i = 1; i < seg.counts.size(); ++i) {
        CHECK(seg.counts[i] >= seg.counts[i - 1]);
        CHECK(seg.eps_grid[i] < seg.eps_grid[i - 1]);
    }

    const auto cantor = cantor_segment_cloud(8, 400);
    const DimensionFit c = fractal_dimension(cantor);
    const double expected = std::log(2.0) / std::log(3.0) + 1.0;
    CHECK(std::abs(c.slope - expected) < 0.1);

    std::mt19937_64 gen(11);
    std::vector<Point3> half;
    std::bernoulli_distribution keep(0.5);
    for (const auto& pt : cantor) {
        if (keep(gen)) {
            half.push_back(pt);
        }
    }
    CHECK(std::abs(fractal_dimension(half).slope - c.slope) < 0.1);

    const std::vector<Point3> tiny{{0, 0, 0}, {1, 1, 1}, {0.5, 0.5, 0.5}};
    try {
        fractal_dimension(tiny);
        FAIL("expected a numeric error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Numeric);
    }
}

TEST_CASE("fixed point search on synthetic orbits")
{
    const auto f = [](long long s) {
        return 2.0 + std::sin(2.0 * std::numbers::pi * static_cast<double>(s) / 200.0);
    };
    const Trajectory two = synthetic_trajectory(400, f);
    const FixedPointResult r = locate_fixed_point(two, 10, 300);
    CHECK(r.residual_3d < 1e-12);
    CHECK(r.residual_l1 < 1e-12);
    CHECK(r.state.values.size() == 201);

    ModelParams p;
    p.rho = 0.0;
    p.eps_season = 0.0;
    p.gamma = 5.0;
    const DiscreteModel model(p);
    const Trajectory t = run(model, initial_condition(InitialCondition::II, 1, model), 3000);
    const FixedPointResult eq = locate_fixed_point(t, 2000, 2990);
    CHECK(eq.residual_3d < 1e-8);

    StateWindow a = eq.state;
    StateWindow b = eq.state;
    for (size_t i = 0; i < a.values.size(); ++i) {
        a.values[i] -= 1e-3;
        b.values[i] += 1e-3;
    }
    const FixedPointResult refined = refine_fixed_point(model, eq, a, b);
    CHECK(refined.residual_l1 <= eq.residual_l1);
    CHECK(refined.residual_3d <= eq.residual_3d + 1e-12);
    double moved = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        moved = std::max(moved, std::abs(refined.state.values[i] - eq.state.values[i]));
    }
    CHECK(moved < 1e-6);
    CHECK_THROWS_AS(locate_fixed_point(t, 2000, 2999), Error);
}

TEST_CASE("refinement improves the sampled fixed point")
{
    const auto& s = fixed_point_setup();
    CHECK(s.fp.method == FixedPointMethod::Refined);
    CHECK(s.fp.converged);
    const FixedPointResult coarse = locate_fixed_point(s.traj, 1001, 19990);
    CHECK(s.fp.residual_3d <= coarse.residual_3d / 100.0);
    CHECK(s.fp.residual_l1 <= coarse.residual_l1);
    const StateWindow img = two_year_map(s.model, s.fp.state);
    CHECK(distance(img.values, s.fp.state.values, Norm::L1) == doctest::Approx(s.fp.residual_l1).epsilon(1e-6));
}

TEST_CASE("finite differences on surrogate maps")
{
    const int n = 201;
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            a(i, j) = u(gen) / n;
        }
    }
    const WindowMap linear = [&](const std::vector<double>& x) {
        const Eigen::VectorXd y = a * Eigen::Map<const Eigen::VectorXd>(x.data(), n);
        return std::vector<double>(y.data(), y.data() + n);
    };
    std::vector<double> x(n);
    for (double& v : x) {
        v = 1.0 + u(gen);
    }
    const Eigen::MatrixXd j1 = jacobian_fd(linear, x, 1e-6, 1);
    const Eigen::MatrixXd j4 = jacobian_fd(linear, x, 1e-6, 4);
    CHECK((j1 - a).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(j1 == j4);

    // quadratic in the first coordinate, contracting elsewhere
    const double x0 = 1.3;
    const WindowMap quad = [](const std::vector<double>& v) {
        std::vector<double> y(v.size());
        y[0] = v[0] * v[0];
        for (size_t i = 1; i < v.size(); ++i) {
            y[i] = 0.5 * v[i];
        }
        return y;
    };
    std::vector<double> at(n, 1.0);
    at[0] = x0;
    for (double eps : {1e-3, 1e-6}) {
        const SpectrumReport r = spectrum(jacobian_fd(quad, at, eps), 2);
        CHECK(std::abs(r.eigenvalues[0].real() - 2.0 * x0) <= 2.0 * eps);
        CHECK(r.eigenvalues[0].imag() == 0.0);
        CHECK(std::abs(r.eigenvalues[1]) == doctest::Approx(0.5));
    }
    CHECK_THROWS_AS(jacobian_fd(quad, at, 0.0), Error);
}

TEST_CASE("two-year map against a direct implementation")
{
    const auto& s = fixed_point_setup();
    const DiscreteModel& model = s.model;
    const StateWindow w = window_at_step(s.traj, 3000 * 100 + 37);
    const auto sw = model.survival_weights();
    // births from window entries 1..200, then the renewal sum forward
    std::vector<double> births(601, 0.0);
    std::vector<double> mature(601, 0.0);
    for (int k = 0; k <= 200; ++k) {
        mature[static_cast<size_t>(k)] = w.values[static_cast<size_t>(k)];
    }
    for (long long k = 1; k <= 400; ++k) {
        if (k > 200) {
            double n = 0.0;
            for (int j = 1; j <= 200; ++j) {
                n += sw[static_cast<size_t>(j - 1)] * births[static_cast<size_t>(k - j)];
            }
            mature[static_cast<size_t>(k)] = n;
        }
        births[static_cast<size_t>(k)] = model.births_from(mature[static_cast<size_t>(k)], w.start_step + k);
    }
    const StateWindow img = two_year_map(model, w);
    for (size_t k = 0; k <= 200; ++k) {
        REQUIRE(img.values[k] == doctest::Approx(mature[200 + k]).epsilon(1e-12));
    }
}

TEST_CASE("differential at the extinct state")
{
    const DiscreteModel model(chaotic_params());
    StateWindow zero;
    zero.start_step = 0;
    zero.values.assign(201, 0.0);
    const Eigen::MatrixXd jac = jacobian_fd(model, zero, 1e-9);
    // one mature individual at summer step i gives m0 e_i / p births, which then
    // survive and reproduce linearly
    const int i = 60;
    const auto sw = model.survival_weights();
    std::vector<double> births(601, 0.0);
    std::vector<double> mature(601, 0.0);
    mature[i] = 1.0;
    for (long long k = 1; k <= 400; ++k) {
        if (k > 200) {
            double n = 0.0;
            for (int j = 1; j <= 200; ++j) {
                n += sw[static_cast<size_t>(j - 1)] * births[static_cast<size_t>(k - j)];
            }
            mature[static_cast<size_t>(k)] = n;
        }
        births[static_cast<size_t>(k)]
            = model.params().m0 * mature[static_cast<size_t>(k)] * model.seasonal_weight(k) / 100.0;
    }
    for (int r = 0; r <= 200; ++r) {
        CHECK(jac(r, i) == doctest::Approx(mature[static_cast<size_t>(200 + r)]).epsilon(1e-6).scale(1e-12));
    }
    CHECK(jac.col(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("spectra")
{
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
    d.diagonal() << 1.0, 3.0, 0.5;
    const SpectrumReport r = spectrum(d, 3);
    CHECK(r.eigenvalues[0] == std::complex<double>(3.0, 0.0));
    CHECK(r.eigenvalues[1] == std::complex<double>(1.0, 0.0));
    CHECK(r.eigenvalues[2] == std::complex<double>(0.5, 0.0));
    for (double res : r.residuals) {
        CHECK(res < 1e-8);
    }
    REQUIRE(!r.leading_vectors.empty());
    const auto& v = r.leading_vectors[0];
    double mean = 0.0;
    for (double x : v) {
        mean += std::abs(x);
    }
    CHECK(mean / 3.0 == doctest::Approx(1.0));
    CHECK(v[1] > 0.0);

    Eigen::MatrixXd rot(3, 3);
    rot << 0.0, -2.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.1;
    const SpectrumReport c = spectrum(rot, 3);
    CHECK(std::abs(c.eigenvalues[0]) == doctest::Approx(2.0));
    CHECK(std::abs(c.eigenvalues[1]) == doctest::Approx(2.0));
    CHECK(c.eigenvalues[0] == std::conj(c.eigenvalues[1]));
    CHECK(c.leading_vectors[0].empty());
    CHECK_THROWS_AS(spectrum(rot, 4), Error);
}

TEST_CASE("polyline geometry")
{
    std::vector<Point3> line;
    for (int i = 0; i < 50; ++i) {
        line.push_back({0.1 * i, 0.2 * i, -0.05 * i});
    }
    const PolylineGeometry g = polyline_geometry(line);
    CHECK(g.ds.size() == 49);
    CHECK(g.curvature.size() == 48);
    for (double k : g.curvature) {
        CHECK(k < 1e-9);
    }

    for (double radius : {0.5, 2.0, 30.0}) {
        std::vector<Point3> circle;
        for (int i = 0; i < 1000; ++i) {
            const double t = 2.0 * std::numbers::pi * i / 1000.0;
            circle.push_back({radius * std::cos(t), radius * std::sin(t), 1.0});
        }
        const PolylineGeometry c = polyline_geometry(circle);
        for (double k : c.curvature) {
            REQUIRE(k == doctest::Approx(1.0 / radius).epsilon(0.01));
        }
        std::vector<Point3> scaled = circle;
        for (auto& pt : scaled) {
            pt = {3.0 * pt[0], 3.0 * pt[1], 3.0 * pt[2]};
        }
        const PolylineGeometry s = polyline_geometry(scaled);
        for (size_t j = 0; j < s.curvature.size(); ++j) {
            REQUIRE(s.curvature[j] == doctest::Approx(c.curvature[j] / 3.0).epsilon(1e-9));
        }
    }

    std::vector<Point3> dup{{0, 0, 0}, {1, 0, 0}, {1, 0, 0}, {1, 1, 0}};
    const PolylineGeometry d = polyline_geometry(dup);
    CHECK(d.skipped == 1);
    CHECK_THROWS_AS(polyline_geometry(std::vector<Point3>{{0, 0, 0}, {1, 1, 1}}), Error);
    CHECK(arclength(line) == doctest::Approx(49.0 * std::sqrt(0.01 + 0.04 + 0.0025)));
}

TEST_CASE("unstable manifold iterates")
{
    const auto& s = fixed_point_setup();
    const SpectrumReport sp = spectrum(jacobian_fd(s.model, s.fp.state, 1e-6, 4), 2);
    REQUIRE(!sp.leading_vectors.front().empty());
    CHECK(std::abs(sp.eigenvalues[0]) > 1.5);

    ManifoldOptions opt;
    opt.iterations = 0;
    const ManifoldResult zero = unstable_manifold(s.model, s.fp.state, sp.leading_vectors.front(), opt);
    REQUIRE(zero.iterates.size() == 1);
    CHECK(zero.iterates[0].size() == opt.initial_vertices);
    CHECK(zero.iterates[0].params.front() == -1.0);
    CHECK(zero.iterates[0].params.back() == 1.0);

    opt.iterations = 6;
    opt.eta = 0.05;
    const ManifoldResult m = unstable_manifold(s.model, s.fp.state, sp.leading_vectors.front(), opt);
    REQUIRE(m.iterates.size() == 7);
    CHECK_FALSE(m.truncated);
    double prev = 0.0;
    for (const Polyline& line : m.iterates) {
        const double len = arclength(line.shadows);
        CHECK(len >= prev);
        prev = len;
        CHECK(std::is_sorted(line.params.begin(), line.params.end()));
    }
    for (size_t n = 0; n + 1 < m.iterates.size(); ++n) {
        const Polyline& a = m.iterates[n];
        const Polyline& b = m.iterates[n + 1];
        for (size_t j = 0; j < a.size(); j += 3) {
            const auto it = std::find(b.params.begin(), b.params.end(), a.params[j]);
            REQUIRE(it != b.params.end());
            const size_t k = static_cast<size_t>(it - b.params.begin());
            StateWindow w{a.vertices[j], a.start_step};
            const StateWindow img = two_year_map(s.model, w);
            for (size_t i = 0; i < img.values.size(); ++i) {
                REQUIRE(std::abs(img.values[i] - b.vertices[k][i]) <= 1e-10);
            }
        }
    }
    for (size_t j = 0; j + 1 < m.iterates.back().size(); ++j) {
        const auto& sh = m.iterates.back().shadows;
        const double gap = std::hypot(sh[j + 1][0] - sh[j][0], sh[j + 1][1] - sh[j][1], sh[j + 1][2] - sh[j][2]);
        CHECK(gap <= opt.eta);
    }

    opt.eta = 1e-7;
    opt.vertex_budget = 20;
    const ManifoldResult cut = unstable_manifold(s.model, s.fp.state, sp.leading_vectors.front(), opt);
    CHECK(cut.truncated);
}

TEST_CASE("fold tracking rejects nearly coincident anchors")
{
    const auto& s = fixed_point_setup();
    try {
        fold_track(s.model, s.traj, 3000, 3000);
        FAIL("expected a domain error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::Domain);
    }
    FoldOptions opt;
    opt.n_points = 50;
    opt.horizon_years = 0.5;
    const FoldTrack t = fold_track(s.model, s.traj, 3000, 3100, opt);
    CHECK(t.times.size() == 51);
    CHECK(t.filament(0).size() == 50);
    CHECK(t.filament(0).front() == shadow(window_at_step(s.traj, 3000 * 100)));
    CHECK_THROWS_AS(t.filament(51), Error);
    CHECK(fold_location(t, 0.0, 0.5) < 50);
    CHECK_THROWS_AS(fold_location(t, 0.6, 0.7), Error);
}

TEST_CASE("hyperbolicity survey")
{
    const WindowMap identity = [](const std::vector<double>& x) { return x; };
    const std::vector<std::vector<double>> pts{std::vector<double>(201, 1.0), std::vector<double>(201, 2.0)};
    const auto entries = hyperbolicity_survey(identity, pts, 1e-3, std::log10(1.5), 5, 2);
    REQUIRE(entries.size() == 2);
    for (const auto& e : entries) {
        CHECK(e.any_flagged);
        CHECK(e.flagged.size() == 5);
        for (bool f : e.flagged) {
            CHECK(f);
        }
    }

    const auto& s = fixed_point_setup();
    const auto fp_entry = hyperbolicity_survey(s.model, {s.fp.state}, 1e-3, std::log10(1.5), 5, 4);
    CHECK_FALSE(fp_entry.front().any_flagged);
}

TEST_CASE("farthest point sampling")
{
    const auto pts = cantor_segment_cloud(3, 20);
    const auto idx = farthest_point_sampling(pts, 10);
    REQUIRE(idx.size() == 10);
    CHECK(idx.front() == 0);
    CHECK(std::set<size_t>(idx.begin(), idx.end()).size() == 10);
    CHECK(farthest_point_sampling(pts, 1000).size() == pts.size());
}
