#include "vole/errors.hpp"
#include "vole/simulator.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace vole;

namespace
{

ModelParams chaotic()
{
    ModelParams p;
    p.a0 = 0.15;
    p.rho = 0.30;
    p.gamma = 8.25;
    p.eps_season = 0.1;
    return p;
}

} // namespace

TEST_CASE("survival weights on the grid")
{
    ModelParams p;
    const auto s = build_survival_weights(p, 100);
    REQUIRE(s.size() == 200);
    CHECK(s[16] == 0.0); // s_17
    CHECK(s[17] == doctest::Approx(0.91).epsilon(1e-15)); // s_18
    CHECK(std::abs(s[199]) < 1e-15); // s_200
    for (double w : s) {
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
    }
    const auto averaged = average_survival_weights(p, 100, 1);
    CHECK(averaged == s);
}

TEST_CASE("survival weights off the grid match an explicit fine-grid mean")
{
    ModelParams p;
    p.a0 = 0.185;
    const auto s = build_survival_weights(p, 100, 100);
    // s_19 averages j = 1801..1900 on the q = 10^4 grid; maturity starts at j = 1850
    double mean = 0.0;
    for (int j = 1801; j <= 1900; ++j) {
        mean += j >= 1850 ? 1.0 - j / 20000.0 : 0.0;
    }
    mean /= 100.0;
    CHECK(s[18] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(s[18] > 0.0);
    CHECK(s[18] < 1.0 - 19.0 / 200.0);
    CHECK(s[17] == 0.0);
    CHECK(s[19] == doctest::Approx(1.0 - 19.5 / 200.0 - 0.5 / 20000.0).epsilon(1e-12));
}

TEST_CASE("seasonal weights")
{
    ModelParams p;
    p.eps_season = 0.0;
    p.season_smooth = false;
    const auto e = build_seasonal_weights(p, 100);
    REQUIRE(e.size() == 100);
    CHECK(e[10] == 0.0);
    CHECK(e[39] == 0.0);
    CHECK(e[40] == 0.5); // [0.40, 0.41] straddles the jump
    CHECK(e[41] == 1.0);
    CHECK(e[99] == 0.5); // [0.99, 1.00] ends on the next winter

    ModelParams q;
    for (double w : build_seasonal_weights(q, 100)) {
        CHECK(w >= 0.0);
        CHECK(w <= 1.0);
    }
}

TEST_CASE("initial conditions")
{
    ModelParams p;
    const DiscreteModel model(p);
    for (std::uint64_t seed : {1ULL, 7ULL, 123456789ULL}) {
        const BirthHistory h2 = initial_condition(InitialCondition::II, seed, model);
        CHECK(model.mature_from(h2.births().data()) == doctest::Approx(1.0).epsilon(1e-12));
        const BirthHistory h1 = initial_condition(InitialCondition::I, seed, model);
        CHECK(model.mature_from(h1.births().data()) == doctest::Approx(20.0).epsilon(1e-12));
        const auto b = h1.births();
        for (size_t j = 0; j < b.size(); ++j) {
            const double phase = static_cast<double>(j % 100) / 100.0;
            if (phase < 0.41) {
                REQUIRE(b[j] == 0.0);
            }
            REQUIRE(b[j] >= 0.0);
        }
        const BirthHistory again = initial_condition(InitialCondition::I, seed, model);
        CHECK(std::equal(b.begin(), b.end(), again.births().begin()));
    }
    const BirthHistory one = initial_condition(InitialCondition::II, 1, model);
    const BirthHistory two = initial_condition(InitialCondition::II, 2, model);
    CHECK_FALSE(std::equal(one.births().begin(), one.births().end(), two.births().begin()));
}

TEST_CASE("single steps")
{
    ModelParams p;
    const DiscreteModel model(p);
    BirthHistory zero(std::vector<double>(200, 0.0), 0);
    const StepResult r = step(model, zero);
    CHECK(r.births == 0.0);
    CHECK(r.mature == 0.0);

    for (int k : {1, 18, 50, 200}) {
        std::vector<double> births(200, 0.0);
        births[200 - k] = 1.0; // n_{i-k}
        BirthHistory h(births, 60);
        const double expected = model.survival_weights()[static_cast<size_t>(k - 1)];
        CHECK(step(model, h).mature == doctest::Approx(expected).epsilon(1e-15));
    }

    std::vector<double> births(200, 0.01);
    BirthHistory winter(births, 110); // phase 0.10
    const StepResult w = step(model, winter);
    CHECK(w.mature > 0.0);
    CHECK(w.births == 0.0);
    BirthHistory summer(births, 170);
    const StepResult s = step(model, summer);
    CHECK(s.births == doctest::Approx(Fecundity(p)(s.mature) * s.mature / 100.0).epsilon(1e-14));
    CHECK(summer.step_index() == 171);
}

TEST_CASE("extinction persists")
{
    const DiscreteModel model(chaotic());
    const Trajectory t = run(model, BirthHistory(std::vector<double>(200, 0.0), 0), 30);
    CHECK(std::all_of(t.mature.begin(), t.mature.end(), [](double v) { return v == 0.0; }));
    CHECK(std::all_of(t.births.begin(), t.births.end(), [](double v) { return v == 0.0; }));
}

TEST_CASE("trajectory layout and convolution identity")
{
    const DiscreteModel model(chaotic());
    const Trajectory t = run(model, initial_condition(InitialCondition::II, 3, model), 40);
    CHECK(t.first_step == 0);
    CHECK(t.mature.size() == 4001);
    CHECK(t.births.size() == 4200);
    CHECK(t.mature_at(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(t.mature_at(4001), Error);
    CHECK_THROWS_AS(t.birth_at(-201), Error);
    const auto s = model.survival_weights();
    std::mt19937 gen(5);
    std::uniform_int_distribution<long long> pick(0, 4000);
    for (int trial = 0; trial < 200; ++trial) {
        const long long i = pick(gen);
        double n = 0.0;
        for (int k = 1; k <= 200; ++k) {
            n += s[static_cast<size_t>(k - 1)] * t.birth_at(i - k);
        }
        REQUIRE(t.mature_at(i) == doctest::Approx(n).epsilon(1e-12));
    }
    for (size_t i = 0; i < t.mature.size(); ++i) {
        REQUIRE(std::isfinite(t.mature[i]));
        REQUIRE(t.mature[i] >= 0.0);
    }
    for (double b : t.births) {
        REQUIRE(b >= 0.0);
    }
}

TEST_CASE("restarting from a recorded history continues the run")
{
    const DiscreteModel model(chaotic());
    const Trajectory t = run(model, initial_condition(InitialCondition::II, 1, model), 30);
    const Trajectory u = run(model, t.history_at(1700), 10);
    CHECK(u.first_step == 1700);
    for (long long s = 1700; s <= 2700; ++s) {
        REQUIRE(u.mature_at(s) == t.mature_at(s));
    }
}

TEST_CASE("bounds and Lipschitz property after the transient")
{
    const ModelParams p = chaotic();
    const DiscreteModel model(p);
    const Trajectory t = run(model, initial_condition(InitialCondition::II, 1, model), 2000);
    const TheoryBounds b = population_bounds(p);
    double worst_jump = 0.0;
    for (long long s = 100 * 100; s <= t.last_step(); ++s) {
        const double n = t.mature_at(s);
        REQUIRE(n >= b.lower * (1.0 - 1e-6));
        REQUIRE(n <= b.n_max * (1.0 + 1e-6));
        if (s < t.last_step()) {
            worst_jump = std::max(worst_jump, std::abs(t.mature_at(s + 1) - n) * 100.0);
        }
    }
    CHECK(worst_jump <= 1.1 * b.lipschitz);
}

TEST_CASE("non-seasonal run settles on the discrete equilibrium")
{
    ModelParams p;
    p.rho = 0.0;
    p.eps_season = 0.0;
    p.gamma = 5.0;
    const DiscreteModel model(p);
    const Trajectory t = run(model, initial_condition(InitialCondition::II, 1, model), 2000);
    // stationary births n = m(N) N / p with N = n * sum s_k, hence m(N) = p / sum s_k
    double sum = 0.0;
    for (int k = 18; k <= 200; ++k) {
        sum += 1.0 - k / 200.0;
    }
    const double discrete_eq = std::pow(50.0 * sum / 100.0, 1.0 / 5.0);
    CHECK(std::abs(t.mature_at(t.last_step()) - discrete_eq) < 1e-6);
    // continuous value, off by the quadrature error of the survival sum
    CHECK(std::abs(discrete_eq - equilibrium_density(p)) < 5e-3);
}

TEST_CASE("halving the time step roughly halves the early discrepancy")
{
    const ModelParams p = chaotic();
    const DiscreteModel m100(p, 100);
    const DiscreteModel m200(p, 200);
    const DiscreteModel m400(p, 400);
    const BirthHistory h = initial_condition(InitialCondition::II, 1, m100);
    // each coarse birth count is split evenly over the finer steps
    std::vector<double> split2;
    std::vector<double> split4;
    for (double b : h.births()) {
        split2.insert(split2.end(), 2, 0.5 * b);
        split4.insert(split4.end(), 4, 0.25 * b);
    }
    const Trajectory a = run(m100, h, 5);
    const Trajectory b = run(m200, BirthHistory(split2, 0), 5);
    const Trajectory c = run(m400, BirthHistory(split4, 0), 5);
    double e1 = 0.0;
    double e2 = 0.0;
    for (long long k = 0; k <= 500; ++k) {
        const double y = b.mature_at(2 * k);
        e1 = std::max(e1, std::abs(a.mature_at(k) - y) / y);
        e2 = std::max(e2, std::abs(y - c.mature_at(4 * k)) / y);
    }
    CHECK(e2 < e1);
    CHECK(e1 / e2 > 1.5);
    CHECK(e1 / e2 < 3.0);
}

TEST_CASE("annual samples")
{
    const DiscreteModel model(chaotic());
    const Trajectory t = run(model, initial_condition(InitialCondition::II, 1, model), 120);
    const auto at0 = annual_samples(t, 101, 110);
    REQUIRE(at0.size() == 10);
    CHECK(at0[0] == t.mature_at(10100));
    const auto shifted = annual_samples(t, 100, 109, 1.0);
    for (size_t i = 0; i < 10; ++i) {
        CHECK(shifted[i] == at0[i]);
    }
    CHECK(sample_step(5, -0.4, 100) == 460);
    CHECK_THROWS_AS(annual_samples(t, 110, 125), Error);

    const auto late = annual_samples(t, 20, 119);
    const auto peak = annual_samples(t, 20, 119, -0.4);
    double mean_late = 0.0;
    double mean_peak = 0.0;
    for (size_t i = 0; i < late.size(); ++i) {
        mean_late += late[i];
        mean_peak += peak[i];
    }
    CHECK(mean_peak >= mean_late);
}

TEST_CASE("window maps agree with the recorded trajectory")
{
    const DiscreteModel model(chaotic());
    const Trajectory t = run(model, initial_condition(InitialCondition::II, 1, model), 40);
    StateWindow w;
    w.start_step = 2000;
    w.values.assign(t.mature.begin() + 2000, t.mature.begin() + 2201);
    const StateWindow img = two_year_map(model, w);
    CHECK(img.start_step == 2200);
    REQUIRE(img.values.size() == 201);
    for (size_t k = 0; k < 201; ++k) {
        REQUIRE(img.values[k] == doctest::Approx(t.mature_at(2200 + static_cast<long long>(k))).epsilon(1e-12));
    }
    const auto series = window_series(model, w, 350);
    REQUIRE(series.size() == 551);
    for (size_t k = 0; k < series.size(); ++k) {
        REQUIRE(series[k] == doctest::Approx(t.mature_at(2000 + static_cast<long long>(k))).epsilon(1e-12));
    }
}

TEST_CASE("runs are deterministic")
{
    const DiscreteModel model(chaotic());
    const Trajectory a = run(model, initial_condition(InitialCondition::I, 9, model), 50);
    const Trajectory b = run(model, initial_condition(InitialCondition::I, 9, model), 50);
    CHECK(a.mature == b.mature);
    CHECK(a.births == b.births);
}
