#include "vole/simulator.hpp"
#include "vole/errors.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace vole
{

namespace
{

bool is_integral(double x)
{
    return std::abs(x - std::round(x)) < 1e-9;
}

void check_grid(const ModelParams& params, int steps_per_year)
{
    if (steps_per_year < 2) {
        throw config_error("steps per year must be >= 2");
    }
    if (params.a1 != 2.0) {
        throw unsupported_error("the discretization has a fixed 2-year memory and requires a1 = 2");
    }
}

// Sequential sums with four accumulators. Every mature value in the project
// goes through this function so runs and window maps agree bit for bit.
double dot(const double* w, const double* x, size_t n)
{
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += w[i] * x[i];
        s1 += w[i + 1] * x[i + 1];
        s2 += w[i + 2] * x[i + 2];
        s3 += w[i + 3] * x[i + 3];
    }
    for (; i < n; ++i) {
        s0 += w[i] * x[i];
    }
    return (s0 + s1) + (s2 + s3);
}

} // namespace

std::vector<double> average_survival_weights(const ModelParams& params, int steps_per_year, int refine)
{
    check_grid(params, steps_per_year);
    if (refine < 1) {
        throw config_error("survival refinement must be >= 1");
    }
    const int p = steps_per_year;
    const double q = static_cast<double>(p) * refine;
    const double fine_onset = params.a0 * q;
    const long long first_mature = is_integral(fine_onset) ? std::llround(fine_onset)
                                                           : static_cast<long long>(std::ceil(fine_onset));
    std::vector<double> s(static_cast<size_t>(2 * p));
    for (int k = 1; k <= 2 * p; ++k) {
        double acc = 0.0;
        for (long long j = static_cast<long long>(k - 1) * refine + 1; j <= static_cast<long long>(k) * refine; ++j) {
            if (j >= first_mature) {
                acc += 1.0 - static_cast<double>(j) / (q * params.a1);
            }
        }
        s[static_cast<size_t>(k - 1)] = acc / refine;
    }
    return s;
}

std::vector<double> build_survival_weights(const ModelParams& params, int steps_per_year, int refine)
{
    check_grid(params, steps_per_year);
    const double onset = params.a0 * steps_per_year;
    if (!is_integral(onset)) {
        return average_survival_weights(params, steps_per_year, refine);
    }
    const long long i0 = std::llround(onset);
    const int p = steps_per_year;
    std::vector<double> s(static_cast<size_t>(2 * p));
    for (int k = 1; k <= 2 * p; ++k) {
        s[static_cast<size_t>(k - 1)] = k >= i0 ? 1.0 - k / (p * params.a1) : 0.0;
    }
    return s;
}

std::vector<double> build_seasonal_weights(const ModelParams& params, int steps_per_year)
{
    if (steps_per_year < 2) {
        throw config_error("steps per year must be >= 2");
    }
    const int p = steps_per_year;
    std::vector<double> e(static_cast<size_t>(p));
    for (int i = 0; i < p; ++i) {
        const double lo = static_cast<double>(i) / p;
        const double hi = static_cast<double>(i + 1) / p;
        e[static_cast<size_t>(i)] = 0.5 * (season(params, lo) + season(params, hi));
    }
    return e;
}

DiscreteModel::DiscreteModel(const ModelParams& params, int steps_per_year, int refine)
    : m_params(params)
    , m_p(steps_per_year)
    , m_fecundity((params.validate(), params))
{
    m_survival = build_survival_weights(params, steps_per_year, refine);
    m_reversed.assign(m_survival.rbegin(), m_survival.rend());
    m_seasonal = build_seasonal_weights(params, steps_per_year);
    m_n_max = population_bounds(params).n_max;
}

double DiscreteModel::mature_from(const double* oldest_birth) const
{
    return dot(m_reversed.data(), oldest_birth, m_reversed.size());
}

void DiscreteModel::check_mature(double mature, long long step) const
{
    if (!std::isfinite(mature) || mature > 1e6 * m_n_max || mature < 0.0) {
        std::ostringstream msg;
        msg << "mature population " << mature << " out of range at step " << step << " (n_max=" << m_n_max << ")";
        throw numeric_error(msg.str());
    }
}

BirthHistory::BirthHistory(std::vector<double> births_oldest_first, long long step_index)
    : m_len(static_cast<int>(births_oldest_first.size()))
    , m_step(step_index)
{
    for (double b : births_oldest_first) {
        if (!(b >= 0.0) || !std::isfinite(b)) {
            throw domain_error("birth history entries must be finite and >= 0");
        }
    }
    m_buf.resize(2 * births_oldest_first.size());
    std::copy(births_oldest_first.begin(), births_oldest_first.end(), m_buf.begin());
    std::copy(births_oldest_first.begin(), births_oldest_first.end(), m_buf.begin() + m_len);
}

void BirthHistory::push(double birth)
{
    // slot m_pos holds the oldest birth in both copies
    m_buf[static_cast<size_t>(m_pos)] = birth;
    m_buf[static_cast<size_t>(m_pos + m_len)] = birth;
    m_pos = (m_pos + 1) % m_len;
    ++m_step;
}

double initial_mature_target(InitialCondition variant)
{
    return variant == InitialCondition::I ? 20.0 : 1.0;
}

BirthHistory initial_condition(InitialCondition variant, std::uint64_t seed, const DiscreteModel& model)
{
    const int p = model.steps_per_year();
    const int len = model.memory();
    constexpr int max_streams = 64;
    for (std::uint32_t stream = 0; stream < max_streams; ++stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                          stream};
        std::mt19937_64 gen(seq);
        std::vector<double> births(static_cast<size_t>(len));
        for (int j = 0; j < len; ++j) {
            // 53 random bits -> uniform on [0, 1)
            const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
            const double phase = static_cast<double>(j % p) / p;
            const bool winter = variant == InitialCondition::I && phase < model.params().rho;
            births[static_cast<size_t>(j)] = winter ? 0.0 : u;
        }
        const double mature0 = model.mature_from(births.data());
        if (mature0 > 0.0) {
            const double scale = initial_mature_target(variant) / mature0;
            for (double& b : births) {
                b *= scale;
            }
            return BirthHistory(std::move(births), 0);
        }
    }
    throw numeric_error("initial_condition: could not draw a history with positive N(0)");
}

StepResult step(const DiscreteModel& model, BirthHistory& history)
{
    const long long i = history.step_index();
    const double mature = model.mature_from(history.births().data());
    model.check_mature(mature, i);
    const double births = model.births_from(mature, i);
    history.push(births);
    return {births, mature};
}

double Trajectory::mature_at(long long step) const
{
    if (!has_step(step)) {
        std::ostringstream msg;
        msg << "step " << step << " outside recorded horizon [" << first_step << ", " << last_step() << "]";
        throw bounds_error(msg.str());
    }
    return mature[static_cast<size_t>(step - first_step)];
}

double Trajectory::birth_at(long long step) const
{
    const long long offset = step - first_step + 2LL * steps_per_year;
    if (offset < 0 || offset >= static_cast<long long>(births.size())) {
        std::ostringstream msg;
        msg << "birth step " << step << " outside recorded horizon";
        throw bounds_error(msg.str());
    }
    return births[static_cast<size_t>(offset)];
}

BirthHistory Trajectory::history_at(long long step) const
{
    const long long len = 2LL * steps_per_year;
    const long long offset = step - first_step;
    if (offset < 0 || offset + len > static_cast<long long>(births.size())) {
        std::ostringstream msg;
        msg << "cannot rebuild birth history at step " << step;
        throw bounds_error(msg.str());
    }
    std::vector<double> ring(births.begin() + offset, births.begin() + offset + len);
    return BirthHistory(std::move(ring), step);
}

Trajectory run(const DiscreteModel& model, const BirthHistory& history, int years)
{
    if (years < 1) {
        throw config_error("run: years must be >= 1");
    }
    if (history.size() != model.memory()) {
        throw config_error("run: birth history length does not match the model memory");
    }
    const int len = model.memory();
    const long long steps = static_cast<long long>(years) * model.steps_per_year();

    Trajectory traj;
    traj.params = model.params();
    traj.steps_per_year = model.steps_per_year();
    traj.first_step = history.step_index();
    traj.births.resize(static_cast<size_t>(len + steps));
    traj.mature.resize(static_cast<size_t>(steps + 1));
    const auto ring = history.births();
    std::copy(ring.begin(), ring.end(), traj.births.begin());

    double* b = traj.births.data();
    for (long long k = 0; k < steps; ++k) {
        const long long i = traj.first_step + k;
        const double mature = model.mature_from(b + k);
        model.check_mature(mature, i);
        traj.mature[static_cast<size_t>(k)] = mature;
        b[k + len] = model.births_from(mature, i);
    }
    const double last = model.mature_from(b + steps);
    model.check_mature(last, traj.first_step + steps);
    traj.mature[static_cast<size_t>(steps)] = last;
    return traj;
}

long long sample_step(long long year, double delta_t, int steps_per_year)
{
    return std::llround((static_cast<double>(year) + delta_t) * steps_per_year);
}

std::vector<double> annual_samples(const Trajectory& traj, long long first_year, long long last_year, double delta_t)
{
    if (!(delta_t >= -1.0 && delta_t <= 1.0)) {
        throw domain_error("annual_samples: delta_t must lie in [-1, 1]");
    }
    if (last_year < first_year) {
        throw domain_error("annual_samples: empty year range");
    }
    const long long lo = sample_step(first_year, delta_t, traj.steps_per_year);
    const long long hi = sample_step(last_year, delta_t, traj.steps_per_year);
    if (!traj.has_step(lo) || !traj.has_step(hi)) {
        std::ostringstream msg;
        msg << "annual_samples: years [" << first_year << ", " << last_year << "] with delta_t=" << delta_t
            << " fall outside the recorded horizon";
        throw bounds_error(msg.str());
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(last_year - first_year + 1));
    for (long long n = first_year; n <= last_year; ++n) {
        out.push_back(traj.mature_at(sample_step(n, delta_t, traj.steps_per_year)));
    }
    return out;
}

std::vector<double> window_series(const DiscreteModel& model, const StateWindow& window, long long steps)
{
    const int len = model.memory();
    if (static_cast<int>(window.values.size()) != len + 1) {
        throw domain_error("window length must be 2p + 1");
    }
    if (steps < 0) {
        throw domain_error("negative step count");
    }
    // births at window steps start+1 .. start+2p drive everything after the window
    const long long start = window.start_step;
    const long long total = steps + len + 1;
    std::vector<double> mature(static_cast<size_t>(total));
    std::copy(window.values.begin(), window.values.end(), mature.begin());
    std::vector<double> births(static_cast<size_t>(total - 1));
    for (int j = 1; j <= len; ++j) {
        births[static_cast<size_t>(j - 1)] = model.births_from(mature[static_cast<size_t>(j)], start + j);
    }
    for (long long j = len + 1; j < total; ++j) {
        const double value = model.mature_from(births.data() + (j - 1 - len));
        model.check_mature(value, start + j);
        mature[static_cast<size_t>(j)] = value;
        births[static_cast<size_t>(j - 1)] = model.births_from(value, start + j);
    }
    return mature;
}

StateWindow advance_window(const DiscreteModel& model, const StateWindow& window, long long steps)
{
    const std::vector<double> mature = window_series(model, window, steps);
    StateWindow out;
    out.start_step = window.start_step + steps;
    out.values.assign(mature.begin() + steps, mature.end());
    return out;
}

} // namespace vole
