#pragma once

#include "vole/kernels.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace vole
{

/// Survival weights s_1..s_{2p} (element k-1 holds s_k). When a0 * p is an
/// integer the direct formula is used, otherwise each s_k is the mean of a
/// grid refined `refine` times.
std::vector<double> build_survival_weights(const ModelParams& params, int steps_per_year, int refine = 100);

/// Always takes the refined-grid average, even for integral a0 * p.
std::vector<double> average_survival_weights(const ModelParams& params, int steps_per_year, int refine);

/// e_i = (m(i/p) + m((i+1)/p)) / 2 for i = 0..p-1.
std::vector<double> build_seasonal_weights(const ModelParams& params, int steps_per_year);

/// Discretized renewal equation for a fixed number of steps per year.
/// Immutable after construction.
class DiscreteModel
{
public:
    explicit DiscreteModel(const ModelParams& params, int steps_per_year = 100, int refine = 100);

    const ModelParams& params() const
    {
        return m_params;
    }
    int steps_per_year() const
    {
        return m_p;
    }
    /// Number of past birth steps that enter the convolution (2p).
    int memory() const
    {
        return 2 * m_p;
    }
    std::span<const double> survival_weights() const
    {
        return m_survival;
    }
    std::span<const double> seasonal_weights() const
    {
        return m_seasonal;
    }
    double seasonal_weight(long long step) const
    {
        long long i = step % m_p;
        return m_seasonal[static_cast<size_t>(i < 0 ? i + m_p : i)];
    }
    double n_max() const
    {
        return m_n_max;
    }

    /// N_i from the 2p births preceding step i, oldest first.
    double mature_from(const double* oldest_birth) const;

    /// n_i = m(N_i) N_i e_i / p.
    double births_from(double mature, long long step) const
    {
        return m_fecundity(mature) * mature * seasonal_weight(step) / static_cast<double>(m_p);
    }

    /// Throws a numeric error if N is not finite or exceeds 1e6 n_max.
    void check_mature(double mature, long long step) const;

private:
    ModelParams m_params;
    int m_p;
    std::vector<double> m_survival;
    std::vector<double> m_reversed; // s_{2p}, ..., s_1
    std::vector<double> m_seasonal;
    Fecundity m_fecundity;
    double m_n_max;
};

/// The 2p most recent births before `step_index`. Stored twice over so the
/// window is always contiguous.
class BirthHistory
{
public:
    BirthHistory(std::vector<double> births_oldest_first, long long step_index);

    long long step_index() const
    {
        return m_step;
    }
    int size() const
    {
        return m_len;
    }
    /// Contiguous view, oldest first.
    std::span<const double> births() const
    {
        return {m_buf.data() + m_pos, static_cast<size_t>(m_len)};
    }
    void push(double birth);

private:
    int m_len;
    int m_pos = 0;
    long long m_step;
    std::vector<double> m_buf;
};

enum class InitialCondition
{
    I, // no births in winter, N(0) = 20
    II, // births all year, N(0) = 1
};

/// Seeded random pre-history rescaled to the variant's target N(0).
BirthHistory initial_condition(InitialCondition variant, std::uint64_t seed, const DiscreteModel& model);

/// Target mature population at step 0 for a variant.
double initial_mature_target(InitialCondition variant);

struct StepResult {
    double births;
    double mature;
};

/// Computes N and n at history.step_index() and advances the history.
StepResult step(const DiscreteModel& model, BirthHistory& history);

/// Births (with the 2p pre-history) and the mature series derived from them.
struct Trajectory {
    ModelParams params;
    int steps_per_year = 100;
    long long first_step = 0; ///< absolute step index of mature[0]
    std::vector<double> births; ///< births[k] is at step first_step - 2p + k
    std::vector<double> mature; ///< mature[k] is at step first_step + k

    long long last_step() const
    {
        return first_step + static_cast<long long>(mature.size()) - 1;
    }
    double start_year() const
    {
        return static_cast<double>(first_step) / steps_per_year;
    }
    bool has_step(long long step) const
    {
        return step >= first_step && step <= last_step();
    }
    /// Throws a bounds error outside the recorded horizon.
    double mature_at(long long step) const;
    double birth_at(long long step) const;

    /// Birth history positioned just before `step` (for restarting a run).
    BirthHistory history_at(long long step) const;
};

/// Applies `step` years * p times. The mature series also holds the value at
/// the final step index, which needs only recorded births.
Trajectory run(const DiscreteModel& model, const BirthHistory& history, int years);

/// N at steps round((n + delta_t) p) for integer years n in [first_year, last_year].
std::vector<double> annual_samples(const Trajectory& traj, long long first_year, long long last_year, double delta_t = 0.0);

long long sample_step(long long year, double delta_t, int steps_per_year);

/// Delay window of 2p+1 consecutive mature values starting at `start_step`.
/// This is a full state of the discrete system.
struct StateWindow {
    std::vector<double> values;
    long long start_step = 0;
};

/// Mature values from the window start through `steps` + 2p steps later.
std::vector<double> window_series(const DiscreteModel& model, const StateWindow& window, long long steps);

/// Pushes a window forward by `steps` steps: T^(steps/p).
StateWindow advance_window(const DiscreteModel& model, const StateWindow& window, long long steps);

/// T^2 on windows.
inline StateWindow two_year_map(const DiscreteModel& model, const StateWindow& window)
{
    return advance_window(model, window, 2LL * model.steps_per_year());
}

} // namespace vole
