#include "cli.hpp"

#include "vole/analysis.hpp"
#include "vole/embedding.hpp"
#include "vole/errors.hpp"
#include "vole/io.hpp"
#include "vole/kernels.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>
#include <vector>

namespace vole::cli
{

namespace
{

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v)
{
    try {
        size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return d;
    } catch (const std::exception&) {
        throw config_error("'" + key + "' expects a number, got '" + v + "'");
    }
}

long long parse_integer(const std::string& key, const std::string& v)
{
    try {
        size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return n;
    } catch (const std::exception&) {
        throw config_error("'" + key + "' expects an integer, got '" + v + "'");
    }
}

std::uint64_t parse_seed(const std::string& key, const std::string& v)
{
    try {
        size_t used = 0;
        const unsigned long long n = std::stoull(v, &used);
        if (used != v.size() || v.find('-') != std::string::npos) {
            throw std::invalid_argument(v);
        }
        return n;
    } catch (const std::exception&) {
        throw config_error("'" + key + "' expects a nonnegative integer, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw config_error("'" + key + "' expects true or false, got '" + v + "'");
}

InitialCondition parse_init(const std::string& v)
{
    if (v == "I" || v == "1") {
        return InitialCondition::I;
    }
    if (v == "II" || v == "2") {
        return InitialCondition::II;
    }
    throw config_error("init must be I or II, got '" + v + "'");
}

const char* init_name(InitialCondition init)
{
    return init == InitialCondition::I ? "I" : "II";
}

Norm parse_norm(const std::string& v)
{
    if (v == "l1") {
        return Norm::L1;
    }
    if (v == "l2") {
        return Norm::L2;
    }
    if (v == "linf") {
        return Norm::Linf;
    }
    throw config_error("norm must be l1, l2 or linf, got '" + v + "'");
}

int exit_code(ErrorCategory c)
{
    switch (c) {
    case ErrorCategory::Numeric:
        return 3;
    case ErrorCategory::Io:
        return 4;
    default:
        return 2;
    }
}

// Flag values as given on the command line; unset means "keep the config value".
struct CommonFlags {
    std::string config_path;
    std::optional<double> a0, a1, m0, gamma, rho, eps_season, delta_t;
    std::optional<bool> fecundity_smooth, season_smooth;
    std::optional<int> p, refine, years;
    std::optional<std::string> init;
    std::optional<std::uint64_t> seed;
    std::optional<long long> first_year, last_year;
    std::string out = ".";
    int jobs = 1;
};

void add_common(CLI::App* sub, CommonFlags& f)
{
    sub->add_option("--config", f.config_path, "flat key=value file; flags override it");
    sub->add_option("--a0", f.a0, "maturation age A0 [0.18]");
    sub->add_option("--a1", f.a1, "maximal age A1 [2]");
    sub->add_option("--m0", f.m0, "fecundity ceiling m0 [50]");
    sub->add_option("--gamma", f.gamma, "density exponent gamma [8.25]");
    sub->add_option("--rho", f.rho, "winter length rho [0.41]");
    sub->add_option("--eps-season", f.eps_season, "spring/autumn ramp width [0.1]");
    sub->add_option("--fecundity-smooth", f.fecundity_smooth, "C1 fecundity (false: C0) [true]");
    sub->add_option("--season-smooth", f.season_smooth, "C1 season (false: C0) [true]");
    sub->add_option("--p", f.p, "steps per year [100]");
    sub->add_option("--refine", f.refine, "survival averaging factor for non-grid A0 [100]");
    sub->add_option("--years", f.years, "simulated years [20000]");
    sub->add_option("--init", f.init, "initial condition I or II [II]");
    sub->add_option("--seed", f.seed, "random seed [VOLE_SEED or 1]");
    sub->add_option("--first-year", f.first_year, "first sampled year [19001]");
    sub->add_option("--last-year", f.last_year, "last sampled year [20000]");
    sub->add_option("--delta-t", f.delta_t, "sampling offset within the year [0]");
    sub->add_option("--out", f.out, "output directory [.]");
    sub->add_option("--jobs", f.jobs, "worker threads [1]")->check(CLI::PositiveNumber);
}

RunConfig resolve(const CommonFlags& f)
{
    RunConfig cfg;
    std::map<std::string, std::string> file;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) {
            throw io_error("cannot read config file " + f.config_path);
        }
        std::stringstream buf;
        buf << in.rdbuf();
        file = parse_config_text(buf.str());
    }
    apply_config(cfg, file);
    if (!file.contains("seed")) {
        if (const char* env = std::getenv("VOLE_SEED"); env != nullptr && *env != '\0') {
            cfg.seed = parse_seed("VOLE_SEED", env);
        }
    }
    auto set = [](auto& target, const auto& flag) {
        if (flag) {
            target = *flag;
        }
    };
    set(cfg.params.a0, f.a0);
    set(cfg.params.a1, f.a1);
    set(cfg.params.m0, f.m0);
    set(cfg.params.gamma, f.gamma);
    set(cfg.params.rho, f.rho);
    set(cfg.params.eps_season, f.eps_season);
    set(cfg.params.fecundity_smooth, f.fecundity_smooth);
    set(cfg.params.season_smooth, f.season_smooth);
    set(cfg.p, f.p);
    set(cfg.refine, f.refine);
    set(cfg.years, f.years);
    set(cfg.seed, f.seed);
    set(cfg.first_year, f.first_year);
    set(cfg.last_year, f.last_year);
    set(cfg.delta_t, f.delta_t);
    if (f.init) {
        cfg.init = parse_init(*f.init);
    }
    return cfg;
}

Stamp base_stamp(const std::string& command, const RunConfig& cfg)
{
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {
        {"vole", VOLE_VERSION},
        {"command", command},
        {"a0", format_number(cfg.params.a0)},
        {"a1", format_number(cfg.params.a1)},
        {"m0", format_number(cfg.params.m0)},
        {"gamma", format_number(cfg.params.gamma)},
        {"rho", format_number(cfg.params.rho)},
        {"eps_season", format_number(cfg.params.eps_season)},
        {"fecundity_smooth", b(cfg.params.fecundity_smooth)},
        {"season_smooth", b(cfg.params.season_smooth)},
        {"p", std::to_string(cfg.p)},
        {"refine", std::to_string(cfg.refine)},
        {"years", std::to_string(cfg.years)},
        {"init", init_name(cfg.init)},
        {"seed", std::to_string(cfg.seed)},
        {"first_year", std::to_string(cfg.first_year)},
        {"last_year", std::to_string(cfg.last_year)},
        {"delta_t", format_number(cfg.delta_t)},
    };
}

/// Shared state of one subcommand invocation.
struct Context {
    RunConfig cfg;
    Stamp stamp;
    std::filesystem::path out_dir;
    int jobs = 1;
    std::ostream* out = nullptr;

    DiscreteModel model() const
    {
        return DiscreteModel(cfg.params, cfg.p, cfg.refine);
    }

    /// Runs at least cfg.years and at least through last_year + lookahead.
    Trajectory trajectory(long long lookahead) const
    {
        const DiscreteModel m = model();
        const long long need = std::max<long long>(cfg.years, cfg.last_year + lookahead);
        return run(m, initial_condition(cfg.init, cfg.seed, m), static_cast<int>(need));
    }

    void write(const std::string& name, const std::function<void(std::ostream&)>& body) const
    {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        const auto path = out_dir / name;
        std::ofstream file(path, std::ios::binary);
        if (!file) {
            throw io_error("cannot open " + path.string() + " for writing");
        }
        body(file);
        file.flush();
        if (!file) {
            throw io_error("write failed for " + path.string());
        }
    }

    Stamp stamped(const Stamp& extra) const
    {
        Stamp s = stamp;
        s.insert(s.end(), extra.begin(), extra.end());
        return s;
    }
};

std::string num(double v)
{
    std::ostringstream os;
    os << std::setprecision(5) << v;
    return os.str();
}

FixedPointResult find_fixed_point(const Context& ctx, const Trajectory& traj, int iterations)
{
    const DiscreteModel model = ctx.model();
    const FixedPointResult coarse = locate_fixed_point(traj, ctx.cfg.first_year, ctx.cfg.last_year);
    const auto [a, b] = default_bracket(traj, coarse);
    RefineOptions opt;
    opt.iterations = iterations;
    return refine_fixed_point(model, coarse, a, b, opt);
}

} // namespace

void RunConfig::validate() const
{
    params.validate();
    if (p < 1 || refine < 1) {
        throw config_error("p and refine must be positive");
    }
    if (years < 1) {
        throw config_error("years must be positive");
    }
    if (first_year < 0 || last_year < first_year) {
        throw config_error("sampling window needs 0 <= first_year <= last_year");
    }
    if (!(delta_t >= 0.0) || !(delta_t < 1.0)) {
        throw config_error("delta_t must lie in [0, 1)");
    }
}

std::map<std::string, std::string> parse_config_text(const std::string& text)
{
    std::map<std::string, std::string> entries;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error("config line " + std::to_string(number) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw config_error("config line " + std::to_string(number) + ": empty key");
        }
        if (!entries.emplace(key, value).second) {
            throw config_error("config line " + std::to_string(number) + ": repeated key '" + key + "'");
        }
    }
    return entries;
}

void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& entries)
{
    for (const auto& [key, value] : entries) {
        if (key == "a0") {
            cfg.params.a0 = parse_double(key, value);
        } else if (key == "a1") {
            cfg.params.a1 = parse_double(key, value);
        } else if (key == "m0") {
            cfg.params.m0 = parse_double(key, value);
        } else if (key == "gamma") {
            cfg.params.gamma = parse_double(key, value);
        } else if (key == "rho") {
            cfg.params.rho = parse_double(key, value);
        } else if (key == "eps_season") {
            cfg.params.eps_season = parse_double(key, value);
        } else if (key == "fecundity_smooth") {
            cfg.params.fecundity_smooth = parse_bool(key, value);
        } else if (key == "season_smooth") {
            cfg.params.season_smooth = parse_bool(key, value);
        } else if (key == "p") {
            cfg.p = static_cast<int>(parse_integer(key, value));
        } else if (key == "refine") {
            cfg.refine = static_cast<int>(parse_integer(key, value));
        } else if (key == "years") {
            cfg.years = static_cast<int>(parse_integer(key, value));
        } else if (key == "init") {
            cfg.init = parse_init(value);
        } else if (key == "seed") {
            cfg.seed = parse_seed(key, value);
        } else if (key == "first_year") {
            cfg.first_year = parse_integer(key, value);
        } else if (key == "last_year") {
            cfg.last_year = parse_integer(key, value);
        } else if (key == "delta_t") {
            cfg.delta_t = parse_double(key, value);
        } else {
            throw config_error("unknown config key '" + key + "'");
        }
    }
}

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"vole: seasonal renewal-equation simulator and attractor analysis"};
    app.name("vole");
    app.require_subcommand(1);
    app.set_version_flag("--version", VOLE_VERSION);

    std::vector<std::unique_ptr<CommonFlags>> flags;
    std::vector<const CLI::App*> subs;
    std::function<void(Context&)> action;
    std::string chosen;

    auto command = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        flags.push_back(std::make_unique<CommonFlags>());
        add_common(sub, *flags.back());
        subs.push_back(sub);
        return sub;
    };

    // simulate
    {
        CLI::App* sub = command("simulate", "run the model and export the sampled window step by step");
        sub->callback([&] {
            chosen = "simulate";
            action = [](Context& ctx) {
                const Trajectory traj = ctx.trajectory(0);
                const int p = ctx.cfg.p;
                Trajectory window = traj;
                const long long s0 = ctx.cfg.first_year * p;
                const long long s1 = std::min(ctx.cfg.last_year * p, traj.last_step() - 1);
                if (!traj.has_step(s0)) {
                    throw bounds_error("first_year beyond the simulated horizon");
                }
                const long long mem = 2LL * p;
                window.first_step = s0;
                window.mature.assign(traj.mature.begin() + (s0 - traj.first_step),
                                     traj.mature.begin() + (s1 - traj.first_step) + 1);
                window.births.assign(traj.births.begin() + (s0 - traj.first_step),
                                     traj.births.begin() + (s1 - traj.first_step) + mem + 1);
                ctx.write("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, window, ctx.stamp); });
                const auto [lo, hi] = std::minmax_element(window.mature.begin(), window.mature.end());
                *ctx.out << "simulate years=" << traj.mature.size() / p << " rows=" << window.mature.size()
                         << " N_last=" << num(window.mature.back()) << " N_min=" << num(*lo)
                         << " N_max=" << num(*hi) << '\n';
            };
        });
    }

    // sweep
    std::string sweep_param = "gamma";
    double sweep_from = 2.0;
    double sweep_to = 16.0;
    double sweep_step = 0.01;
    bool sweep_continuation = false;
    double sweep_tol = 1e-4;
    {
        CLI::App* sub = command("sweep", "bifurcation diagram over gamma, rho or a0");
        sub->add_option("--param", sweep_param, "swept parameter: gamma, rho or a0 [gamma]");
        sub->add_option("--from", sweep_from, "first grid value [2]");
        sub->add_option("--to", sweep_to, "last grid value [16]");
        sub->add_option("--step", sweep_step, "grid step [0.01]");
        sub->add_flag("--continuation", sweep_continuation, "start each value from the previous final state");
        sub->add_option("--rel-tol", sweep_tol, "period detection tolerance [1e-4]");
        sub->callback([&] {
            chosen = "sweep";
            action = [&](Context& ctx) {
                const SweepAxis axis = parse_axis(sweep_param);
                const auto grid = parameter_grid(sweep_from, sweep_to, sweep_step);
                SweepOptions opt;
                opt.steps_per_year = ctx.cfg.p;
                opt.refine = ctx.cfg.refine;
                opt.years = ctx.cfg.years;
                opt.first_year = ctx.cfg.first_year;
                opt.last_year = ctx.cfg.last_year;
                opt.delta_t = ctx.cfg.delta_t;
                opt.init = ctx.cfg.init;
                opt.seed = ctx.cfg.seed;
                opt.continuation = sweep_continuation;
                opt.jobs = ctx.jobs;
                const BifurcationDiagram d = bifurcation_sweep(ctx.cfg.params, axis, grid, opt);
                const Stamp st = ctx.stamped({{"param", sweep_param},
                                              {"from", format_number(sweep_from)},
                                              {"to", format_number(sweep_to)},
                                              {"step", format_number(sweep_step)},
                                              {"continuation", sweep_continuation ? "true" : "false"}});
                ctx.write("diagram.csv", [&](std::ostream& os) { write_diagram_csv(os, d, st); });
                std::map<int, int> periods;
                for (const auto& s : d.samples) {
                    ++periods[detect_period(s, sweep_tol).value_or(0)];
                }
                *ctx.out << "sweep " << sweep_param << " values=" << grid.size() << " periods:";
                for (const auto& [q, n] : periods) {
                    *ctx.out << ' ' << (q == 0 ? std::string("none") : std::to_string(q)) << '=' << n;
                }
                *ctx.out << '\n';
            };
        });
    }

    // embed
    bool embed_log = false;
    {
        CLI::App* sub = command("embed", "3-D delay embedding (N(t), N(t+1), N(t+2)) of the sampled window");
        sub->add_flag("--log", embed_log, "log10 coordinates");
        sub->callback([&] {
            chosen = "embed";
            action = [&](Context& ctx) {
                const Trajectory traj = ctx.trajectory(3);
                const EmbeddedCloud cloud = embed3(traj, ctx.cfg.first_year, ctx.cfg.last_year, ctx.cfg.delta_t,
                                                   embed_log ? Scale::Log : Scale::Linear);
                const Stamp st = ctx.stamped({{"scale", embed_log ? "log" : "linear"}});
                ctx.write("cloud.csv", [&](std::ostream& os) { write_cloud_csv(os, cloud, st); });
                *ctx.out << "embed points=" << cloud.size() << " scale=" << (embed_log ? "log" : "linear") << '\n';
            };
        });
    }

    // dimension
    {
        CLI::App* sub = command("dimension", "box-counting dimension of the embedded cloud");
        sub->callback([&] {
            chosen = "dimension";
            action = [](Context& ctx) {
                const Trajectory traj = ctx.trajectory(3);
                const EmbeddedCloud cloud = embed3(traj, ctx.cfg.first_year, ctx.cfg.last_year, ctx.cfg.delta_t);
                const DimensionFit fit = fractal_dimension(cloud.points);
                ctx.write("dimension.csv", [&](std::ostream& os) { write_dimension_csv(os, fit, ctx.stamp); });
                *ctx.out << "dimension points=" << fit.n0 << " slope=" << num(fit.slope) << " r2=" << num(fit.r2)
                         << " window=[" << num(fit.eps_lo) << "," << num(fit.eps_hi) << "]\n";
            };
        });
    }

    // inject
    double inject_radius = 0.1;
    std::string inject_norm = "linf";
    size_t inject_centers = 80;
    {
        CLI::App* sub = command("inject", "201-D to 3-D distance ratios in balls around sampled centers");
        sub->add_option("--radius", inject_radius, "ball radius in the window norm [0.1]");
        sub->add_option("--norm", inject_norm, "l1, l2 or linf (normalized) [linf]");
        sub->add_option("--centers", inject_centers, "farthest-point centers [80]");
        sub->callback([&] {
            chosen = "inject";
            action = [&](Context& ctx) {
                const Trajectory traj = ctx.trajectory(3);
                const EmbeddedCloud cloud = embed3(traj, ctx.cfg.first_year, ctx.cfg.last_year, ctx.cfg.delta_t);
                std::vector<long long> centers;
                for (size_t i : farthest_point_sampling(cloud.points, inject_centers)) {
                    centers.push_back(cloud.times[i]);
                }
                const auto entries = projection_distortion(traj, centers, inject_radius, parse_norm(inject_norm),
                                                           ctx.cfg.first_year, ctx.cfg.last_year, ctx.cfg.delta_t);
                const Stamp st = ctx.stamped({{"radius", format_number(inject_radius)}, {"norm", inject_norm}});
                ctx.write("distortion.csv", [&](std::ostream& os) { write_distortion_csv(os, entries, st); });
                double worst = 0.0;
                long long where = -1;
                size_t infinite = 0;
                for (const auto& e : entries) {
                    infinite += e.infinite() ? 1 : 0;
                    if (e.defined && e.sup_ratio > worst) {
                        worst = e.sup_ratio;
                        where = e.center;
                    }
                }
                *ctx.out << "inject centers=" << entries.size() << " max_ratio=" << num(worst) << " at=" << where
                         << " infinite=" << infinite << '\n';
            };
        });
    }

    // diverge
    std::optional<long long> diverge_center;
    double diverge_radius = 0.04;
    std::string diverge_norm = "linf";
    double diverge_horizon = 15.0;
    {
        CLI::App* sub = command("diverge", "past and future spread of orbit points near a center");
        sub->add_option("--center", diverge_center, "center year [coarse fixed point of T^2]");
        sub->add_option("--radius", diverge_radius, "ball radius [0.04]");
        sub->add_option("--norm", diverge_norm, "l1, l2 or linf [linf]");
        sub->add_option("--horizon", diverge_horizon, "years before and after [15]");
        sub->callback([&] {
            chosen = "diverge";
            action = [&](Context& ctx) {
                const long long h = static_cast<long long>(std::ceil(diverge_horizon));
                const Trajectory traj = ctx.trajectory(h + 5);
                const long long lo = std::max(ctx.cfg.first_year, h);
                const long long center
                    = diverge_center ? *diverge_center : locate_fixed_point(traj, lo, ctx.cfg.last_year).year;
                const auto res = neighborhood_divergence(traj, center, diverge_radius, parse_norm(diverge_norm),
                                                         diverge_horizon, lo, ctx.cfg.last_year);
                const Stamp st = ctx.stamped({{"center", std::to_string(center)},
                                              {"radius", format_number(diverge_radius)},
                                              {"norm", diverge_norm},
                                              {"horizon", format_number(diverge_horizon)}});
                ctx.write("divergence.csv", [&](std::ostream& os) {
                    write_stamp(os, st);
                    os << "year,lag,offset\n";
                    for (const auto& c : res.curves) {
                        for (size_t k = 0; k < res.lags.size(); ++k) {
                            os << c.year << ',' << format_number(res.lags[k]) << ',' << format_number(c.offsets[k])
                               << '\n';
                        }
                    }
                });
                double past = 0.0;
                double future = 0.0;
                for (const auto& c : res.curves) {
                    for (size_t k = 0; k < res.lags.size(); ++k) {
                        double& side = res.lags[k] < 0 ? past : future;
                        side = std::max(side, std::abs(c.offsets[k]));
                    }
                }
                *ctx.out << "diverge center=" << center << " curves=" << res.curves.size() << " max_past=" << num(past)
                         << " max_future=" << num(future) << '\n';
            };
        });
    }

    // fixpoint
    int fix_iterations = 10;
    {
        CLI::App* sub = command("fixpoint", "fixed point of the two-year map: sampled candidate, then refinement");
        sub->add_option("--iterations", fix_iterations, "refinement iterations [10]");
        sub->callback([&] {
            chosen = "fixpoint";
            action = [&](Context& ctx) {
                const Trajectory traj = ctx.trajectory(5);
                const DiscreteModel model = ctx.model();
                const FixedPointResult coarse = locate_fixed_point(traj, ctx.cfg.first_year, ctx.cfg.last_year);
                const auto [a, b] = default_bracket(traj, coarse);
                RefineOptions opt;
                opt.iterations = fix_iterations;
                const FixedPointResult fine = refine_fixed_point(model, coarse, a, b, opt);
                const Stamp st = ctx.stamped({{"iterations", std::to_string(fix_iterations)},
                                              {"coarse_year", std::to_string(coarse.year)},
                                              {"coarse_residual_3d", format_number(coarse.residual_3d)},
                                              {"refined_residual_3d", format_number(fine.residual_3d)}});
                ctx.write("fixpoint.csv", [&](std::ostream& os) {
                    write_stamp(os, st);
                    os << "index,coarse,refined\n";
                    for (size_t i = 0; i < coarse.state.values.size(); ++i) {
                        os << i << ',' << format_number(coarse.state.values[i]) << ','
                           << format_number(fine.state.values[i]) << '\n';
                    }
                });
                *ctx.out << "fixpoint year=" << coarse.year << " coarse_residual=" << num(coarse.residual_3d)
                         << " refined_residual=" << num(fine.residual_3d) << " refined_l1=" << num(fine.residual_l1)
                         << (fine.converged ? "" : " refinement-failed") << '\n';
            };
        });
    }

    // jacobian
    double jac_eps = 1e-6;
    int jac_k = 5;
    {
        CLI::App* sub = command("jacobian", "finite-difference differential of the two-year map at the fixed point");
        sub->add_option("--fd-eps", jac_eps, "forward-difference step [1e-6]");
        sub->add_option("--k", jac_k, "eigenvalues reported [5]");
        sub->add_option("--iterations", fix_iterations, "fixed point refinement iterations [10]");
        sub->callback([&] {
            chosen = "jacobian";
            action = [&](Context& ctx) {
                const Trajectory traj = ctx.trajectory(5);
                const FixedPointResult fp = find_fixed_point(ctx, traj, fix_iterations);
                const Eigen::MatrixXd jac = jacobian_fd(ctx.model(), fp.state, jac_eps, ctx.jobs);
                SurveyEntry entry;
                entry.spectrum = spectrum(jac, jac_k);
                entry.spectrum.fd_epsilon = jac_eps;
                for (const auto& l : entry.spectrum.eigenvalues) {
                    entry.flagged.push_back(std::abs(l) > 0.0 && std::abs(std::log10(std::abs(l))) < std::log10(1.5));
                }
                const Stamp st = ctx.stamped({{"fd_eps", format_number(jac_eps)}, {"k", std::to_string(jac_k)}});
                ctx.write("jacobian.csv", [&](std::ostream& os) {
                    write_stamp(os, st);
                    os << "row,col,value\n";
                    for (Eigen::Index r = 0; r < jac.rows(); ++r) {
                        for (Eigen::Index c = 0; c < jac.cols(); ++c) {
                            os << r << ',' << c << ',' << format_number(jac(r, c)) << '\n';
                        }
                    }
                });
                ctx.write("spectrum.csv", [&](std::ostream& os) { write_spectrum_csv(os, {entry}, st); });
                const auto& ev = entry.spectrum.eigenvalues;
                *ctx.out << "jacobian fd_eps=" << num(jac_eps) << " lambda1=" << num(ev[0].real())
                         << (ev[0].imag() != 0.0 ? "+i" + num(ev[0].imag()) : "");
                if (ev.size() > 1) {
                    *ctx.out << " |lambda2|=" << num(std::abs(ev[1]));
                }
                *ctx.out << '\n';
            };
        });
    }

    // spectrum (hyperbolicity survey)
    size_t survey_points = 80;
    double survey_eps = 1e-3;
    double survey_threshold = std::log10(1.5);
    int survey_k = 5;
    {
        CLI::App* sub = command("spectrum", "eigenvalues of the two-year differential at farthest-point samples");
        sub->add_option("--points", survey_points, "surveyed attractor points [80]");
        sub->add_option("--fd-eps", survey_eps, "forward-difference step [1e-3]");
        sub->add_option("--threshold", survey_threshold, "flag |log10|lambda|| below this [log10(1.5)]");
        sub->add_option("--k", survey_k, "eigenvalues per point [5]");
        sub->callback([&] {
            chosen = "spectrum";
            action = [&](Context& ctx) {
                const Trajectory traj = ctx.trajectory(3);
                const EmbeddedCloud cloud = embed3(traj, ctx.cfg.first_year, ctx.cfg.last_year);
                std::vector<StateWindow> points;
                for (size_t i : farthest_point_sampling(cloud.points, survey_points)) {
                    points.push_back(window_at_step(traj, cloud.times[i] * ctx.cfg.p));
                }
                const auto entries
                    = hyperbolicity_survey(ctx.model(), points, survey_eps, survey_threshold, survey_k, ctx.jobs);
                const Stamp st = ctx.stamped({{"points", std::to_string(survey_points)},
                                              {"fd_eps", format_number(survey_eps)},
                                              {"threshold", format_number(survey_threshold)},
                                              {"k", std::to_string(survey_k)}});
                ctx.write("spectrum.csv", [&](std::ostream& os) { write_spectrum_csv(os, entries, st); });
                const auto flagged
                    = std::count_if(entries.begin(), entries.end(), [](const SurveyEntry& e) { return e.any_flagged; });
                *ctx.out << "spectrum points=" << entries.size() << " flagged=" << flagged << '\n';
            };
        });
    }

    // manifold
    ManifoldOptions man;
    {
        CLI::App* sub = command("manifold", "successive two-year images of the local unstable manifold");
        sub->add_option("--iterations", man.iterations, "two-year iterations [12]");
        sub->add_option("--eta", man.eta, "largest 3-D gap between vertices [0.01]");
        sub->add_option("--delta", man.delta, "half-length of the initial segment [1e-5]");
        sub->add_option("--budget", man.vertex_budget, "vertex budget [1000000]");
        sub->callback([&] {
            chosen = "manifold";
            action = [&](Context& ctx) {
                const Trajectory traj = ctx.trajectory(5);
                const DiscreteModel model = ctx.model();
                const FixedPointResult fp = find_fixed_point(ctx, traj, 10);
                const SpectrumReport sp = spectrum(jacobian_fd(model, fp.state, 1e-6, ctx.jobs), 1);
                if (sp.leading_vectors.front().empty()) {
                    throw numeric_error("leading eigenvalue is complex; no real unstable direction");
                }
                const ManifoldResult res = unstable_manifold(model, fp.state, sp.leading_vectors.front(), man);
                for (size_t n = 0; n < res.iterates.size(); ++n) {
                    const Polyline& line = res.iterates[n];
                    std::ostringstream name;
                    name << "manifold_" << std::setw(3) << std::setfill('0') << n << ".csv";
                    const Stamp st = ctx.stamped({{"iteration", std::to_string(n)},
                                                  {"eta", format_number(man.eta)},
                                                  {"delta", format_number(man.delta)}});
                    ctx.write(name.str(), [&](std::ostream& os) { write_polyline_csv(os, line.shadows, line.params, st); });
                }
                const Polyline& last = res.iterates.back();
                *ctx.out << "manifold lambda1=" << num(sp.eigenvalues[0].real()) << " iterations="
                         << res.iterates.size() - 1 << " vertices=" << last.size()
                         << " arclength=" << num(arclength(last.shadows)) << (res.truncated ? " truncated" : "")
                         << '\n';
            };
        });
    }

    // fold
    std::optional<long long> fold_a;
    std::optional<long long> fold_b;
    FoldOptions fold_opt;
    AnchorSearchOptions anchor_opt;
    long long fold_frames = 0;
    {
        CLI::App* sub = command("fold", "curvature of a filament pushed through the fold");
        sub->add_option("--anchor-a", fold_a, "first anchor year [searched]");
        sub->add_option("--anchor-b", fold_b, "second anchor year [searched]");
        sub->add_option("--points", fold_opt.n_points, "filament points [1000]");
        sub->add_option("--horizon", fold_opt.horizon_years, "tracked years [4]");
        sub->add_option("--pre-years", fold_opt.pre_years, "years between preimages and anchors [10]");
        sub->add_option("--target-fraction", anchor_opt.target_fraction,
                        "preferred fold position when searching anchors [0.5]");
        sub->add_option("--frames", fold_frames, "write the filament every N steps (0: never) [0]");
        sub->callback([&] {
            chosen = "fold";
            action = [&](Context& ctx) {
                const Trajectory traj = ctx.trajectory(5);
                const DiscreteModel model = ctx.model();
                long long ya = 0;
                long long yb = 0;
                if (fold_a && fold_b) {
                    ya = *fold_a;
                    yb = *fold_b;
                } else if (!fold_a && !fold_b) {
                    const long long lo = std::max<long long>(ctx.cfg.first_year, fold_opt.pre_years);
                    const FoldAnchors an = find_fold_anchors(model, traj, lo, ctx.cfg.last_year, fold_opt, anchor_opt);
                    ya = an.year_a;
                    yb = an.year_b;
                } else {
                    throw config_error("give both --anchor-a and --anchor-b, or neither");
                }
                const FoldTrack track = fold_track(model, traj, ya, yb, fold_opt);
                const Stamp st = ctx.stamped({{"anchor_a", std::to_string(ya)},
                                              {"anchor_b", std::to_string(yb)},
                                              {"points", std::to_string(fold_opt.n_points)},
                                              {"horizon", format_number(fold_opt.horizon_years)},
                                              {"pre_years", std::to_string(fold_opt.pre_years)}});
                ctx.write("fold.csv", [&](std::ostream& os) {
                    write_stamp(os, st);
                    os << "time,max_curvature,vertex\n";
                    for (size_t i = 0; i < track.times.size(); ++i) {
                        os << format_number(track.times[i]) << ',' << format_number(track.max_curvature[i]) << ','
                           << track.argmax[i] << '\n';
                    }
                });
                if (fold_frames > 0) {
                    std::vector<double> params(track.n_points);
                    for (size_t j = 0; j < params.size(); ++j) {
                        params[j] = static_cast<double>(j) / static_cast<double>(params.size() - 1);
                    }
                    const long long h = std::llround(fold_opt.horizon_years * ctx.cfg.p);
                    for (long long k = 0; k <= h; k += fold_frames) {
                        std::ostringstream name;
                        name << "filament_" << std::setw(5) << std::setfill('0') << k << ".csv";
                        Stamp fs = st;
                        fs.emplace_back("time", format_number(static_cast<double>(k) / ctx.cfg.p));
                        const auto shadows = track.filament(k);
                        ctx.write(name.str(), [&](std::ostream& os) { write_polyline_csv(os, shadows, params, fs); });
                    }
                }
                const double emerge = fold_emergence_time(track);
                const double t_lo = emerge >= 0.0 ? emerge : 0.0;
                *ctx.out << "fold anchors=" << ya << "," << yb << " emergence=" << num(emerge)
                         << " location=" << fold_location(track, t_lo, fold_opt.horizon_years) << "/"
                         << track.n_points << '\n';
            };
        });
    }

    // components
    int comp_max = 20;
    double comp_sep = 0.05;
    {
        CLI::App* sub = command("components", "number of cyclically permuted pieces of the embedded cloud");
        sub->add_option("--max-n", comp_max, "largest count tried [20]");
        sub->add_option("--separation", comp_sep, "minimal gap between pieces [0.05]");
        sub->callback([&] {
            chosen = "components";
            action = [&](Context& ctx) {
                const Trajectory traj = ctx.trajectory(3);
                const EmbeddedCloud cloud = embed3(traj, ctx.cfg.first_year, ctx.cfg.last_year, ctx.cfg.delta_t);
                const int n = component_count(cloud, comp_max, comp_sep);
                const Stamp st = ctx.stamped({{"max_n", std::to_string(comp_max)},
                                              {"separation", format_number(comp_sep)},
                                              {"components", std::to_string(n)}});
                ctx.write("components.csv", [&](std::ostream& os) {
                    write_stamp(os, st);
                    os << "year,x,y,z,class\n";
                    for (size_t i = 0; i < cloud.size(); ++i) {
                        const Point3& pt = cloud.points[i];
                        os << cloud.times[i] << ',' << format_number(pt[0]) << ',' << format_number(pt[1]) << ','
                           << format_number(pt[2]) << ',' << ((cloud.times[i] % n) + n) % n << '\n';
                    }
                });
                const auto period = detect_period(annual_samples(traj, ctx.cfg.first_year, ctx.cfg.last_year));
                *ctx.out << "components n=" << n << " period=" << (period ? std::to_string(*period) : "none")
                         << '\n';
            };
        });
    }

    // theory
    {
        CLI::App* sub = command("theory", "closed-form constants: equilibrium, bounds, Hopf thresholds");
        sub->callback([&] {
            chosen = "theory";
            action = [](Context& ctx) {
                const ModelParams& prm = ctx.cfg.params;
                const TheoryBounds b = population_bounds(prm);
                const auto thresholds = gamma_thresholds(prm.a0, prm.a1, 2);
                std::optional<double> n_eq;
                try {
                    n_eq = equilibrium_density(prm);
                } catch (const Error&) {
                }
                const bool ok = prm.theory_conditions();
                ctx.write("theory.csv", [&](std::ostream& os) {
                    write_stamp(os, ctx.stamp);
                    os << "quantity,value\n";
                    os << "n_eq," << (n_eq ? format_number(*n_eq) : "nan") << '\n';
                    os << "n_max," << format_number(b.n_max) << '\n';
                    os << "c0," << format_number(b.c0) << '\n';
                    os << "lower," << format_number(b.lower) << '\n';
                    os << "lipschitz," << format_number(b.lipschitz) << '\n';
                    for (size_t k = 0; k < thresholds.size(); ++k) {
                        os << "gamma_" << k << ',' << format_number(thresholds[k]) << '\n';
                    }
                    os << "theory_conditions," << (ok ? 1 : 0) << '\n';
                });
                *ctx.out << "theory N_eq=" << (n_eq ? num(*n_eq) : std::string("none")) << " n_max=" << num(b.n_max)
                         << " lower=" << num(b.lower) << " L=" << num(b.lipschitz);
                for (size_t k = 0; k < thresholds.size(); ++k) {
                    *ctx.out << " gamma" << k << "=" << num(thresholds[k]);
                }
                *ctx.out << " conditions=" << (ok ? "hold" : "fail") << '\n';
            };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    const CLI::App* selected = app.get_subcommands().front();
    size_t index = 0;
    while (subs[index] != selected) {
        ++index;
    }

    try {
        const CommonFlags& f = *flags.at(index);
        Context ctx;
        ctx.cfg = resolve(f);
        ctx.cfg.validate();
        ctx.stamp = base_stamp(chosen, ctx.cfg);
        ctx.out_dir = f.out;
        ctx.jobs = f.jobs;
        ctx.out = &out;
        action(ctx);
    } catch (const Error& e) {
        err << "error[" << e.category_name() << "]: " << e.what() << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

} // namespace vole::cli
