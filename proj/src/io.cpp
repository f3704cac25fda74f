#include "vole/io.hpp"

#include "vole/errors.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

namespace vole
{

std::string format_number(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) {
        throw io_error("number formatting failed");
    }
    return std::string(buf, res.ptr);
}

void write_stamp(std::ostream& os, const Stamp& stamp)
{
    for (const auto& [key, value] : stamp) {
        os << "# " << key << '=' << value << '\n';
    }
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const Stamp& stamp)
{
    write_stamp(os, stamp);
    os << "step,year_phase,births,mature\n";
    const long long mem = 2LL * traj.steps_per_year;
    const long long last_birth = traj.first_step - mem + static_cast<long long>(traj.births.size()) - 1;
    const long long last = std::min(traj.last_step(), last_birth);
    for (long long s = traj.first_step; s <= last; ++s) {
        os << s << ',' << format_number(static_cast<double>(s) / traj.steps_per_year) << ','
           << format_number(traj.birth_at(s)) << ',' << format_number(traj.mature_at(s)) << '\n';
    }
}

void write_cloud_csv(std::ostream& os, const EmbeddedCloud& cloud, const Stamp& stamp)
{
    write_stamp(os, stamp);
    os << "year,x,y,z\n";
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Point3& p = cloud.points[i];
        os << cloud.times[i] << ',' << format_number(p[0]) << ',' << format_number(p[1]) << ','
           << format_number(p[2]) << '\n';
    }
}

void write_distortion_csv(std::ostream& os, const std::vector<DistortionEntry>& entries, const Stamp& stamp)
{
    write_stamp(os, stamp);
    os << "center,sup_ratio,ball_count\n";
    for (const DistortionEntry& e : entries) {
        const double ratio = e.infinite() ? INFINITY : (e.defined ? e.sup_ratio : NAN);
        os << e.center << ',' << format_number(ratio) << ',' << e.ball_count << '\n';
    }
}

void write_diagram_csv(std::ostream& os, const BifurcationDiagram& diagram, const Stamp& stamp)
{
    write_stamp(os, stamp);
    os << "param,year,N\n";
    for (size_t g = 0; g < diagram.grid.size(); ++g) {
        const std::string param = format_number(diagram.grid[g]);
        for (size_t k = 0; k < diagram.samples[g].size(); ++k) {
            os << param << ',' << diagram.first_year + static_cast<long long>(k) << ','
               << format_number(diagram.samples[g][k]) << '\n';
        }
    }
}

void write_dimension_csv(std::ostream& os, const DimensionFit& fit, const Stamp& stamp)
{
    write_stamp(os, stamp);
    os << "eps,count,in_fit_window\n";
    for (size_t k = 0; k < fit.eps_grid.size(); ++k) {
        os << format_number(fit.eps_grid[k]) << ',' << fit.counts[k] << ',' << (fit.in_window[k] ? 1 : 0) << '\n';
    }
}

void write_spectrum_csv(std::ostream& os, const std::vector<SurveyEntry>& entries, const Stamp& stamp)
{
    write_stamp(os, stamp);
    os << "point_id,rank,re,im,modulus,flagged\n";
    for (const SurveyEntry& e : entries) {
        for (size_t r = 0; r < e.spectrum.eigenvalues.size(); ++r) {
            const auto& l = e.spectrum.eigenvalues[r];
            os << e.point_id << ',' << r + 1 << ',' << format_number(l.real()) << ',' << format_number(l.imag()) << ','
               << format_number(std::abs(l)) << ',' << (r < e.flagged.size() && e.flagged[r] ? 1 : 0) << '\n';
        }
    }
}

void write_polyline_csv(std::ostream& os, const std::vector<Point3>& shadows, const std::vector<double>& params,
                        const Stamp& stamp)
{
    if (params.size() != shadows.size()) {
        throw domain_error("polyline parameters and vertices differ in length");
    }
    write_stamp(os, stamp);
    os << "vertex,param,x,y,z,ds,curvature\n";
    PolylineGeometry geo;
    if (shadows.size() >= 3) {
        geo = polyline_geometry(std::span<const Point3>(shadows));
    }
    for (size_t j = 0; j < shadows.size(); ++j) {
        const Point3& p = shadows[j];
        os << j << ',' << format_number(params[j]) << ',' << format_number(p[0]) << ',' << format_number(p[1]) << ','
           << format_number(p[2]) << ',';
        if (j < geo.ds.size()) {
            os << format_number(geo.ds[j]);
        }
        os << ',';
        if (j >= 1 && j - 1 < geo.curvature.size()) {
            os << format_number(geo.curvature[j - 1]);
        }
        os << '\n';
    }
}

} // namespace vole
