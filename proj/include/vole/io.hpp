#pragma once

#include "vole/analysis.hpp"
#include "vole/embedding.hpp"
#include "vole/simulator.hpp"

#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace vole
{

/// Shortest decimal string that reads back to the same double.
std::string format_number(double v);

/// Ordered key/value pairs written as `# key=value` lines above a table.
using Stamp = std::vector<std::pair<std::string, std::string>>;

void write_stamp(std::ostream& os, const Stamp& stamp);

/// step,year_phase,births,mature for every step with recorded births.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const Stamp& stamp = {});

void write_cloud_csv(std::ostream& os, const EmbeddedCloud& cloud, const Stamp& stamp = {});

/// Undefined ratios print as nan, degenerate projections as inf.
void write_distortion_csv(std::ostream& os, const std::vector<DistortionEntry>& entries, const Stamp& stamp = {});

void write_diagram_csv(std::ostream& os, const BifurcationDiagram& diagram, const Stamp& stamp = {});

void write_dimension_csv(std::ostream& os, const DimensionFit& fit, const Stamp& stamp = {});

void write_spectrum_csv(std::ostream& os, const std::vector<SurveyEntry>& entries, const Stamp& stamp = {});

/// vertex,param,x,y,z,ds,curvature. ds belongs to the segment leaving a
/// vertex, curvature to the middle vertex of each corner; missing cells are empty.
void write_polyline_csv(std::ostream& os, const std::vector<Point3>& shadows, const std::vector<double>& params,
                        const Stamp& stamp = {});

} // namespace vole
