#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "jacprobe/certify.hpp"
#include "jacprobe/density.hpp"
#include "jacprobe/geometry.hpp"
#include "jacprobe/plmap.hpp"
#include "jacprobe/solver.hpp"

namespace jacprobe {

using Json = nlohmann::ordered_json;

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

Json rect_to_json(const Rect& r);
Rect rect_from_json(const Json& j, const std::string& field = "rect");

// {"nx","ny","rect","bits"}: bits packed MSB-first, row-major, base64.
Json to_json(const RasterMask& mask);
RasterMask mask_from_json(const Json& j);

// {"nx","ny","rect","range","values"}
Json to_json(const DensityField& field);
DensityField density_from_json(const Json& j);
// One line per grid row, bottom row first.
std::string density_to_csv(const DensityField& field);

// {"nx","ny","vertices"}, plus "rect" when the domain is not the unit square.
Json to_json(const PiecewiseAffineMap& map);
PiecewiseAffineMap map_from_json(const Json& j);

Json to_json(const Segment& s);
Json to_json(const SolverConfig& config);
// Fields present in `j` override `base`; unknown fields are rejected.
SolverConfig solver_config_from_json(const Json& j, SolverConfig base = {});

Json to_json(const SolveReport& report, const SolverConfig& config);
std::string trace_to_csv(const std::vector<double>& trace);

Json to_json(const CertificateResult& result);
Json to_json(const RefinementStep& step);
Json to_json(const ImageConvergenceReport& report);

Json read_json_file(const std::string& path);
// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

} // namespace jacprobe
