#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

// Cross-modulus scaling analysis of the specific-heat peak: collect per-p
// averaged peak heights from run directories, fit ln(cv_peak) on ln(p) by
// least squares, and emit the table and fit summary.
namespace thermo::scaling {

struct ScalingPoint {
  std::int64_t p = 0;
  double cv_peak_mean = 0.0;
  double cv_peak_std = 0.0;
  int n_seeds = 0;
};

struct ScalingFit {
  double exponent_a = 0.0;  // slope of ln(cv_peak_mean) on ln(p)
  double intercept = 0.0;
  double r_squared = 1.0;   // := 1 when the total sum of squares vanishes
  bool weighted = false;
  std::vector<ScalingPoint> points;
};

// OLS in log-log space. Requires >= 3 points with positive means. The
// weighted variant (non-default) weights each point by 1/sigma_ln^2 with
// sigma_ln = std/mean, and requires positive stds.
ScalingFit fit_power_law(const std::vector<ScalingPoint>& points,
                         bool weighted = false);

struct ScalingTable {
  std::vector<ScalingPoint> points;       // sorted by p
  std::vector<std::string> warnings;      // skipped dirs / groups, per entry
};

// Scans run directories for finalized manifests and summary records, groups
// by modulus, and aggregates per-p peak statistics. Directories with missing
// or corrupt summaries (or unfinalized manifests) are skipped with a warning;
// duplicate (p, seed) pairs are an error; groups need >= 2 seeds. An empty
// result is an error, not an empty table.
ScalingTable build_scaling_table(
    const std::vector<std::filesystem::path>& run_dirs);

inline constexpr const char* kScalingSchema = "scaling-table-v1";

void write_scaling_csv(const std::filesystem::path& path,
                       const std::vector<ScalingPoint>& points);
std::vector<ScalingPoint> read_scaling_csv(const std::filesystem::path& path);

void write_fit_json(const std::filesystem::path& path, const ScalingFit& fit);

}  // namespace thermo::scaling
