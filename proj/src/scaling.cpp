#include "attnthermo/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "attnthermo/grokking.hpp"
#include "attnthermo/util/csv.hpp"
#include "attnthermo/util/numerics.hpp"

namespace thermo::scaling {

ScalingFit fit_power_law(const std::vector<ScalingPoint>& points,
                         bool weighted) {
  if (points.size() < 3)
    throw std::invalid_argument("fit_power_law: need >= 3 points");
  std::vector<double> x, y, w;
  for (const auto& pt : points) {
    if (!(pt.cv_peak_mean > 0.0))
      throw std::invalid_argument(
          "fit_power_law: non-positive peak mean at p = " +
          std::to_string(pt.p));
    x.push_back(std::log(static_cast<double>(pt.p)));
    y.push_back(std::log(pt.cv_peak_mean));
    if (weighted) {
      if (!(pt.cv_peak_std > 0.0))
        throw std::invalid_argument(
            "fit_power_law: weighted fit needs positive std at p = " +
            std::to_string(pt.p));
      const double sigma_ln = pt.cv_peak_std / pt.cv_peak_mean;
      w.push_back(1.0 / (sigma_ln * sigma_ln));
    }
  }
  const auto ols = util::least_squares(x, y, w);
  ScalingFit fit;
  fit.exponent_a = ols.slope;
  fit.intercept = ols.intercept;
  fit.r_squared = ols.r_squared;
  fit.weighted = weighted;
  fit.points = points;
  return fit;
}

ScalingTable build_scaling_table(
    const std::vector<std::filesystem::path>& run_dirs) {
  if (run_dirs.empty())
    throw std::invalid_argument("build_scaling_table: no run directories");

  ScalingTable table;
  std::map<std::int64_t, std::vector<grokking::RunSummary>> groups;
  std::set<std::pair<std::int64_t, std::uint64_t>> seen;

  for (const auto& dir : run_dirs) {
    const auto summary_path = dir / "summary.json";
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::exists(summary_path)) {
      table.warnings.push_back(dir.string() + ": missing summary.json");
      continue;
    }
    if (std::filesystem::exists(manifest_path) &&
        !util::manifest_is_finalized(manifest_path)) {
      table.warnings.push_back(dir.string() + ": manifest not finalized");
      continue;
    }
    grokking::RunSummary s;
    try {
      s = grokking::read_summary_json(summary_path);
    } catch (const std::exception& e) {
      table.warnings.push_back(dir.string() + ": " + e.what());
      continue;
    }
    if (s.status != "completed") {
      table.warnings.push_back(dir.string() + ": run status '" + s.status + "'");
      continue;
    }
    if (!seen.insert({s.p, s.seed}).second)
      throw std::runtime_error("build_scaling_table: duplicate entry for p = " +
                               std::to_string(s.p) + ", seed = " +
                               std::to_string(s.seed) + " at " + dir.string());
    groups[s.p].push_back(std::move(s));
  }

  for (auto& [p, summaries] : groups) {
    if (summaries.size() < 2) {
      table.warnings.push_back("p = " + std::to_string(p) +
                               ": fewer than 2 seeds, skipped");
      continue;
    }
    const auto agg = grokking::aggregate_seeds(summaries);
    table.points.push_back(
        {p, agg.cv_peak_mean, agg.cv_peak_std, agg.n_seeds});
  }
  std::sort(table.points.begin(), table.points.end(),
            [](const auto& a, const auto& b) { return a.p < b.p; });
  if (table.points.empty())
    throw std::runtime_error(
        "build_scaling_table: no usable run directories (see warnings)");
  return table;
}

void write_scaling_csv(const std::filesystem::path& path,
                       const std::vector<ScalingPoint>& points) {
  util::CsvWriter w(path, kScalingSchema,
                    {"p", "cv_peak_mean", "cv_peak_std", "n_seeds"});
  for (const auto& pt : points) {
    std::vector<std::string> row = {
        std::to_string(pt.p),
        util::CsvWriter::format_double(pt.cv_peak_mean),
        util::CsvWriter::format_double(pt.cv_peak_std),
        std::to_string(pt.n_seeds)};
    w.write_row(row);
  }
}

std::vector<ScalingPoint> read_scaling_csv(const std::filesystem::path& path) {
  const auto file = util::read_csv(path, kScalingSchema);
  std::vector<ScalingPoint> out;
  for (std::size_t i = 0; i < file.rows.size(); ++i) {
    ScalingPoint pt;
    pt.p = static_cast<std::int64_t>(file.number(i, "p"));
    pt.cv_peak_mean = file.number(i, "cv_peak_mean");
    pt.cv_peak_std = file.number(i, "cv_peak_std");
    pt.n_seeds = static_cast<int>(file.number(i, "n_seeds"));
    out.push_back(pt);
  }
  return out;
}

void write_fit_json(const std::filesystem::path& path, const ScalingFit& fit) {
  nlohmann::json j;
  j["schema"] = "scaling-fit-v1";
  j["exponent"] = fit.exponent_a;
  j["intercept"] = fit.intercept;
  j["r_squared"] = fit.r_squared;
  j["weighted"] = fit.weighted;
  j["n_points"] = fit.points.size();
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("write_fit_json: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace thermo::scaling
