#include <algorithm>
#include <cstdio>

#include "icethick/error.hpp"
#include "icethick/training.hpp"

namespace icethick {

Report report_table(std::vector<ResultRow> results, double resolution_cm_per_pixel) {
  if (results.empty()) throw ContractError("report_table: no results");
  std::stable_sort(results.begin(), results.end(), [](const ResultRow& a, const ResultRow& b) {
    return a.test_mae_px < b.test_mae_px;
  });
  Report r;
  r.rows = std::move(results);
  r.best = 0;
  r.csv = "backbone,train_mae_px,test_mae_px,train_mae_cm,test_mae_cm\n";
  std::size_t name_width = 8;
  for (const auto& row : r.rows) name_width = std::max(name_width, row.backbone.size());
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %12s  %12s  %12s  %12s\n", static_cast<int>(name_width),
                "backbone", "train_mae_px", "test_mae_px", "train_mae_cm", "test_mae_cm");
  r.table = line;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& row = r.rows[i];
    const double train_cm = pixels_to_cm(row.train_mae_px, resolution_cm_per_pixel);
    const double test_cm = pixels_to_cm(row.test_mae_px, resolution_cm_per_pixel);
    r.csv += row.backbone + "," + format_thickness(row.train_mae_px) + "," +
             format_thickness(row.test_mae_px) + "," + format_thickness(train_cm) + "," +
             format_thickness(test_cm) + "\n";
    std::snprintf(line, sizeof line, "%-*s  %12.4f  %12.4f  %12.4f  %12.4f%s\n",
                  static_cast<int>(name_width), row.backbone.c_str(), row.train_mae_px,
                  row.test_mae_px, train_cm, test_cm, i == r.best ? "  <- best" : "");
    r.table += line;
  }
  return r;
}

}  // namespace icethick
