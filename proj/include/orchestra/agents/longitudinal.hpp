#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "orchestra/agents/agent.hpp"

// Trend features for irregular clinical time series.
//
// Observations are snapped to a monthly grid anchored at t = 0 (ties go to
// the earlier month). Interior runs of fewer than `short_gap_months` missing
// months carry the previous value forward; longer runs are linearly
// interpolated between the bounding observations. Months before the first
// observation stay absent. Moving averages and OLS slopes use the trailing
// `window` grid points and need at least two values in the window.
namespace orchestra::longitudinal {

struct SeriesPoint {
  double time = 0.0;  // months since baseline
  double value = 0.0;
};

enum class Fill { Missing, Observed, ForwardFilled, Interpolated };

struct TrendParams {
  std::size_t window = 3;
  std::vector<int> deltas{1};
  int short_gap_months = 3;
  double epsilon = 1e-9;
};

struct TrendFeatures {
  std::vector<std::optional<double>> aligned;  // index = month
  std::vector<Fill> fill;
  std::vector<std::optional<double>> moving_average;
  std::vector<std::optional<double>> slope;  // value per month
  std::map<int, std::vector<std::optional<double>>> rate_of_change;  // delta -> per month
};

/// Nearest grid month, ties toward the earlier month.
long snap_to_month(double time);

/// Throws EmptySeries, or InvalidArgument for unsorted, negative-time or
/// non-finite input.
TrendFeatures features(std::span<const SeriesPoint> series, const TrendParams& params = {});

/// (x_t - x_{t-delta}) / (|x_{t-delta}| * delta); nullopt when either value
/// is absent, t - delta < 0, or the baseline magnitude is below epsilon.
std::optional<double> rate_of_change(const std::vector<std::optional<double>>& aligned, long t, int delta,
                                     double epsilon = 1e-9);

/// CSV with header "time_months,value". Throws SchemaViolation.
std::vector<SeriesPoint> parse_csv(std::string_view csv);

std::string render(const TrendFeatures& features);

/// Payload: CSV text, or JSON {"points": [[t, v], ...] | "file": "x.csv",
/// "window"?, "deltas"?}. Files resolve under the configured data_dir.
class LongitudinalAgent : public Agent {
 public:
  LongitudinalAgent(std::filesystem::path data_dir, TrendParams defaults)
      : data_dir_(std::move(data_dir)), defaults_(std::move(defaults)) {}

  std::string invoke(std::string_view payload, const InvocationContext& context) override;

 private:
  std::filesystem::path data_dir_;
  TrendParams defaults_;
};

}  // namespace orchestra::longitudinal
