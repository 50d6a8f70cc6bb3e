#pragma once

// Evaluation curves (error vs. time before grasp, bootstrap 95% CI) plus
// the CSV and SVG exporters used by the reporting tools.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "graspred/classify.hpp"
#include "graspred/geometry.hpp"

namespace graspred {

// ---------------------------------------------------------------------------
// Pointwise error metrics
// ---------------------------------------------------------------------------

double distance_error(const Vec3& pred, const Vec3& truth);

// Signed seconds, pred - truth; negative = the prediction was early.
double time_error(double pred_remaining, double true_remaining);
double abs_time_error(double pred_remaining, double true_remaining);

struct PostureErrors {
  double mse = 0.0;         // mean over all 15 components of squared error
  double mean_euclid = 0.0; // mean over the 5 fingers of Euclidean distance
};

PostureErrors posture_errors(const std::array<Vec3, 5>& pred,
                             const std::array<Vec3, 5>& truth);

// ---------------------------------------------------------------------------
// Bucketed curves
// ---------------------------------------------------------------------------

enum class MetricKind { DistanceM, TimeErrorS, AbsTimeErrorS, Mse, EuclidM };
std::string metric_name(MetricKind m);  // distance_m, time_error_s, ...

struct TimedValue {
  double time_before_grasp = 0.0;  // <= 0 offset from the grasp instant
  double value = 0.0;
};

struct Bucket {
  double t_lo = 0.0, t_hi = 0.0;  // offsets; t_lo < t_hi <= 0
  std::size_t n = 0;
  double mean = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // ci_lo <= mean <= ci_hi
};

struct EvalCurve {
  MetricKind metric = MetricKind::DistanceM;
  std::string label;  // legend entry, e.g. a model name
  std::vector<Bucket> buckets;
};

struct BucketConfig {
  double width = 0.25;
  double span_lo = -2.0, span_hi = 0.0;
  std::size_t resamples = 1000;  // percentile bootstrap for the 95% CI
  std::uint64_t seed = 0;
};

// Buckets are half-open [lo, hi) except the last, which closes at span_hi so
// an offset of exactly 0 is kept. Records outside the span are dropped;
// empty buckets are omitted. Throws NoRecords on empty input.
EvalCurve bucket_curve(const std::vector<TimedValue>& records, MetricKind metric,
                       const BucketConfig& config = {});

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

// RFC-4180 CSV: header row, 9-significant-digit decimals, LF line endings.
std::string to_csv(const EvalCurve& curve);
std::string to_csv(const ConfusionMatrix& m);
std::string to_csv(const CvResult& result);
std::string to_csv(const WindowSweepTable& table);

EvalCurve curve_from_csv(const std::string& text);

struct SvgStyle {
  double width = 720.0, height = 440.0;
  std::string title;
  std::string x_label = "time before grasp [s]";
  std::string y_label;
};

// Standalone deterministic SVG: per curve one polyline, one CI band and one
// marker per bucket, shared axes, legend from curve labels.
std::string render_curve_svg(const std::vector<EvalCurve>& curves, const SvgStyle& style);

// Writes text exactly as given (LF endings preserved). Throws IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace graspred
