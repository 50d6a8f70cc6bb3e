#include "graspred/eval_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "graspred/errors.hpp"
#include "graspred/numeric.hpp"
#include "graspred/parallel.hpp"
#include "graspred/rng.hpp"

namespace graspred {

namespace {

constexpr std::uint64_t kStreamBootstrap = 0xB0;

void require_finite(const Vec3& v, const char* who) {
  if (!v.finite()) throw ValidationError(std::string(who) + ": non-finite input");
}

}  // namespace

double distance_error(const Vec3& pred, const Vec3& truth) {
  require_finite(pred, "distance_error");
  require_finite(truth, "distance_error");
  return (pred - truth).norm();
}

double time_error(double pred_remaining, double true_remaining) {
  if (!std::isfinite(pred_remaining) || !std::isfinite(true_remaining)) {
    throw ValidationError("time_error: non-finite input");
  }
  return pred_remaining - true_remaining;
}

double abs_time_error(double pred_remaining, double true_remaining) {
  return std::abs(time_error(pred_remaining, true_remaining));
}

PostureErrors posture_errors(const std::array<Vec3, 5>& pred,
                             const std::array<Vec3, 5>& truth) {
  PostureErrors e;
  for (int f = 0; f < 5; ++f) {
    require_finite(pred[f], "posture_errors");
    require_finite(truth[f], "posture_errors");
    const Vec3 d = pred[f] - truth[f];
    e.mse += d.squared_norm();
    e.mean_euclid += d.norm();
  }
  e.mse /= 15.0;
  e.mean_euclid /= 5.0;
  return e;
}

// ---------------------------------------------------------------------------
// Bucketed curves
// ---------------------------------------------------------------------------

std::string metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::DistanceM: return "distance_m";
    case MetricKind::TimeErrorS: return "time_error_s";
    case MetricKind::AbsTimeErrorS: return "abs_time_error_s";
    case MetricKind::Mse: return "mse";
    case MetricKind::EuclidM: return "euclid_m";
  }
  throw ConfigError("metric_name: unknown metric");
}

namespace {

MetricKind metric_from_name(const std::string& name) {
  for (MetricKind m : {MetricKind::DistanceM, MetricKind::TimeErrorS,
                       MetricKind::AbsTimeErrorS, MetricKind::Mse, MetricKind::EuclidM}) {
    if (metric_name(m) == name) return m;
  }
  throw ParseError("unknown metric name '" + name + "'");
}

}  // namespace

EvalCurve bucket_curve(const std::vector<TimedValue>& records, MetricKind metric,
                       const BucketConfig& config) {
  if (records.empty()) throw NoRecords("bucket_curve: no records");
  if (!(config.width > 0.0) || !(config.span_lo < config.span_hi) ||
      config.span_hi > 0.0 + 1e-12 || config.resamples == 0) {
    throw ConfigError("bucket_curve: bad bucket configuration");
  }

  const double span = config.span_hi - config.span_lo;
  const auto n_buckets =
      static_cast<std::size_t>(std::ceil(span / config.width - 1e-9));
  std::vector<std::vector<double>> values(n_buckets);
  for (const TimedValue& r : records) {
    if (!std::isfinite(r.time_before_grasp) || !std::isfinite(r.value)) {
      throw ValidationError("bucket_curve: non-finite record");
    }
    if (r.time_before_grasp < config.span_lo || r.time_before_grasp > config.span_hi) {
      continue;  // outside the reported span
    }
    auto b = static_cast<std::size_t>(
        std::floor((r.time_before_grasp - config.span_lo) / config.width));
    b = std::min(b, n_buckets - 1);  // span_hi itself closes the last bucket
    values[b].push_back(r.value);
  }

  EvalCurve curve;
  curve.metric = metric;
  for (std::size_t b = 0; b < n_buckets; ++b) {
    const std::vector<double>& v = values[b];
    if (v.empty()) continue;
    Bucket bucket;
    bucket.t_lo = config.span_lo + config.width * static_cast<double>(b);
    bucket.t_hi = std::min(bucket.t_lo + config.width, config.span_hi);
    bucket.n = v.size();
    bucket.mean = mean_of(v);
    if (v.size() == 1) {
      bucket.ci_lo = bucket.ci_hi = v.front();
    } else {
      std::vector<double> means(config.resamples);
      parallel_for(config.resamples, [&](std::size_t r) {
        Rng rng = make_rng(derive_seed(config.seed, {kStreamBootstrap, b, r}));
        std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
        double acc = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) acc += v[pick(rng)];
        means[r] = acc / static_cast<double>(v.size());
      });
      std::sort(means.begin(), means.end());
      bucket.ci_lo = quantile_sorted(means, 0.025);
      bucket.ci_hi = quantile_sorted(means, 0.975);
      // percentile intervals can exclude the point estimate on tiny samples
      bucket.ci_lo = std::min(bucket.ci_lo, bucket.mean);
      bucket.ci_hi = std::max(bucket.ci_hi, bucket.mean);
    }
    curve.buckets.push_back(bucket);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote in CSV line: " + line);
  fields.push_back(cur);
  return fields;
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

double parse_number(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ParseError("");
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " value '" + s + "'");
  }
}

}  // namespace

std::string to_csv(const EvalCurve& curve) {
  std::string out = "metric,label,t_lo,t_hi,n,mean,ci_lo,ci_hi\n";
  for (const Bucket& b : curve.buckets) {
    out += metric_name(curve.metric) + "," + csv_field(curve.label) + "," +
           format_sig9(b.t_lo) + "," + format_sig9(b.t_hi) + "," + std::to_string(b.n) +
           "," + format_sig9(b.mean) + "," + format_sig9(b.ci_lo) + "," +
           format_sig9(b.ci_hi) + "\n";
  }
  return out;
}

EvalCurve curve_from_csv(const std::string& text) {
  const std::vector<std::string> lines = csv_lines(text);
  if (lines.empty() || lines.front() != "metric,label,t_lo,t_hi,n,mean,ci_lo,ci_hi") {
    throw ParseError("curve_from_csv: missing or wrong header");
  }
  EvalCurve curve;
  bool first = true;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::vector<std::string> f = split_csv_line(lines[i]);
    if (f.size() != 8) {
      throw ParseError("curve_from_csv: line " + std::to_string(i + 1) + " has " +
                       std::to_string(f.size()) + " fields, want 8");
    }
    if (first) {
      curve.metric = metric_from_name(f[0]);
      curve.label = f[1];
      first = false;
    }
    Bucket b;
    b.t_lo = parse_number(f[2], "t_lo");
    b.t_hi = parse_number(f[3], "t_hi");
    b.n = static_cast<std::size_t>(parse_number(f[4], "n"));
    b.mean = parse_number(f[5], "mean");
    b.ci_lo = parse_number(f[6], "ci_lo");
    b.ci_hi = parse_number(f[7], "ci_hi");
    curve.buckets.push_back(b);
  }
  return curve;
}

std::string to_csv(const ConfusionMatrix& m) {
  std::string out = "true_label";
  for (const std::string& l : m.labels) out += "," + csv_field(l);
  out += "\n";
  for (std::size_t r = 0; r < m.labels.size(); ++r) {
    out += csv_field(m.labels[r]);
    for (std::size_t c = 0; c < m.labels.size(); ++c) {
      out += "," + std::to_string(m.counts[r][c]);
    }
    out += "\n";
  }
  return out;
}

std::string to_csv(const CvResult& result) {
  std::string out = "target,accuracy,correct,total\n";
  for (const TargetResult& r : result.per_target) {
    out += label_target_name(r.target) + "," + format_sig9(r.accuracy) + "," +
           std::to_string(r.correct) + "," + std::to_string(r.total) + "\n";
  }
  out += "overall," + format_sig9(result.overall_accuracy) + "," +
         std::to_string(result.overall_correct) + "," +
         std::to_string(result.overall_total) + "\n";
  return out;
}

std::string to_csv(const WindowSweepTable& table) {
  std::string out = "nearest,farthest,samples";
  for (LabelTarget t : table.targets) out += "," + label_target_name(t);
  out += ",overall\n";
  for (const WindowSweepRow& row : table.rows) {
    out += std::to_string(row.window.nearest) + "," + std::to_string(row.window.farthest) +
           "," + std::to_string(row.sample_count);
    for (std::size_t i = 0; i < table.targets.size(); ++i) {
      out += ",";
      if (i < row.accuracy.size()) out += format_sig9(row.accuracy[i]);
    }
    out += ",";
    if (!row.accuracy.empty()) out += format_sig9(row.overall_accuracy);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr std::size_t kPaletteCount = sizeof(kPalette) / sizeof(kPalette[0]);

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v == 0.0 ? 0.0 : v);
  return buf;
}

}  // namespace

std::string render_curve_svg(const std::vector<EvalCurve>& curves, const SvgStyle& style) {
  if (curves.empty()) throw ConfigError("render_curve_svg: no curves");

  const double ml = 64, mr = 16, mt = 40, mb = 48;
  const double w = style.width, h = style.height;

  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool any = false;
  for (const EvalCurve& c : curves) {
    for (const Bucket& b : c.buckets) {
      const double xm = 0.5 * (b.t_lo + b.t_hi);
      if (!any) {
        x0 = x1 = xm;
        y0 = b.ci_lo;
        y1 = b.ci_hi;
        any = true;
      } else {
        x0 = std::min(x0, xm);
        x1 = std::max(x1, xm);
        y0 = std::min(y0, b.ci_lo);
        y1 = std::max(y1, b.ci_hi);
      }
    }
  }
  if (!any) {
    x0 = -1;
    x1 = 0;
    y0 = 0;
    y1 = 1;
  }
  if (x1 - x0 < 1e-12) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  double ypad = (y1 - y0) * 0.05;
  if (ypad < 1e-12) ypad = std::max(1e-6, std::abs(y1) * 0.1 + 0.1);
  y0 -= ypad;
  y1 += ypad;

  const auto sx = [&](double t) { return ml + (t - x0) / (x1 - x0) * (w - ml - mr); };
  const auto sy = [&](double v) { return h - mb - (v - y0) / (y1 - y0) * (h - mt - mb); };
  const auto num = [](double v) { return format_sig9(v); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" +
         num(h) + "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(h) +
         "\" fill=\"#ffffff\"/>\n";
  if (!style.title.empty()) {
    svg += "<text x=\"" + num(w / 2) +
           "\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\">" +
           xml_escape(style.title) + "</text>\n";
  }

  // axes + ticks
  svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(h - mb) + "\" x2=\"" + num(w - mr) +
         "\" y2=\"" + num(h - mb) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) +
         "\" y2=\"" + num(h - mb) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double tx = x0 + (x1 - x0) * i / 4.0;
    const double ty = y0 + (y1 - y0) * i / 4.0;
    svg += "<line x1=\"" + num(sx(tx)) + "\" y1=\"" + num(h - mb) + "\" x2=\"" +
           num(sx(tx)) + "\" y2=\"" + num(h - mb + 4) +
           "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + num(sx(tx)) + "\" y=\"" + num(h - mb + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
           xml_escape(fmt_tick(tx)) + "</text>\n";
    svg += "<line x1=\"" + num(ml - 4) + "\" y1=\"" + num(sy(ty)) + "\" x2=\"" + num(ml) +
           "\" y2=\"" + num(sy(ty)) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(sy(ty) + 3) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
           xml_escape(fmt_tick(ty)) + "</text>\n";
  }
  svg += "<text x=\"" + num(ml + (w - ml - mr) / 2) + "\" y=\"" + num(h - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         xml_escape(style.x_label) + "</text>\n";
  if (!style.y_label.empty()) {
    svg += "<text x=\"14\" y=\"" + num(mt + (h - mt - mb) / 2) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 14 " +
           num(mt + (h - mt - mb) / 2) + ")\">" + xml_escape(style.y_label) + "</text>\n";
  }

  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const EvalCurve& c = curves[ci];
    const std::string color = kPalette[ci % kPaletteCount];
    if (c.buckets.empty()) continue;

    std::string band;
    for (const Bucket& b : c.buckets) {
      band += num(sx(0.5 * (b.t_lo + b.t_hi))) + "," + num(sy(b.ci_hi)) + " ";
    }
    for (auto it = c.buckets.rbegin(); it != c.buckets.rend(); ++it) {
      band += num(sx(0.5 * (it->t_lo + it->t_hi))) + "," + num(sy(it->ci_lo)) + " ";
    }
    band.pop_back();
    svg += "<polygon points=\"" + band + "\" fill=\"" + color +
           "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";

    std::string line;
    for (const Bucket& b : c.buckets) {
      line += num(sx(0.5 * (b.t_lo + b.t_hi))) + "," + num(sy(b.mean)) + " ";
    }
    line.pop_back();
    svg += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"/>\n";

    for (const Bucket& b : c.buckets) {
      svg += "<circle cx=\"" + num(sx(0.5 * (b.t_lo + b.t_hi))) + "\" cy=\"" +
             num(sy(b.mean)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
    }
  }

  double lx = ml;
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const std::string label = curves[ci].label.empty() ? metric_name(curves[ci].metric)
                                                       : curves[ci].label;
    svg += "<rect x=\"" + num(lx) + "\" y=\"" + num(mt - 14) +
           "\" width=\"14\" height=\"4\" fill=\"" + std::string(kPalette[ci % kPaletteCount]) +
           "\"/>\n";
    svg += "<text x=\"" + num(lx + 18) + "\" y=\"" + num(mt - 9) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(label) +
           "</text>\n";
    lx += 24 + 7.0 * static_cast<double>(label.size());
  }

  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

}  // namespace graspred
