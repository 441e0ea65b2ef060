#ifndef PLANAGENT_SCALING_HPP_
#define PLANAGENT_SCALING_HPP_

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "planagent/common.hpp"

namespace planagent {

// Size used for GPT-4o rows in sweep data: a published estimate, not a
// disclosed parameter count.
inline constexpr double kGpt4oEstimatedParamsB = 200.0;

struct ScalePoint {
  double params_billions = 0.0;  // model size, > 0
  double success_pct = 0.0;      // [0, 100]
  std::string component_label;

  bool operator==(const ScalePoint&) const = default;
};

struct ScalingFit {
  double alpha = 0.0;      // slope on log10(size)
  double intercept = 0.0;
  double r2 = 0.0;
  int n_points = 0;

  bool operator==(const ScalingFit&) const = default;
};

// Ordinary least squares of success_pct on log(params_billions).
// Base 10 by default: the published coefficients are only consistent
// with success rates in [0,100] under log10 over the 3B-200B range.
inline ScalingFit fit_loglinear(std::span<const ScalePoint> points, double log_base = 10.0) {
  if (points.size() < 2)
    throw ValidationError("fit_loglinear: need at least 2 points");
  const double denom = std::log(log_base);
  std::vector<double> xs, ys;
  xs.reserve(points.size());
  ys.reserve(points.size());
  for (const auto& p : points) {
    if (!(p.params_billions > 0.0))
      throw ValidationError("fit_loglinear: model size must be > 0");
    xs.push_back(std::log(p.params_billions) / denom);
    ys.push_back(p.success_pct);
  }
  const double n = static_cast<double>(xs.size());
  const double mean_x = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double mean_y = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mean_x) * (xs[i] - mean_x);
    sxy += (xs[i] - mean_x) * (ys[i] - mean_y);
  }
  if (sxx == 0.0)
    throw ValidationError("fit_loglinear: degenerate design (all sizes identical)");

  ScalingFit fit;
  fit.alpha = sxy / sxx;
  fit.intercept = mean_y - fit.alpha * mean_x;
  fit.n_points = static_cast<int>(xs.size());

  double ssr = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double predicted = fit.alpha * xs[i] + fit.intercept;
    ssr += (ys[i] - predicted) * (ys[i] - predicted);
    sst += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  fit.r2 = (sst == 0.0) ? 1.0 : 1.0 - ssr / sst;
  return fit;
}

struct Prediction {
  double value = 0.0;
  bool clamped = false;

  bool operator==(const Prediction&) const = default;
};

// alpha * log10(size) + intercept, clamped to the [0, 100] success range.
inline Prediction predict_success(const ScalingFit& fit, double params_billions,
                                  double log_base = 10.0) {
  if (!(params_billions > 0.0))
    throw ValidationError("predict_success: model size must be > 0");
  const double raw = fit.alpha * std::log(params_billions) / std::log(log_base) + fit.intercept;
  Prediction p;
  p.value = std::clamp(raw, 0.0, 100.0);
  p.clamped = p.value != raw;
  return p;
}

// ---------------------------------------------------------------------------
// CSV interchange
// ---------------------------------------------------------------------------

// points.csv: "component,params_billions,success_pct" with a header line.
inline std::vector<ScalePoint> load_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open points file '" + path + "'");
  std::vector<ScalePoint> points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && line.rfind("component", 0) == 0) continue;  // header
    std::istringstream row(line);
    std::string component, size_str, pct_str;
    if (!std::getline(row, component, ',') || !std::getline(row, size_str, ',') ||
        !std::getline(row, pct_str))
      throw ParseError("points csv: expected 3 comma-separated fields", line_no);
    try {
      points.push_back(ScalePoint{std::stod(size_str), std::stod(pct_str), component});
    } catch (const std::exception&) {
      throw ParseError("points csv: bad numeric field", line_no);
    }
  }
  return points;
}

inline std::map<std::string, ScalingFit> fit_by_component(std::span<const ScalePoint> points,
                                                          double log_base = 10.0) {
  std::map<std::string, std::vector<ScalePoint>> grouped;
  for (const auto& p : points) grouped[p.component_label].push_back(p);
  std::map<std::string, ScalingFit> fits;
  for (const auto& [label, group] : grouped)
    fits[label] = fit_loglinear(group, log_base);
  return fits;
}

inline void save_fits_csv(const std::map<std::string, ScalingFit>& fits,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write fits file '" + path + "'");
  out << "component,alpha,intercept,r2,n_points\n";
  out.precision(17);
  for (const auto& [label, fit] : fits)
    out << label << ',' << fit.alpha << ',' << fit.intercept << ',' << fit.r2 << ','
        << fit.n_points << '\n';
}

inline std::map<std::string, ScalingFit> load_fits_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fits file '" + path + "'");
  std::map<std::string, ScalingFit> fits;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line_no == 1 && line.rfind("component", 0) == 0) continue;
    std::istringstream row(line);
    std::string label, a, b, r, n;
    if (!std::getline(row, label, ',') || !std::getline(row, a, ',') ||
        !std::getline(row, b, ',') || !std::getline(row, r, ',') || !std::getline(row, n))
      throw ParseError("fits csv: expected 5 comma-separated fields", line_no);
    try {
      fits[label] = ScalingFit{std::stod(a), std::stod(b), std::stod(r), std::stoi(n)};
    } catch (const std::exception&) {
      throw ParseError("fits csv: bad numeric field", line_no);
    }
  }
  return fits;
}

// Plain-text coefficient table (component, alpha, intercept, R^2).
inline std::string render_fit_table(const std::map<std::string, ScalingFit>& fits) {
  std::size_t width = 9;
  for (const auto& [label, fit] : fits) width = std::max(width, label.size());
  std::ostringstream out;
  out << std::left;
  out.setf(std::ios::fixed);
  out.precision(3);
  out.width(static_cast<std::streamsize>(width + 2));
  out << "Component";
  out << "alpha    intercept  R^2      n\n";
  for (const auto& [label, fit] : fits) {
    out.width(static_cast<std::streamsize>(width + 2));
    out << label;
    out.width(9);
    out << fit.alpha;
    out.width(11);
    out << fit.intercept;
    out.width(9);
    out << fit.r2;
    out << fit.n_points << "\n";
  }
  return out.str();
}

}  // namespace planagent

#endif  // PLANAGENT_SCALING_HPP_
