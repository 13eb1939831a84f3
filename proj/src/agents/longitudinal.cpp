#include "orchestra/agents/longitudinal.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "orchestra/error.hpp"
#include "orchestra/text.hpp"

namespace orchestra::longitudinal {

using nlohmann::json;

namespace {

std::optional<double> window_mean(const std::vector<std::optional<double>>& x, std::size_t end, std::size_t w) {
  const std::size_t begin = end + 1 >= w ? end + 1 - w : 0;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = begin; i <= end; ++i) {
    if (x[i]) {
      sum += *x[i];
      ++n;
    }
  }
  if (n < 2) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> window_slope(const std::vector<std::optional<double>>& x, std::size_t end, std::size_t w) {
  const std::size_t begin = end + 1 >= w ? end + 1 - w : 0;
  double st = 0.0, sx = 0.0;
  std::size_t n = 0;
  for (std::size_t i = begin; i <= end; ++i) {
    if (x[i]) {
      st += static_cast<double>(i);
      sx += *x[i];
      ++n;
    }
  }
  if (n < 2) return std::nullopt;
  const double tbar = st / static_cast<double>(n);
  const double xbar = sx / static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = begin; i <= end; ++i) {
    if (x[i]) {
      const double dt = static_cast<double>(i) - tbar;
      num += dt * (*x[i] - xbar);
      den += dt * dt;
    }
  }
  return num / den;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", *v);
  return buf;
}

std::string_view fill_name(Fill f) {
  switch (f) {
    case Fill::Missing: return "missing";
    case Fill::Observed: return "observed";
    case Fill::ForwardFilled: return "ffill";
    case Fill::Interpolated: return "interp";
  }
  return "?";
}

}  // namespace

long snap_to_month(double time) { return static_cast<long>(std::ceil(time - 0.5)); }

TrendFeatures features(std::span<const SeriesPoint> series, const TrendParams& params) {
  if (series.empty()) throw Error(ErrorKind::EmptySeries, "series has no points");
  if (params.window == 0) throw Error(ErrorKind::InvalidArgument, "window must be positive");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& p = series[i];
    if (!std::isfinite(p.time) || !std::isfinite(p.value)) {
      throw Error(ErrorKind::InvalidArgument, "series point " + std::to_string(i) + " is not finite");
    }
    if (p.time < 0.0) throw Error(ErrorKind::InvalidArgument, "series point " + std::to_string(i) + " has negative time");
    if (i > 0 && p.time < series[i - 1].time) {
      throw Error(ErrorKind::InvalidArgument, "series is not sorted by time at point " + std::to_string(i));
    }
  }

  const long last = snap_to_month(series.back().time);
  const std::size_t n = static_cast<std::size_t>(last) + 1;

  // Several observations landing on one month are averaged.
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (const auto& p : series) {
    const auto m = static_cast<std::size_t>(snap_to_month(p.time));
    sum[m] += p.value;
    ++count[m];
  }

  TrendFeatures f;
  f.aligned.assign(n, std::nullopt);
  f.fill.assign(n, Fill::Missing);
  std::vector<std::size_t> observed;
  for (std::size_t m = 0; m < n; ++m) {
    if (count[m] > 0) {
      f.aligned[m] = sum[m] / count[m];
      f.fill[m] = Fill::Observed;
      observed.push_back(m);
    }
  }

  for (std::size_t k = 0; k + 1 < observed.size(); ++k) {
    const std::size_t a = observed[k];
    const std::size_t b = observed[k + 1];
    const std::size_t missing = b - a - 1;
    if (missing == 0) continue;
    const double xa = *f.aligned[a];
    const double xb = *f.aligned[b];
    for (std::size_t m = a + 1; m < b; ++m) {
      if (missing < static_cast<std::size_t>(params.short_gap_months)) {
        f.aligned[m] = xa;
        f.fill[m] = Fill::ForwardFilled;
      } else {
        const double frac = static_cast<double>(m - a) / static_cast<double>(b - a);
        f.aligned[m] = xa + (xb - xa) * frac;
        f.fill[m] = Fill::Interpolated;
      }
    }
  }

  f.moving_average.resize(n);
  f.slope.resize(n);
  for (std::size_t m = 0; m < n; ++m) {
    f.moving_average[m] = window_mean(f.aligned, m, params.window);
    f.slope[m] = window_slope(f.aligned, m, params.window);
  }
  for (int d : params.deltas) {
    if (d <= 0) throw Error(ErrorKind::InvalidArgument, "rate-of-change delta must be positive");
    auto& roc = f.rate_of_change[d];
    roc.resize(n);
    for (std::size_t m = 0; m < n; ++m) roc[m] = rate_of_change(f.aligned, static_cast<long>(m), d, params.epsilon);
  }
  return f;
}

std::optional<double> rate_of_change(const std::vector<std::optional<double>>& aligned, long t, int delta,
                                     double epsilon) {
  const long base = t - delta;
  if (delta <= 0 || base < 0 || t >= static_cast<long>(aligned.size())) return std::nullopt;
  const auto& now = aligned[static_cast<std::size_t>(t)];
  const auto& then = aligned[static_cast<std::size_t>(base)];
  if (!now || !then || std::fabs(*then) < epsilon) return std::nullopt;
  return (*now - *then) / (std::fabs(*then) * delta);
}

std::vector<SeriesPoint> parse_csv(std::string_view csv) {
  std::vector<SeriesPoint> out;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto row = text::trim(line);
    if (row.empty()) continue;
    if (!header) {
      if (text::to_lower(row) != "time_months,value") {
        throw Error(ErrorKind::SchemaViolation, "expected header 'time_months,value', got '" + std::string(row) + "'");
      }
      header = true;
      continue;
    }
    const auto comma = row.find(',');
    if (comma == std::string_view::npos) {
      throw Error(ErrorKind::SchemaViolation, "line " + std::to_string(lineno) + ": expected two columns");
    }
    try {
      std::size_t used = 0;
      const std::string t(text::trim(row.substr(0, comma)));
      const std::string v(text::trim(row.substr(comma + 1)));
      SeriesPoint p{std::stod(t, &used), 0.0};
      if (used != t.size()) throw std::invalid_argument("time");
      p.value = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument("value");
      out.push_back(p);
    } catch (const std::exception&) {
      throw Error(ErrorKind::SchemaViolation, "line " + std::to_string(lineno) + ": not numeric");
    }
  }
  if (!header) throw Error(ErrorKind::SchemaViolation, "missing header 'time_months,value'");
  return out;
}

std::string render(const TrendFeatures& f) {
  std::string out = "month | value | fill | moving_avg | slope";
  for (const auto& [d, _] : f.rate_of_change) out += " | roc_d" + std::to_string(d);
  out += "\n";
  for (std::size_t m = 0; m < f.aligned.size(); ++m) {
    out += std::to_string(m) + " | " + fmt(f.aligned[m]) + " | " + std::string(fill_name(f.fill[m])) + " | " +
           fmt(f.moving_average[m]) + " | " + fmt(f.slope[m]);
    for (const auto& [d, roc] : f.rate_of_change) out += " | " + fmt(roc[m]);
    out += "\n";
  }
  return out;
}

std::string LongitudinalAgent::invoke(std::string_view payload, const InvocationContext&) {
  const auto body = text::trim(payload);
  TrendParams params = defaults_;
  std::vector<SeriesPoint> series;
  if (!body.empty() && body.front() == '{') {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::SchemaViolation, std::string("payload is not valid JSON: ") + e.what());
    }
    try {
      if (j.contains("window")) params.window = j.at("window").get<std::size_t>();
      if (j.contains("deltas")) params.deltas = j.at("deltas").get<std::vector<int>>();
      if (j.contains("points")) {
        for (const auto& p : j.at("points")) series.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      } else if (j.contains("file")) {
        const auto name = j.at("file").get<std::string>();
        const std::filesystem::path rel(name);
        if (rel.is_absolute() || name.find("..") != std::string::npos) {
          throw Error(ErrorKind::InvalidArgument, "series file must be a relative path inside the data directory");
        }
        std::ifstream in(data_dir_ / rel);
        if (!in) throw Error(ErrorKind::Io, "cannot read series file '" + name + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        series = parse_csv(ss.str());
      } else {
        throw Error(ErrorKind::SchemaViolation, "payload needs \"points\" or \"file\"");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::SchemaViolation, std::string("bad payload: ") + e.what());
    }
  } else {
    series = parse_csv(body);
  }
  return render(features(series, params));
}

}  // namespace orchestra::longitudinal
