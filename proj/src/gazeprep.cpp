#include "ocufuse/gazeprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ocufuse/error.hpp"
#include "ocufuse/logging.hpp"

namespace ocufuse::gazeprep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Solves the small dense system G x = b in place. Partial pivoting; G is the
// (order+1)^2 Gram matrix of the polynomial basis, never larger than ~8x8.
std::vector<double> solve_dense(std::vector<std::vector<double>> g, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(g[r][col]) > std::fabs(g[pivot][col])) pivot = r;
    }
    if (g[pivot][col] == 0.0) throw statistics_error("singular normal equations");
    std::swap(g[col], g[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = g[r][col] / g[col][col];
      for (std::size_t c = col; c < n; ++c) g[r][c] -= f * g[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= g[i][c] * x[c];
    x[i] = s / g[i][i];
  }
  return x;
}

std::vector<double> differentiate_channel(const std::vector<double>& y,
                                          const std::vector<double>& coeffs, double rate_hz) {
  const std::size_t n = y.size();
  const std::size_t w = coeffs.size();
  std::vector<double> v(n, kNaN);
  if (n < w) return v;
  const std::size_t half = (w - 1) / 2;
  for (std::size_t k = half; k + half < n; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      acc += coeffs[j] * y[k + j - half];  // NaN inputs poison the sum
    }
    v[k] = acc * rate_hz;
  }
  return v;
}

}  // namespace

std::vector<double> sg_derivative_coeffs(int window_len, int poly_order) {
  if (window_len < 1 || window_len % 2 == 0) {
    throw argument_error("window length must be odd and positive, got " +
                         std::to_string(window_len));
  }
  if (poly_order < 1 || poly_order >= window_len) {
    throw argument_error("polynomial order must be in [1, window), got " +
                         std::to_string(poly_order));
  }

  const int half = (window_len - 1) / 2;
  const std::size_t terms = static_cast<std::size_t>(poly_order) + 1;

  // Gram matrix G_ab = sum_j t_j^(a+b) over centered offsets t_j.
  std::vector<std::vector<double>> gram(terms, std::vector<double>(terms, 0.0));
  for (int t = -half; t <= half; ++t) {
    double pow_a = 1.0;
    for (std::size_t a = 0; a < terms; ++a) {
      double pow_b = pow_a;
      for (std::size_t b = 0; b < terms; ++b) {
        gram[a][b] += pow_b;
        pow_b *= t;
      }
      pow_a *= t;
    }
  }

  // The filter weight at offset t_j is the first-derivative row of the
  // least-squares projector: w_j = sum_a m_a t_j^a with G m = e_1.
  std::vector<double> rhs(terms, 0.0);
  rhs[1] = 1.0;
  const std::vector<double> m = solve_dense(std::move(gram), std::move(rhs));

  std::vector<double> coeffs(static_cast<std::size_t>(window_len), 0.0);
  for (int t = -half; t <= half; ++t) {
    double acc = 0.0;
    double p = 1.0;
    for (std::size_t a = 0; a < terms; ++a) {
      acc += m[a] * p;
      p *= t;
    }
    coeffs[static_cast<std::size_t>(t + half)] = acc;
  }
  return coeffs;
}

VelocitySeries differentiate(const GazeRecording& rec) {
  if (rec.horizontal_deg.size() != rec.vertical_deg.size()) {
    throw argument_error("recording channels differ in length");
  }
  if (rec.horizontal_deg.empty()) throw argument_error("empty recording");
  if (rec.sample_rate_hz <= 0.0) throw argument_error("sample rate must be positive");

  static const std::vector<double> coeffs = sg_derivative_coeffs(7, 2);

  VelocitySeries out;
  out.horizontal = differentiate_channel(rec.horizontal_deg, coeffs, rec.sample_rate_hz);
  out.vertical = differentiate_channel(rec.vertical_deg, coeffs, rec.sample_rate_hz);
  if (rec.horizontal_deg.size() < coeffs.size()) {
    out.too_short = true;
    log_warn("recording (" + rec.subject + ", " + rec.session + ") shorter than the " +
             std::to_string(coeffs.size()) + "-sample differentiation window; velocities are NaN");
  }
  return out;
}

VelocitySeries clamp_velocities(VelocitySeries series, double limit) {
  if (limit <= 0.0) throw argument_error("clamp limit must be positive");
  for (auto* channel : {&series.horizontal, &series.vertical}) {
    for (double& v : *channel) {
      if (std::isnan(v)) continue;
      v = std::max(-limit, std::min(limit, v));
    }
  }
  return series;
}

std::vector<VelocityWindow> segment_windows(const VelocitySeries& series,
                                            std::size_t window_samples) {
  if (window_samples < 1) throw argument_error("window_samples must be >= 1");
  const std::size_t n_windows = series.size() / window_samples;
  std::vector<VelocityWindow> out;
  out.reserve(n_windows);
  for (std::size_t w = 0; w < n_windows; ++w) {
    VelocityWindow win;
    win.window_index = w;
    win.samples.reserve(window_samples);
    for (std::size_t i = 0; i < window_samples; ++i) {
      const std::size_t k = w * window_samples + i;
      win.samples.push_back({series.horizontal[k], series.vertical[k]});
    }
    out.push_back(std::move(win));
  }
  return out;
}

StandardizationStats fit_standardization(const std::vector<VelocityWindow>& train_windows) {
  std::array<double, 2> sum{0.0, 0.0};
  std::array<double, 2> sum_sq{0.0, 0.0};
  std::array<std::size_t, 2> count{0, 0};
  for (const auto& win : train_windows) {
    for (const auto& row : win.samples) {
      for (int c = 0; c < 2; ++c) {
        if (std::isnan(row[static_cast<std::size_t>(c)])) continue;
        const double v = row[static_cast<std::size_t>(c)];
        sum[static_cast<std::size_t>(c)] += v;
        sum_sq[static_cast<std::size_t>(c)] += v * v;
        ++count[static_cast<std::size_t>(c)];
      }
    }
  }
  StandardizationStats stats;
  for (std::size_t c = 0; c < 2; ++c) {
    if (count[c] < 2) {
      throw statistics_error("channel " + std::to_string(c) +
                             " has fewer than 2 non-NaN samples");
    }
    const double mean = sum[c] / static_cast<double>(count[c]);
    const double var = sum_sq[c] / static_cast<double>(count[c]) - mean * mean;
    if (var <= 0.0) {
      throw statistics_error("channel " + std::to_string(c) + " has zero variance");
    }
    stats.mean[c] = mean;
    stats.stddev[c] = std::sqrt(var);
  }
  return stats;
}

std::vector<VelocityWindow> apply_standardization(std::vector<VelocityWindow> windows,
                                                  const StandardizationStats& stats) {
  if (stats.stddev[0] <= 0.0 || stats.stddev[1] <= 0.0) {
    throw argument_error("standardization stats must have positive stddev");
  }
  for (auto& win : windows) {
    for (auto& row : win.samples) {
      for (std::size_t c = 0; c < 2; ++c) {
        row[c] = (row[c] - stats.mean[c]) / stats.stddev[c];
      }
    }
  }
  return windows;
}

std::vector<VelocityWindow> replace_nan(std::vector<VelocityWindow> windows) {
  for (auto& win : windows) {
    for (auto& row : win.samples) {
      for (std::size_t c = 0; c < 2; ++c) {
        if (std::isnan(row[c])) row[c] = 0.0;
      }
    }
  }
  return windows;
}

std::vector<VelocityWindow> preprocess_recording(const GazeRecording& rec,
                                                 const StandardizationStats& stats,
                                                 std::size_t window_samples, double clamp_limit) {
  auto velocities = clamp_velocities(differentiate(rec), clamp_limit);
  auto windows = segment_windows(velocities, window_samples);
  return replace_nan(apply_standardization(std::move(windows), stats));
}

std::vector<double> flatten_window(const VelocityWindow& window) {
  std::vector<double> out;
  out.reserve(window.samples.size() * 2);
  for (const auto& row : window.samples) out.push_back(row[0]);
  for (const auto& row : window.samples) out.push_back(row[1]);
  return out;
}

GazeRecording load_gaze_csv(const std::filesystem::path& path, const std::string& subject,
                            const std::string& session, double sample_rate_hz) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());

  GazeRecording rec;
  rec.subject = subject;
  rec.session = session;
  rec.sample_rate_hz = sample_rate_hz;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "t_s,x_deg,y_deg") {
        throw parse_error(path.string() + ":1: expected header t_s,x_deg,y_deg");
      }
      continue;
    }
    std::array<std::string, 3> fields;
    std::size_t field = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        if (field >= 3) {
          throw parse_error(path.string() + ":" + std::to_string(line_no) + ": too many fields");
        }
        fields[field++] = line.substr(start, i - start);
        start = i + 1;
      }
    }
    if (field != 3) {
      throw parse_error(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    auto parse_cell = [&](const std::string& cell) -> double {
      if (cell.empty()) return kNaN;
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
      } catch (const std::exception&) {
        throw parse_error(path.string() + ":" + std::to_string(line_no) + ": bad number \"" +
                          cell + "\"");
      }
    };
    parse_cell(fields[0]);  // timestamps are validated but not stored
    rec.horizontal_deg.push_back(parse_cell(fields[1]));
    rec.vertical_deg.push_back(parse_cell(fields[2]));
  }
  if (rec.horizontal_deg.empty()) {
    throw parse_error(path.string() + ": no samples");
  }
  return rec;
}

void save_gaze_csv(const GazeRecording& rec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write " + path.string());
  out << "t_s,x_deg,y_deg\n";
  char buf[64];
  for (std::size_t i = 0; i < rec.horizontal_deg.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(i) / rec.sample_rate_hz);
    out << buf << ',';
    auto write_cell = [&](double v) {
      if (std::isnan(v)) return;
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf;
    };
    write_cell(rec.horizontal_deg[i]);
    out << ',';
    write_cell(rec.vertical_deg[i]);
    out << '\n';
  }
  if (!out) throw io_error("write failed for " + path.string());
}

}  // namespace ocufuse::gazeprep
