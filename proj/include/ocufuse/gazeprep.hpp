#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace ocufuse::gazeprep {

// Raw gaze angles in degrees, two channels of equal length. Entries may be
// NaN where the tracker lost the eye.
struct GazeRecording {
  std::string subject;
  std::string session;
  double sample_rate_hz = 72.0;
  std::vector<double> horizontal_deg;
  std::vector<double> vertical_deg;
};

// Velocities in deg/s. too_short is set when the recording could not fill a
// single differentiation window and the output is all-NaN.
struct VelocitySeries {
  std::vector<double> horizontal;
  std::vector<double> vertical;
  bool too_short = false;

  std::size_t size() const { return horizontal.size(); }
};

// One non-overlapping velocity window; samples[row] = {horizontal, vertical}.
struct VelocityWindow {
  std::size_t window_index = 0;
  std::vector<std::array<double, 2>> samples;
};

// Per-channel mean and standard deviation, fitted on training windows.
struct StandardizationStats {
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> stddev{1.0, 1.0};
};

// Centered Savitzky-Golay first-derivative coefficients in units of
// per-sample. Antisymmetric about the center; exact on polynomials of degree
// <= poly_order. window_len must be odd and poly_order < window_len.
std::vector<double> sg_derivative_coeffs(int window_len, int poly_order);

// Two velocity channels from a recording: SG(7,2) derivative scaled by the
// sample rate. The first and last 3 samples have no full centered window and
// are NaN; NaN inputs propagate to every window containing them.
VelocitySeries differentiate(const GazeRecording& rec);

VelocitySeries clamp_velocities(VelocitySeries series, double limit = 1000.0);

// Consecutive non-overlapping windows in temporal order; the trailing partial
// window is discarded.
std::vector<VelocityWindow> segment_windows(const VelocitySeries& series,
                                            std::size_t window_samples = 360);

// Per-channel mean/std over all non-NaN entries of the training windows.
// Population (divide-by-N) convention.
StandardizationStats fit_standardization(const std::vector<VelocityWindow>& train_windows);

std::vector<VelocityWindow> apply_standardization(std::vector<VelocityWindow> windows,
                                                  const StandardizationStats& stats);

std::vector<VelocityWindow> replace_nan(std::vector<VelocityWindow> windows);

// Full pipeline for one recording: differentiate, clamp, segment,
// standardize, zero-fill NaN — in exactly that order.
std::vector<VelocityWindow> preprocess_recording(const GazeRecording& rec,
                                                 const StandardizationStats& stats,
                                                 std::size_t window_samples = 360,
                                                 double clamp_limit = 1000.0);

// Channel-major flattening [h_0..h_{n-1}, v_0..v_{n-1}] for encoder input.
std::vector<double> flatten_window(const VelocityWindow& window);

// CSV with header t_s,x_deg,y_deg; empty cells parse as NaN. Subject and
// session ids are not part of the file and are supplied by the caller.
GazeRecording load_gaze_csv(const std::filesystem::path& path, const std::string& subject,
                            const std::string& session, double sample_rate_hz = 72.0);

void save_gaze_csv(const GazeRecording& rec, const std::filesystem::path& path);

}  // namespace ocufuse::gazeprep
