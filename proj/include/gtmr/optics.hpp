#pragma once

#include <vector>

#include "gtmr/types.hpp"

namespace gtmr {

/// Transceiver geometry and link-quality parameters.
struct OpticalParams {
  double cone_cos_threshold = 0.17;      // NMPC alignment constraint on cos(delta)
  double tx_half_power = 10.0 * M_PI / 180.0;  // rad, transmitter main lobe
  double rx_fov = 89.0 * M_PI / 180.0;   // rad, receiver acceptance cone
  double range_min = 0.25;               // m
  double range_max = 1.4;                // m
  double desired_range = 1.0;            // m
  Vec3 tx_offset_body{0.1, 0.0, 0.0};    // m, transmitter position in body frame
  Mat3 tx_rotation_body = Mat3::Identity();  // beam axis = tx_rotation_body * e3
  double rx_window = 26.0;               // s, link-quality averaging window

  void validate() const;
};

/// One time-stamped connectivity record.
struct LinkSample {
  double time = 0;
  double cos_delta = 0;
  double cos_delta_rate = 0;
  double range = 0;
  int i_tx = 0;
  int i_rx = 0;
  int i_link = 0;
};

// Below this separation the link direction is undefined.
inline constexpr double kDegenerateRange = 1e-9;

/// Relative position from receiver to the given point, p - p_r.
Vec3 link_vector(const Vec3& pos, const Vec3& rx_pos);

/// World-frame beam direction (unit) of the body-fixed transmitter.
Vec3 beam_axis_world(const ExtendedState& x, const OpticalParams& params);

/// World-frame transmitter position, p + R(eta) * tx_offset_body.
Vec3 transmitter_position(const ExtendedState& x, const OpticalParams& params);

/// cos(delta) = z_T . (-d_c) / |d_c|, clamped to [-1, 1].
double misalignment_cosine(const Vec3& beam_axis, const Vec3& d_c);

/// Analytic time derivative of misalignment_cosine along the current motion,
/// with d_c taken from the transmitter position.
double misalignment_rate(const ExtendedState& x, const Vec3& rx_pos,
                         const Vec3& rx_vel, const OpticalParams& params);

int tx_indicator(double cos_delta, const OpticalParams& params);
int rx_indicator(const Vec3& rx_axis, const Vec3& d_c,
                 const OpticalParams& params);
int link_indicator(int i_tx, int i_rx, double range,
                   const OpticalParams& params);

/// Windowed mean of i_link over [t_now - window, t_now] under zero-order
/// hold; partial histories normalize by the covered duration.
double moving_average(const std::vector<LinkSample>& history, double t_now,
                      double window);

}  // namespace gtmr
