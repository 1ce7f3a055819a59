#include "gtmr/optics.hpp"

#include <algorithm>
#include <cmath>

#include "gtmr/dynamics.hpp"

namespace gtmr {

void OpticalParams::validate() const {
  if (!(0 < range_min && range_min < range_max))
    throw ModelError("OpticalParams: need 0 < range_min < range_max");
  if (!(0 < cone_cos_threshold && cone_cos_threshold < 1))
    throw ModelError("OpticalParams: cone_cos_threshold must be in (0,1)");
  if (!(0 < tx_half_power && tx_half_power < M_PI / 2))
    throw ModelError("OpticalParams: tx_half_power must be in (0, pi/2)");
  if (!(0 < rx_fov && rx_fov < M_PI / 2))
    throw ModelError("OpticalParams: rx_fov must be in (0, pi/2)");
  if (desired_range <= 0)
    throw ModelError("OpticalParams: desired_range must be positive");
  if (rx_window <= 0)
    throw ModelError("OpticalParams: rx_window must be positive");
  if ((tx_rotation_body * tx_rotation_body.transpose() - Mat3::Identity())
          .cwiseAbs()
          .maxCoeff() > 1e-9)
    throw ModelError("OpticalParams: tx_rotation_body must be orthogonal");
}

Vec3 link_vector(const Vec3& pos, const Vec3& rx_pos) { return pos - rx_pos; }

Vec3 beam_axis_world(const ExtendedState& x, const OpticalParams& params) {
  return rotation_matrix(x.body.euler) * params.tx_rotation_body * Vec3::UnitZ();
}

Vec3 transmitter_position(const ExtendedState& x, const OpticalParams& params) {
  return x.body.position +
         rotation_matrix(x.body.euler) * params.tx_offset_body;
}

double misalignment_cosine(const Vec3& beam_axis, const Vec3& d_c) {
  const double range = d_c.norm();
  if (range <= kDegenerateRange)
    throw ModelError("misalignment_cosine: degenerate link range");
  return std::clamp(beam_axis.dot(-d_c) / range, -1.0, 1.0);
}

double misalignment_rate(const ExtendedState& x, const Vec3& rx_pos,
                         const Vec3& rx_vel, const OpticalParams& params) {
  const Mat3 rot = rotation_matrix(x.body.euler);
  const Vec3 beam_body = params.tx_rotation_body * Vec3::UnitZ();
  const Vec3 beam = rot * beam_body;
  const Vec3 d = x.body.position + rot * params.tx_offset_body - rx_pos;
  const double range = d.norm();
  if (range <= kDegenerateRange)
    throw ModelError("misalignment_rate: degenerate link range");
  const Vec3 d_hat = d / range;
  const Vec3 w = x.body.body_rates;
  const Vec3 beam_dot = rot * w.cross(beam_body);
  const Vec3 d_dot = x.body.velocity + rot * w.cross(params.tx_offset_body) -
                     rx_vel;
  // c = -beam . d_hat; d(d_hat)/dt = (I - d_hat d_hat^T) d_dot / |d|
  const Vec3 d_hat_dot = (d_dot - d_hat * d_hat.dot(d_dot)) / range;
  return -beam_dot.dot(d_hat) - beam.dot(d_hat_dot);
}

int tx_indicator(double cos_delta, const OpticalParams& params) {
  return cos_delta >= std::cos(params.tx_half_power) ? 1 : 0;
}

int rx_indicator(const Vec3& rx_axis, const Vec3& d_c,
                 const OpticalParams& params) {
  const double range = d_c.norm();
  if (range <= kDegenerateRange)
    throw ModelError("rx_indicator: degenerate link range");
  return rx_axis.dot(d_c) / range >= std::cos(params.rx_fov) ? 1 : 0;
}

int link_indicator(int i_tx, int i_rx, double range,
                   const OpticalParams& params) {
  const bool in_range = range >= params.range_min && range <= params.range_max;
  return (i_tx != 0 && i_rx != 0 && in_range) ? 1 : 0;
}

double moving_average(const std::vector<LinkSample>& history, double t_now,
                      double window) {
  if (history.empty()) throw ModelError("moving_average: empty history");
  if (window <= 0) throw ModelError("moving_average: window must be positive");
  const double t_start = std::max(t_now - window, history.front().time);
  if (t_now <= history.front().time)
    return static_cast<double>(history.front().i_link);

  double integral = 0;
  for (size_t i = 0; i < history.size(); ++i) {
    const double seg_begin = history[i].time;
    const double seg_end =
        (i + 1 < history.size()) ? history[i + 1].time : t_now;
    const double lo = std::max(seg_begin, t_start);
    const double hi = std::min(seg_end, t_now);
    if (hi > lo) integral += history[i].i_link * (hi - lo);
  }
  const double covered = t_now - t_start;
  return covered > 0 ? integral / covered
                     : static_cast<double>(history.back().i_link);
}

}  // namespace gtmr
