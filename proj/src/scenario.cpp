#include "gtmr/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "gtmr/dynamics.hpp"

namespace gtmr {

Scenario::Scenario() {
  gtmr = GtmrParams::tilted_hexa();
  weights = OcpWeights::defaults(6, 3);
  optics.tx_rotation_body = rotation_matrix(tx_rotation_euler);

  // Square UGV loop, one counter-clockwise lap over the mission.
  const double lap = 26.0;
  ugv_path = {
      {{-3, -3, 0}, 0.0},        {{3, -3, 0}, lap * 0.25},
      {{3, 3, 0}, lap * 0.5},    {{-3, 3, 0}, lap * 0.75},
      {{-3, -3, 0}, lap},
  };

  obstacles = {
      {{1.5, -3, 0.75}, {1.5, -3, 0.75}, 0, 0, 0.25},
      {{5, 1, 2}, {2, -1, 0.5}, 6, 10, 0.25},
      {{-2, 1.5, 0.5}, {0, -3, 2}, 18, 21, 0.25},
  };
}

ExtendedState Scenario::initial_state() const {
  ExtendedState x;
  x.body.position = mrav_initial_position;
  x.rotor_speeds = VecX::Constant(
      gtmr.n_rotors,
      std::clamp(hover_speed(gtmr), gtmr.speed_min, gtmr.speed_max));
  return x;
}

void Scenario::validate() const {
  if (schema_version != 1)
    throw ConfigError("schema_version: unsupported version");
  if (duration < 0) throw ConfigError("scenario.duration: must be >= 0");
  if (safety_margin < 0)
    throw ConfigError("scenario.safety_margin: must be >= 0");
  if (horizon_steps < 1) throw ConfigError("horizon.steps: must be >= 1");
  if (horizon_step <= 0) throw ConfigError("horizon.step: must be > 0");
  if (reference_hz <= 0 || control_hz <= 0 || plant_hz <= 0)
    throw ConfigError("rates: all rates must be positive");
  auto integer_multiple = [](double hi, double lo) {
    const double ratio = hi / lo;
    return ratio >= 1.0 - 1e-9 && std::abs(ratio - std::round(ratio)) < 1e-9;
  };
  if (!integer_multiple(plant_hz, control_hz))
    throw ConfigError("rates.plant_hz: must be an integer multiple of control_hz");
  if (!integer_multiple(plant_hz, reference_hz))
    throw ConfigError(
        "rates.plant_hz: must be an integer multiple of reference_hz");
  if (ugv_path.empty()) throw ConfigError("ugv.waypoints: path must be nonempty");
  for (size_t i = 0; i + 1 < ugv_path.size(); ++i)
    if (!(ugv_path[i].time < ugv_path[i + 1].time))
      throw ConfigError("ugv.waypoint times must be strictly increasing");
  if (ugv_path.front().time != 0)
    throw ConfigError("ugv.waypoint1: path must start at time 0");
  for (size_t j = 0; j < obstacles.size(); ++j) {
    const auto& o = obstacles[j];
    if (o.radius <= 0)
      throw ConfigError("obstacle" + std::to_string(j + 1) +
                        ".radius: obstacle radius must be positive");
    if (o.t_start > o.t_end)
      throw ConfigError("obstacle" + std::to_string(j + 1) +
                        ".window: must have t_start <= t_end");
  }
  if (rx_lag < 0) throw ConfigError("optics.rx_lag: must be >= 0");
  try {
    gtmr.validate();
    optics.validate();
    weights.validate(gtmr.n_rotors, static_cast<int>(obstacles.size()));
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
}

namespace {

struct KeyValue {
  std::string key, value;
  int line;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<KeyValue> tokenize(const std::string& text, int line_base) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  std::string line;
  int lineno = line_base;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    out.push_back({trim(t.substr(0, eq)), trim(t.substr(eq + 1)), lineno});
  }
  return out;
}

std::vector<double> parse_numbers(const KeyValue& kv, size_t expected) {
  std::istringstream in(kv.value);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  if (!in.eof() || (expected > 0 && v.size() != expected))
    throw ConfigError("line " + std::to_string(kv.line) + ": key '" + kv.key +
                      "' expects " + std::to_string(expected) +
                      " numeric value(s)");
  return v;
}

double parse_scalar(const KeyValue& kv) { return parse_numbers(kv, 1)[0]; }

Vec3 parse_vec3(const KeyValue& kv) {
  const auto v = parse_numbers(kv, 3);
  return Vec3(v[0], v[1], v[2]);
}

VecX to_vecx(const std::vector<double>& v) {
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Index of an "obstacleN.field" or "ugv.waypointN" style key; 0 if the
// prefix does not match.
int indexed_key(const std::string& key, const std::string& prefix,
                std::string& field) {
  if (key.rfind(prefix, 0) != 0) return 0;
  size_t pos = prefix.size();
  size_t digits = 0;
  while (pos + digits < key.size() && std::isdigit(key[pos + digits])) ++digits;
  if (digits == 0) return 0;
  const int idx = std::stoi(key.substr(pos, digits));
  field = key.substr(pos + digits);
  return idx;
}

void resize_rotor_arrays(Scenario& s, int n) {
  s.gtmr.n_rotors = n;
  const double alpha =
      s.gtmr.tilt_alpha.empty() ? 0.0 : std::abs(s.gtmr.tilt_alpha[0]);
  s.gtmr.tilt_alpha.resize(n);
  s.gtmr.tilt_beta.assign(n, 0.0);
  s.gtmr.spin_dir.resize(n);
  for (int i = 0; i < n; ++i) {
    s.gtmr.spin_dir[i] = (i % 2 == 0) ? 1.0 : -1.0;
    s.gtmr.tilt_alpha[i] = s.gtmr.spin_dir[i] * alpha;
  }
  s.weights.rate_weights = VecX::Constant(n, 1e-5);
}

void apply_key(Scenario& s, const KeyValue& kv) {
  const std::string& k = kv.key;
  if (k == "schema_version") {
    s.schema_version = static_cast<int>(parse_scalar(kv));
  } else if (k == "scenario.duration") {
    s.duration = parse_scalar(kv);
  } else if (k == "scenario.workspace") {
    s.workspace = parse_vec3(kv);
  } else if (k == "scenario.mrav_initial_position") {
    s.mrav_initial_position = parse_vec3(kv);
  } else if (k == "scenario.mrav_ref_offset") {
    s.mrav_ref_offset = parse_vec3(kv);
  } else if (k == "scenario.safety_margin") {
    s.safety_margin = parse_scalar(kv);
  } else if (k == "rates.reference_hz") {
    s.reference_hz = parse_scalar(kv);
  } else if (k == "rates.control_hz") {
    s.control_hz = parse_scalar(kv);
  } else if (k == "rates.plant_hz") {
    s.plant_hz = parse_scalar(kv);
  } else if (k == "horizon.steps") {
    s.horizon_steps = static_cast<int>(parse_scalar(kv));
  } else if (k == "horizon.step") {
    s.horizon_step = parse_scalar(kv);
  } else if (k == "gtmr.n_rotors") {
    // handled in the sizing pass; accept silently here
  } else if (k == "gtmr.mass") {
    s.gtmr.mass = parse_scalar(kv);
  } else if (k == "gtmr.gravity") {
    s.gtmr.gravity = parse_scalar(kv);
  } else if (k == "gtmr.inertia") {
    s.gtmr.inertia_diag = parse_vec3(kv);
  } else if (k == "gtmr.thrust_coeff") {
    s.gtmr.thrust_coeff = parse_scalar(kv);
  } else if (k == "gtmr.torque_coeff") {
    s.gtmr.torque_coeff = parse_scalar(kv);
  } else if (k == "gtmr.arm_length") {
    s.gtmr.arm_length = parse_scalar(kv);
  } else if (k == "gtmr.tilt_alpha") {
    const auto v = parse_numbers(kv, s.gtmr.n_rotors);
    s.gtmr.tilt_alpha = v;
  } else if (k == "gtmr.tilt_beta") {
    s.gtmr.tilt_beta = parse_numbers(kv, s.gtmr.n_rotors);
  } else if (k == "gtmr.spin_dir") {
    s.gtmr.spin_dir = parse_numbers(kv, s.gtmr.n_rotors);
  } else if (k == "gtmr.speed_min") {
    s.gtmr.speed_min = parse_scalar(kv);
  } else if (k == "gtmr.speed_max") {
    s.gtmr.speed_max = parse_scalar(kv);
  } else if (k == "gtmr.accel_min") {
    s.gtmr.accel_min = parse_scalar(kv);
  } else if (k == "gtmr.accel_max") {
    s.gtmr.accel_max = parse_scalar(kv);
  } else if (k == "optics.cone_cos_threshold") {
    s.optics.cone_cos_threshold = parse_scalar(kv);
  } else if (k == "optics.tx_half_power") {
    s.optics.tx_half_power = parse_scalar(kv);
  } else if (k == "optics.rx_fov") {
    s.optics.rx_fov = parse_scalar(kv);
  } else if (k == "optics.range_min") {
    s.optics.range_min = parse_scalar(kv);
  } else if (k == "optics.range_max") {
    s.optics.range_max = parse_scalar(kv);
  } else if (k == "optics.desired_range") {
    s.optics.desired_range = parse_scalar(kv);
  } else if (k == "optics.tx_offset") {
    s.optics.tx_offset_body = parse_vec3(kv);
  } else if (k == "optics.tx_rotation_euler") {
    s.tx_rotation_euler = parse_vec3(kv);
    s.optics.tx_rotation_body = rotation_matrix(s.tx_rotation_euler);
  } else if (k == "optics.rx_window") {
    s.optics.rx_window = parse_scalar(kv);
  } else if (k == "optics.rx_lag") {
    s.rx_lag = parse_scalar(kv);
  } else if (k == "weights.output") {
    s.weights.output_weights = to_vecx(parse_numbers(kv, OutputVector::kSize));
  } else if (k == "weights.rate") {
    s.weights.rate_weights = to_vecx(parse_numbers(kv, s.gtmr.n_rotors));
  } else if (k == "weights.slack") {
    s.weights.slack_weights = to_vecx(parse_numbers(kv, s.obstacles.size()));
  } else if (k == "ugv.waypoints" || k == "obstacles.count") {
    // handled in the sizing pass
  } else {
    std::string field;
    int idx = indexed_key(k, "ugv.waypoint", field);
    if (idx > 0 && field.empty()) {
      if (idx > static_cast<int>(s.ugv_path.size()))
        throw ConfigError("line " + std::to_string(kv.line) + ": key '" + k +
                          "' exceeds ugv.waypoints");
      const auto v = parse_numbers(kv, 4);
      s.ugv_path[idx - 1] = {Vec3(v[0], v[1], v[2]), v[3]};
      return;
    }
    idx = indexed_key(k, "obstacle", field);
    if (idx > 0) {
      if (idx > static_cast<int>(s.obstacles.size()))
        throw ConfigError("line " + std::to_string(kv.line) + ": key '" + k +
                          "' exceeds obstacles.count");
      Obstacle& o = s.obstacles[idx - 1];
      if (field == ".start") {
        o.start_pos = parse_vec3(kv);
      } else if (field == ".end") {
        o.end_pos = parse_vec3(kv);
      } else if (field == ".window") {
        const auto v = parse_numbers(kv, 2);
        o.t_start = v[0];
        o.t_end = v[1];
      } else if (field == ".radius") {
        o.radius = parse_scalar(kv);
      } else {
        throw ConfigError("line " + std::to_string(kv.line) +
                          ": unknown key '" + k + "'");
      }
      return;
    }
    throw ConfigError("line " + std::to_string(kv.line) + ": unknown key '" +
                      k + "'");
  }
}

}  // namespace

Scenario load_scenario(const std::string& text,
                       const std::vector<std::string>& overrides) {
  Scenario s;
  std::vector<KeyValue> kvs = tokenize(text, 0);
  for (const auto& ov : overrides) {
    auto extra = tokenize(ov, 0);
    kvs.insert(kvs.end(), extra.begin(), extra.end());
  }
  // Sizing keys first so dependent arrays have their final lengths.
  for (const auto& kv : kvs) {
    if (kv.key == "gtmr.n_rotors") {
      const int n = static_cast<int>(parse_scalar(kv));
      if (n < 1)
        throw ConfigError("gtmr.n_rotors: must be >= 1");
      resize_rotor_arrays(s, n);
    } else if (kv.key == "obstacles.count") {
      const int n = static_cast<int>(parse_scalar(kv));
      if (n < 0) throw ConfigError("obstacles.count: must be >= 0");
      s.obstacles.resize(n);
      s.weights.slack_weights = VecX::Constant(n, 1e4);
    } else if (kv.key == "ugv.waypoints") {
      const int n = static_cast<int>(parse_scalar(kv));
      if (n < 1) throw ConfigError("ugv.waypoints: must be >= 1");
      s.ugv_path.resize(n);
    }
  }
  for (const auto& kv : kvs) apply_key(s, kv);
  s.validate();
  return s;
}

std::string serialize_scenario(const Scenario& s) {
  std::ostringstream out;
  out << std::setprecision(17);
  auto vec = [&](const Vec3& v) {
    out << v.x() << " " << v.y() << " " << v.z();
  };
  auto list = [&](const auto& v) {
    for (size_t i = 0; i < static_cast<size_t>(v.size()); ++i)
      out << (i ? " " : "") << v[i];
  };
  out << "schema_version = " << s.schema_version << "\n";
  out << "scenario.duration = " << s.duration << "\n";
  out << "scenario.workspace = ";
  vec(s.workspace);
  out << "\nscenario.mrav_initial_position = ";
  vec(s.mrav_initial_position);
  out << "\nscenario.mrav_ref_offset = ";
  vec(s.mrav_ref_offset);
  out << "\nscenario.safety_margin = " << s.safety_margin << "\n";
  out << "rates.reference_hz = " << s.reference_hz << "\n";
  out << "rates.control_hz = " << s.control_hz << "\n";
  out << "rates.plant_hz = " << s.plant_hz << "\n";
  out << "horizon.steps = " << s.horizon_steps << "\n";
  out << "horizon.step = " << s.horizon_step << "\n";
  out << "gtmr.n_rotors = " << s.gtmr.n_rotors << "\n";
  out << "gtmr.mass = " << s.gtmr.mass << "\n";
  out << "gtmr.gravity = " << s.gtmr.gravity << "\n";
  out << "gtmr.inertia = ";
  vec(s.gtmr.inertia_diag);
  out << "\ngtmr.thrust_coeff = " << s.gtmr.thrust_coeff << "\n";
  out << "gtmr.torque_coeff = " << s.gtmr.torque_coeff << "\n";
  out << "gtmr.arm_length = " << s.gtmr.arm_length << "\n";
  out << "gtmr.tilt_alpha = ";
  list(s.gtmr.tilt_alpha);
  out << "\ngtmr.tilt_beta = ";
  list(s.gtmr.tilt_beta);
  out << "\ngtmr.spin_dir = ";
  list(s.gtmr.spin_dir);
  out << "\ngtmr.speed_min = " << s.gtmr.speed_min << "\n";
  out << "gtmr.speed_max = " << s.gtmr.speed_max << "\n";
  out << "gtmr.accel_min = " << s.gtmr.accel_min << "\n";
  out << "gtmr.accel_max = " << s.gtmr.accel_max << "\n";
  out << "optics.cone_cos_threshold = " << s.optics.cone_cos_threshold << "\n";
  out << "optics.tx_half_power = " << s.optics.tx_half_power << "\n";
  out << "optics.rx_fov = " << s.optics.rx_fov << "\n";
  out << "optics.range_min = " << s.optics.range_min << "\n";
  out << "optics.range_max = " << s.optics.range_max << "\n";
  out << "optics.desired_range = " << s.optics.desired_range << "\n";
  out << "optics.tx_offset = ";
  vec(s.optics.tx_offset_body);
  out << "\noptics.tx_rotation_euler = ";
  vec(s.tx_rotation_euler);
  out << "\noptics.rx_window = " << s.optics.rx_window << "\n";
  out << "optics.rx_lag = " << s.rx_lag << "\n";
  out << "weights.output = ";
  list(s.weights.output_weights);
  out << "\nweights.rate = ";
  list(s.weights.rate_weights);
  out << "\nweights.slack = ";
  list(s.weights.slack_weights);
  out << "\nugv.waypoints = " << s.ugv_path.size() << "\n";
  for (size_t i = 0; i < s.ugv_path.size(); ++i) {
    out << "ugv.waypoint" << i + 1 << " = ";
    vec(s.ugv_path[i].position);
    out << " " << s.ugv_path[i].time << "\n";
  }
  out << "obstacles.count = " << s.obstacles.size() << "\n";
  for (size_t j = 0; j < s.obstacles.size(); ++j) {
    const auto& o = s.obstacles[j];
    out << "obstacle" << j + 1 << ".start = ";
    vec(o.start_pos);
    out << "\nobstacle" << j + 1 << ".end = ";
    vec(o.end_pos);
    out << "\nobstacle" << j + 1 << ".window = " << o.t_start << " " << o.t_end
        << "\n";
    out << "obstacle" << j + 1 << ".radius = " << o.radius << "\n";
  }
  return out.str();
}

void ugv_state(double t, const Scenario& s, Vec3& pos, Vec3& vel) {
  if (t < 0 || t > s.duration + 1e-9)
    throw ModelError("ugv_state: time out of range");
  const auto& path = s.ugv_path;
  if (t >= path.back().time) {
    pos = path.back().position;
    if (path.size() >= 2 && t <= path.back().time + 1e-12) {
      const auto& a = path[path.size() - 2];
      const auto& b = path.back();
      vel = (b.position - a.position) / (b.time - a.time);
    } else {
      vel = Vec3::Zero();
    }
    return;
  }
  size_t i = 0;
  while (i + 2 < path.size() && t >= path[i + 1].time) ++i;
  const auto& a = path[i];
  const auto& b = path[i + 1];
  const double frac = (t - a.time) / (b.time - a.time);
  pos = a.position + frac * (b.position - a.position);
  vel = (b.position - a.position) / (b.time - a.time);
}

OutputVector mrav_reference(double t, const Scenario& s) {
  Vec3 ugv_pos, ugv_vel;
  ugv_state(std::clamp(t, 0.0, s.duration), s, ugv_pos, ugv_vel);
  OutputVector y;
  // The hover point places the transmitter, not the body origin, above the
  // receiver: with the body-frame antenna offset compensated (at the nominal
  // zero yaw), a level attitude at the reference yields perfect alignment,
  // so the cost has no incentive to trade position against tilt in cruise.
  const Vec3 tx_xy(s.optics.tx_offset_body.x(), s.optics.tx_offset_body.y(),
                   0.0);
  y.position = ugv_pos + s.mrav_ref_offset - tx_xy;
  y.velocity = ugv_vel;
  y.acceleration = Vec3::Zero();
  y.cos_delta = 1.0;
  y.cos_delta_rate = 0.0;
  y.range = s.optics.desired_range;
  return y;
}

Vec3 obstacle_position(int j, double t, const Scenario& s) {
  if (j < 1 || j > static_cast<int>(s.obstacles.size()))
    throw ModelError("obstacle_position: index out of range");
  const Obstacle& o = s.obstacles[j - 1];
  if (t <= o.t_start || o.t_end <= o.t_start) return o.start_pos;
  if (t >= o.t_end) return o.end_pos;
  const double frac = (t - o.t_start) / (o.t_end - o.t_start);
  return o.start_pos + frac * (o.end_pos - o.start_pos);
}

Vec3 receiver_axis(const Vec3& rx_pos, const Vec3& transmitter_pos,
                   const Vec3& prev_axis, double dt, double lag_tau) {
  const Vec3 d = transmitter_pos - rx_pos;
  const double range = d.norm();
  if (range <= kDegenerateRange)
    throw ModelError("receiver_axis: degenerate separation");
  const Vec3 target = d / range;
  if (lag_tau <= 0) return target;
  const Vec3 prev = prev_axis.normalized();
  const double cos_ang = std::clamp(prev.dot(target), -1.0, 1.0);
  const double ang = std::acos(cos_ang);
  if (ang < 1e-12) return target;
  // Slew toward the target so the angular error decays as exp(-dt/tau).
  const double step = ang * (1.0 - std::exp(-dt / lag_tau));
  Vec3 axis = prev.cross(target);
  if (axis.norm() < 1e-12)
    axis = prev.unitOrthogonal();
  else
    axis.normalize();
  return prev * std::cos(step) + axis.cross(prev) * std::sin(step);
}

StageData stage_data_at(double t, const Scenario& s) {
  StageData sd;
  const double tc = std::clamp(t, 0.0, s.duration);
  Vec3 ugv_pos, ugv_vel;
  ugv_state(tc, s, ugv_pos, ugv_vel);
  sd.rx_pos = ugv_pos;
  sd.rx_vel = ugv_vel;
  sd.reference = mrav_reference(tc, s);
  sd.obstacle_centers.reserve(s.obstacles.size());
  sd.obstacle_radii.reserve(s.obstacles.size());
  for (size_t j = 0; j < s.obstacles.size(); ++j) {
    sd.obstacle_centers.push_back(
        obstacle_position(static_cast<int>(j) + 1, tc, s));
    sd.obstacle_radii.push_back(s.obstacles[j].radius);
  }
  return sd;
}

}  // namespace gtmr
