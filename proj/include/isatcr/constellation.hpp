#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace isatcr {

inline constexpr double kEarthRadiusKm = 6371.0;
inline constexpr double kMuEarthKm3PerS2 = 398600.4418;
inline constexpr double kEarthRotationRadPerS = 7.2921159e-5;
inline constexpr double kLightSpeedKmPerS = 299792.458;

inline double deg2rad(double d) { return d * M_PI / 180.0; }

struct ConstellationConfig {
  int plane_count = 12;
  int sats_per_plane = 24;
  double altitude_km = 500.0;
  double inclination_deg = 60.0;
  double beam_half_angle_deg = 45.0;
  double phasing_offset_deg = 0.0;  // inter-plane phase shift (Walker F, degrees)

  int total_sats() const { return plane_count * sats_per_plane; }
  double semi_major_axis_km() const { return kEarthRadiusKm + altitude_km; }
  double angular_rate_rad_s() const {
    double a = semi_major_axis_km();
    return std::sqrt(kMuEarthKm3PerS2 / (a * a * a));
  }
  double orbital_period_s() const { return 2.0 * M_PI / angular_rate_rad_s(); }

  void validate() const {
    if (plane_count < 2) throw std::invalid_argument("constellation: plane_count must be >= 2");
    if (sats_per_plane < 3) throw std::invalid_argument("constellation: sats_per_plane must be >= 3");
    if (!(inclination_deg > 0.0 && inclination_deg <= 180.0))
      throw std::invalid_argument("constellation: inclination must be in (0, 180]");
    if (!(beam_half_angle_deg > 0.0 && beam_half_angle_deg < 90.0))
      throw std::invalid_argument("constellation: beam_half_angle must be in (0, 90)");
    if (altitude_km <= 0.0) throw std::invalid_argument("constellation: altitude must be positive");
  }
};

// Grid coordinate of one satellite. flat ids are stable for a whole run.
struct SatelliteId {
  int plane = 0;
  int slot = 0;

  int flat(const ConstellationConfig& cfg) const { return plane * cfg.sats_per_plane + slot; }
  static SatelliteId from_flat(const ConstellationConfig& cfg, int flat) {
    return {flat / cfg.sats_per_plane, flat % cfg.sats_per_plane};
  }
  bool operator==(const SatelliteId&) const = default;
};

struct GroundStation {
  std::string name;
  double latitude_deg = 0.0;
  double longitude_deg = 0.0;

  void validate() const {
    if (std::abs(latitude_deg) > 90.0) throw std::invalid_argument("ground station: |latitude| must be <= 90");
    if (std::abs(longitude_deg) > 180.0) throw std::invalid_argument("ground station: |longitude| must be <= 180");
  }
};

// Earth-centered inertial position, km.
struct Position {
  double x = 0.0, y = 0.0, z = 0.0;
  double epoch_s = 0.0;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

// Circular two-body propagation. Plane p ascends at RAAN 360*p/P; slot s is
// phased 360*s/S along the orbit plus the configured inter-plane offset.
// At t=0 satellite (0,0) sits on the ascending node of plane 0.
inline Position propagate(const ConstellationConfig& cfg, SatelliteId sat, double t) {
  if (t < 0.0) throw std::invalid_argument("propagate: t must be >= 0");
  const double a = cfg.semi_major_axis_km();
  const double raan = 2.0 * M_PI * sat.plane / cfg.plane_count;
  const double inc = deg2rad(cfg.inclination_deg);
  const double phase0 =
      2.0 * M_PI * sat.slot / cfg.sats_per_plane + deg2rad(cfg.phasing_offset_deg) * sat.plane;
  const double u = cfg.angular_rate_rad_s() * t + phase0;  // argument of latitude

  const double cu = std::cos(u), su = std::sin(u);
  const double co = std::cos(raan), so = std::sin(raan);
  const double ci = std::cos(inc), si = std::sin(inc);
  return Position{a * (cu * co - su * so * ci), a * (cu * so + su * co * ci), a * su * si, t};
}

// Ground stations are Earth-fixed and rotate into the inertial frame;
// at t=0 the Greenwich meridian is aligned with the inertial x axis.
inline Position ground_position(const GroundStation& gs, double t) {
  const double lat = deg2rad(gs.latitude_deg);
  const double lon = deg2rad(gs.longitude_deg) + kEarthRotationRadPerS * t;
  return Position{kEarthRadiusKm * std::cos(lat) * std::cos(lon),
                  kEarthRadiusKm * std::cos(lat) * std::sin(lon), kEarthRadiusKm * std::sin(lat), t};
}

inline double isl_distance(const Position& a, const Position& b) {
  if (std::abs(a.epoch_s - b.epoch_s) > 1e-9)
    throw std::invalid_argument("isl_distance: positions at different epochs");
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Grid directions, fixed for the whole artifact:
//   0: same plane, slot+1     1: same plane, slot-1
//   2: plane+1, same slot     3: plane-1, same slot
inline constexpr int kGridDegree = 4;

inline int opposite_direction(int dir) { return dir ^ 1; }

inline std::array<SatelliteId, 4> grid_neighbors(const ConstellationConfig& cfg, SatelliteId sat) {
  const int P = cfg.plane_count, S = cfg.sats_per_plane;
  return {SatelliteId{sat.plane, (sat.slot + 1) % S}, SatelliteId{sat.plane, (sat.slot + S - 1) % S},
          SatelliteId{(sat.plane + 1) % P, sat.slot}, SatelliteId{(sat.plane + P - 1) % P, sat.slot}};
}

// Slant-range bound for the satellite-to-ground link, from the orbital
// altitude and the beam half angle: the beam edge ray hits the sphere at
// d = (R+h) cos(theta) - sqrt(R^2 - (R+h)^2 sin^2(theta)).
inline double compute_d_max(const ConstellationConfig& cfg) {
  const double r = kEarthRadiusKm;
  const double ah = cfg.semi_major_axis_km();
  const double theta = deg2rad(cfg.beam_half_angle_deg);
  const double s = ah * std::sin(theta);
  if (s >= r) throw std::invalid_argument("compute_d_max: beam never intersects Earth");
  return ah * std::cos(theta) - std::sqrt(r * r - s * s);
}

struct Visibility {
  bool visible = false;
  double slant_range_km = 0.0;
};

inline Visibility ground_visibility(const Position& sat_pos, const GroundStation& gs, double d_max_km) {
  const Position g = ground_position(gs, sat_pos.epoch_s);
  const double d = isl_distance(sat_pos, g);
  return {d <= d_max_km, d};
}

inline ConstellationConfig constellation_preset(const std::string& name) {
  // beam half angle defaults to 45 degrees for every preset
  if (name == "paper-walker-12x24") return {12, 24, 500.0, 60.0, 45.0, 0.0};
  if (name == "iridium") return {6, 11, 780.0, 86.4, 45.0, 0.0};
  if (name == "telesat") return {27, 13, 1015.0, 98.98, 45.0, 0.0};
  if (name == "oneweb") return {18, 36, 1200.0, 87.9, 45.0, 0.0};
  if (name == "starlink-g1s2") return {36, 20, 570.0, 70.0, 45.0, 0.0};
  throw std::invalid_argument("unknown constellation preset: " + name);
}

inline std::vector<GroundStation> default_ground_stations() {
  return {{"Dubai", 25.252, 55.280},    {"Harbin", 45.750, 126.650}, {"Istanbul", 41.019, 28.965},
          {"Jakarta", -6.174, 106.829}, {"Karachi", 24.867, 67.050}, {"Moscow", 55.752, 37.616},
          {"Nairobi", -1.283, 36.817},  {"Sanya", 18.243, 109.505},  {"Shanghai", 31.109, 121.368},
          {"Urumqi", 43.800, 87.583},   {"Xian", 34.258, 108.929}};
}

}  // namespace isatcr
