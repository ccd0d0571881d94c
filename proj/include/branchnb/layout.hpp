#pragma once

// Window placement. Metric poses for a user standing at the origin looking
// down +z (semicircle and branch strategies), and pixel rectangles for the
// desktop column layout.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "branchnb/notebook.hpp"

namespace branchnb::layout {

struct LayoutConfig {
  double radius = 1.0;         // m
  double window_width = 0.35;  // m
  double window_height = 0.30; // m
  double gap = 0.0;            // m of arc between neighbours
  double max_span = std::numbers::pi;
  double eye_height = 1.2;     // m
  bool allow_overflow = false;
};

struct Pose {
  double x = 0, y = 0, z = 0;
  double yaw = 0;  // rotation about +y; a window at angle t from +z with yaw t faces the origin

  friend bool operator==(const Pose&, const Pose&) = default;
};

class LayoutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The windows need more arc than max_span allows.
class OverflowSpan : public LayoutError {
 public:
  OverflowSpan(double required, double max_span)
      : LayoutError("OverflowSpan: required span " + fixed2(required) + " rad exceeds maximum " + fixed2(max_span) +
                    " rad"),
        required_(required),
        max_span_(max_span) {}
  double required() const { return required_; }
  double max_span() const { return max_span_; }

 private:
  double required_;
  double max_span_;

  static std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }
};

class UnknownStrategy : public LayoutError {
 public:
  explicit UnknownStrategy(const std::string& name) : LayoutError("UnknownStrategy: " + name) {}
};

inline void validate(const LayoutConfig& cfg) {
  if (!(cfg.radius > 0)) throw LayoutError("radius must be positive");
  if (!(cfg.window_width > 0)) throw LayoutError("window width must be positive");
  if (!(cfg.window_height > 0)) throw LayoutError("window height must be positive");
  if (!(cfg.gap >= 0)) throw LayoutError("gap must be non-negative");
  if (!(cfg.max_span > 0 && cfg.max_span <= 2 * std::numbers::pi)) throw LayoutError("max span must be in (0, 2pi]");
}

// Angular step between neighbouring window centres (arc-length spacing).
inline double angular_step(const LayoutConfig& cfg) { return (cfg.window_width + cfg.gap) / cfg.radius; }

// Arc the n windows occupy.
inline double required_span(const LayoutConfig& cfg, std::size_t n) {
  return static_cast<double>(n) * angular_step(cfg);
}

inline Pose pose_at_angle(const LayoutConfig& cfg, double theta) {
  return Pose{cfg.radius * std::sin(theta), cfg.eye_height, cfg.radius * std::cos(theta), theta};
}

// n windows centred on the forward axis, spaced by angular_step.
inline std::vector<Pose> semicircle(const LayoutConfig& cfg, std::size_t n) {
  validate(cfg);
  const double step = angular_step(cfg);
  const double span = required_span(cfg, n);
  if (span > cfg.max_span && !cfg.allow_overflow) throw OverflowSpan(span, cfg.max_span);
  std::vector<Pose> poses;
  poses.reserve(n);
  const double centre = (static_cast<double>(n) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    // symmetric offsets so pose(i).x == -pose(n-1-i).x exactly
    const double offset = static_cast<double>(i) - centre;
    poses.push_back(pose_at_angle(cfg, offset * step));
  }
  return poses;
}

enum class Strategy { Orthogonal, Grid, Column };

inline Strategy parse_strategy(const std::string& name) {
  if (name == "orthogonal") return Strategy::Orthogonal;
  if (name == "grid") return Strategy::Grid;
  if (name == "column") return Strategy::Column;
  throw UnknownStrategy(name);
}

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::Orthogonal: return "orthogonal";
    case Strategy::Grid: return "grid";
    case Strategy::Column: return "column";
  }
  return "?";
}

// Poses for the k alternatives of a branch group whose first alternative sits
// at `base`. Index 0 is always `base`.
//   orthogonal: along the ray from the origin through base, `spacing` apart;
//   grid: row-major, ceil(sqrt(k)) per row, rows stacked downwards, in the
//         window's tangent plane (towards increasing angle);
//   column: stacked downwards by window_height + spacing.
inline std::vector<Pose> branch_poses(Strategy strategy, const Pose& base, std::size_t k, double spacing,
                                      const LayoutConfig& cfg = {}) {
  if (k == 0) throw LayoutError("group size must be at least 1");
  std::vector<Pose> out;
  out.reserve(k);
  const double s = std::sin(base.yaw);
  const double c = std::cos(base.yaw);
  for (std::size_t j = 0; j < k; ++j) {
    const double jj = static_cast<double>(j);
    Pose p = base;
    switch (strategy) {
      case Strategy::Orthogonal:
        p.x += jj * spacing * s;
        p.z += jj * spacing * c;
        break;
      case Strategy::Grid: {
        const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))));
        const double col = static_cast<double>(j % cols);
        const double row = static_cast<double>(j / cols);
        const double along = col * (cfg.window_width + spacing);
        p.x += along * c;
        p.z -= along * s;
        p.y -= row * (cfg.window_height + spacing);
        break;
      }
      case Strategy::Column:
        p.y -= jj * (cfg.window_height + spacing);
        break;
    }
    out.push_back(p);
  }
  return out;
}

struct PixelConfig {
  int window_w = 2000;
  int window_h = 600;
  int vgap = 40;
  int hgap = 40;
};

struct DesktopRect {
  long long x = 0, y = 0;
  long long width = 0, height = 0;
  int column = 0;

  friend bool operator==(const DesktopRect&, const DesktopRect&) = default;
};

// Column for the j-th alternative: 0, +1, -1, +2, -2, ...
inline int alternative_column(std::size_t j) {
  if (j == 0) return 0;
  const int step = static_cast<int>((j + 1) / 2);
  return j % 2 == 1 ? step : -step;
}

// Main chain in column 0 (x = 0), one row per stage; alternatives fill the side
// columns, so x may be negative.
inline std::map<std::string, DesktopRect> desktop_layout(const Notebook& nb, const PixelConfig& px = {}) {
  if (px.window_w <= 0 || px.window_h <= 0 || px.vgap < 0 || px.hgap < 0) {
    throw LayoutError("pixel sizes must be positive and gaps non-negative");
  }
  std::map<std::string, DesktopRect> out;
  for (std::size_t i = 0; i < nb.stages.size(); ++i) {
    const auto& alts = nb.stages[i].alternatives;
    for (std::size_t j = 0; j < alts.size(); ++j) {
      DesktopRect r;
      r.column = alternative_column(j);
      r.x = static_cast<long long>(r.column) * (px.window_w + px.hgap);
      r.y = static_cast<long long>(i) * (px.window_h + px.vgap);
      r.width = px.window_w;
      r.height = px.window_h;
      out[alts[j].id] = r;
    }
  }
  return out;
}

inline bool overlaps(const DesktopRect& a, const DesktopRect& b) {
  return a.x < b.x + b.width && b.x < a.x + a.width && a.y < b.y + b.height && b.y < a.y + a.height;
}

}  // namespace branchnb::layout
