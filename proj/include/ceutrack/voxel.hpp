// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors
//
// Sparse event voxelization: an EventWindow is binned into an m x n x tau
// grid over (x, y, t); each occupied cell carries a 19-dim descriptor
// (3 normalized center coordinates + 16 statistics). Crop regions filter
// voxels by pixel position, and select_top_k produces the fixed-size,
// count-sorted, zero-padded tensor the model consumes.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include "ceutrack/errors.hpp"
#include "ceutrack/events.hpp"
#include "ceutrack/geometry.hpp"

namespace ceutrack {

struct GridSpec {
  int m = 34;    // cells along x
  int n = 26;    // cells along y
  int tau = 20;  // cells along t
  std::uint16_t sensor_w = 346;
  std::uint16_t sensor_h = 260;
  std::uint64_t t_start = 0;
  std::uint64_t t_end = 1;

  long long total_cells() const { return 1ll * m * n * tau; }

  void validate() const {
    if (m < 1 || n < 1 || tau < 1) throw ValidationError("grid dims must be >= 1");
    if (t_end <= t_start) throw ValidationError("grid time span is empty");
    if (sensor_w == 0 || sensor_h == 0) throw ValidationError("sensor size must be positive");
  }
};

struct CellIndex {
  int ix = 0;
  int iy = 0;
  int iz = 0;

  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// One occupied grid cell. cx/cy/cz are the cell-center coordinates
/// normalized per axis; after filter_voxels, cx/cy are region-local.
/// feat holds, in order:
///   [0] log(1+count) / log(1+window events)
///   [1] positive fraction          [2] negative fraction
///   [3] mean polarity
///   [4..6] mean in-cell offsets (x, y, t), each normalized to [0,1)
///   [7..9] in-cell offset standard deviations
///   [10] first-event time offset   [11] last-event time offset
///   [12] temporal extent ([11] - [10])
///   [13..15] in-cell offset covariances xy, xt, yt
struct Voxel {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  std::array<double, 16> feat{};
  std::uint32_t count = 0;  // 0 marks a padding row
  CellIndex cell;
};

inline constexpr int kVoxelDescriptorDim = 19;

/// Sparse voxelization result. Keeps the grid and the source window's event
/// count so filtered subsets stay self-describing.
struct VoxelSet {
  GridSpec spec;
  std::size_t window_events = 0;
  std::unordered_map<std::int64_t, Voxel> cells;

  static std::int64_t key(const CellIndex& c, const GridSpec& s) {
    return (static_cast<std::int64_t>(c.iz) * s.n + c.iy) * s.m + c.ix;
  }
};

/// Fixed-capacity row tensor: the occupied prefix is sorted non-increasing by
/// count (ties by cell index), the rest is all-zero padding.
struct VoxelTensor {
  std::vector<Voxel> rows;
  int k = 0;
  int occupied = 0;
};

namespace detail {

struct CellBounds {
  double x_lo, x_hi, y_lo, y_hi, t_lo, t_hi;
};

inline CellBounds cell_bounds(const CellIndex& c, const GridSpec& s) {
  const double span = double(s.t_end - s.t_start);
  return {double(c.ix) * s.sensor_w / s.m, double(c.ix + 1) * s.sensor_w / s.m,
          double(c.iy) * s.sensor_h / s.n, double(c.iy + 1) * s.sensor_h / s.n,
          double(s.t_start) + double(c.iz) * span / s.tau,
          double(s.t_start) + double(c.iz + 1) * span / s.tau};
}

}  // namespace detail

inline CellIndex cell_of(const EventPoint& e, const GridSpec& s) {
  const int ix = std::min(int(std::uint64_t(e.x) * s.m / s.sensor_w), s.m - 1);
  const int iy = std::min(int(std::uint64_t(e.y) * s.n / s.sensor_h), s.n - 1);
  const std::uint64_t span = s.t_end - s.t_start;
  const int iz = std::min(int((e.t - s.t_start) * std::uint64_t(s.tau) / span), s.tau - 1);
  return {ix, iy, iz};
}

/// 16 statistics over the events of one cell (timestamp order). Offsets are
/// normalized by the cell bounds; std and covariances are population moments
/// computed in two passes.
inline std::array<double, 16> voxel_features(const std::vector<EventPoint>& cell_events,
                                             const detail::CellBounds& b,
                                             std::size_t window_events) {
  if (cell_events.empty()) throw ValidationError("voxel_features requires a non-empty cell");
  const std::size_t n = cell_events.size();
  const double inv_n = 1.0 / double(n);
  const double wx = b.x_hi - b.x_lo;
  const double wy = b.y_hi - b.y_lo;
  const double wt = b.t_hi - b.t_lo;

  std::size_t positives = 0;
  double mx = 0.0, my = 0.0, mt = 0.0;
  for (const auto& e : cell_events) {
    if (e.p > 0) ++positives;
    mx += (double(e.x) - b.x_lo) / wx;
    my += (double(e.y) - b.y_lo) / wy;
    mt += (double(e.t) - b.t_lo) / wt;
  }
  mx *= inv_n;
  my *= inv_n;
  mt *= inv_n;

  double vxx = 0.0, vyy = 0.0, vtt = 0.0, cxy = 0.0, cxt = 0.0, cyt = 0.0;
  for (const auto& e : cell_events) {
    const double dx = (double(e.x) - b.x_lo) / wx - mx;
    const double dy = (double(e.y) - b.y_lo) / wy - my;
    const double dt = (double(e.t) - b.t_lo) / wt - mt;
    vxx += dx * dx;
    vyy += dy * dy;
    vtt += dt * dt;
    cxy += dx * dy;
    cxt += dx * dt;
    cyt += dy * dt;
  }

  const double pos_frac = double(positives) * inv_n;
  const double first_t = (double(cell_events.front().t) - b.t_lo) / wt;
  const double last_t = (double(cell_events.back().t) - b.t_lo) / wt;

  std::array<double, 16> f{};
  f[0] = std::log1p(double(n)) / std::log1p(double(window_events));
  f[1] = pos_frac;
  f[2] = 1.0 - pos_frac;
  f[3] = 2.0 * pos_frac - 1.0;  // mean polarity, range [-1, 1]
  f[4] = mx;
  f[5] = my;
  f[6] = mt;
  f[7] = std::sqrt(vxx * inv_n);
  f[8] = std::sqrt(vyy * inv_n);
  f[9] = std::sqrt(vtt * inv_n);
  f[10] = first_t;
  f[11] = last_t;
  f[12] = last_t - first_t;
  f[13] = cxy * inv_n;
  f[14] = cxt * inv_n;
  f[15] = cyt * inv_n;
  return f;
}

/// Bins a window into the sparse grid. Events are grouped in timestamp order,
/// so the reduction is deterministic regardless of caller-side parallelism.
inline VoxelSet voxelize(const EventWindow& window, const GridSpec& spec) {
  spec.validate();
  for (const auto& e : window.events) {
    if (e.x >= spec.sensor_w || e.y >= spec.sensor_h) {
      throw ValidationError("event outside sensor bounds");
    }
    if (e.t < spec.t_start || e.t >= spec.t_end) {
      throw ValidationError("event timestamp outside [t_start, t_end)");
    }
  }

  std::unordered_map<std::int64_t, std::vector<EventPoint>> groups;
  groups.reserve(window.events.size());
  for (const auto& e : window.events) {
    groups[VoxelSet::key(cell_of(e, spec), spec)].push_back(e);
  }

  VoxelSet out;
  out.spec = spec;
  out.window_events = window.events.size();
  out.cells.reserve(groups.size());
  for (auto& [key, evs] : groups) {
    const int ix = int(key % spec.m);
    const int iy = int((key / spec.m) % spec.n);
    const int iz = int(key / (std::int64_t(spec.m) * spec.n));
    Voxel v;
    v.cell = {ix, iy, iz};
    v.cx = (ix + 0.5) / spec.m;
    v.cy = (iy + 0.5) / spec.n;
    v.cz = (iz + 0.5) / spec.tau;
    v.count = static_cast<std::uint32_t>(evs.size());
    v.feat = voxel_features(evs, detail::cell_bounds(v.cell, spec), out.window_events);
    out.cells.emplace(key, v);
  }
  return out;
}

/// Crop region `factor` times larger than the target box, clamped to the
/// sensor by shifting; a side larger than the sensor is truncated to it.
inline Region crop_region(const BBox& target, double factor,
                          double sensor_w, double sensor_h) {
  if (target.w <= 0.0 || target.h <= 0.0) {
    throw ValidationError("crop_region requires a non-degenerate box");
  }
  if (factor <= 0.0) throw ValidationError("crop factor must be positive");
  Region r;
  r.side_w = std::min(factor * target.w, sensor_w);
  r.side_h = std::min(factor * target.h, sensor_h);
  r.center_x = std::clamp(target.cx(), r.side_w / 2.0, sensor_w - r.side_w / 2.0);
  r.center_y = std::clamp(target.cy(), r.side_h / 2.0, sensor_h - r.side_h / 2.0);
  return r;
}

/// Keeps voxels whose pixel-space center falls inside the region (half-open)
/// and re-normalizes cx/cy to region-local [0, 1). cz and features unchanged.
inline VoxelSet filter_voxels(const VoxelSet& voxels, const Region& region) {
  VoxelSet out;
  out.spec = voxels.spec;
  out.window_events = voxels.window_events;
  for (const auto& [key, v] : voxels.cells) {
    const double px = v.cx * voxels.spec.sensor_w;
    const double py = v.cy * voxels.spec.sensor_h;
    if (!region.contains(px, py)) continue;
    Voxel local = v;
    local.cx = (px - region.left()) / region.side_w;
    local.cy = (py - region.top()) / region.side_h;
    out.cells.emplace(key, local);
  }
  return out;
}

namespace detail {

inline bool density_order(const Voxel& a, const Voxel& b) {
  if (a.count != b.count) return a.count > b.count;
  if (a.cell.iz != b.cell.iz) return a.cell.iz < b.cell.iz;
  if (a.cell.iy != b.cell.iy) return a.cell.iy < b.cell.iy;
  return a.cell.ix < b.cell.ix;
}

inline VoxelTensor top_k_from_rows(std::vector<Voxel> occupied, int k) {
  if (k < 1) throw ValidationError("select_top_k requires k >= 1");
  std::sort(occupied.begin(), occupied.end(), density_order);
  VoxelTensor out;
  out.k = k;
  out.occupied = std::min<int>(k, static_cast<int>(occupied.size()));
  out.rows.assign(occupied.begin(), occupied.begin() + out.occupied);
  out.rows.resize(k);  // zero-value padding rows
  return out;
}

}  // namespace detail

/// Top-k voxels by event count, ties broken by (cz, cy, cx) ascending;
/// zero rows pad up to k.
inline VoxelTensor select_top_k(const VoxelSet& voxels, int k) {
  std::vector<Voxel> occupied;
  occupied.reserve(voxels.cells.size());
  for (const auto& [key, v] : voxels.cells) occupied.push_back(v);
  return detail::top_k_from_rows(std::move(occupied), k);
}

/// Re-selection from an existing tensor (idempotent for the same k).
inline VoxelTensor select_top_k(const VoxelTensor& tensor, int k) {
  std::vector<Voxel> occupied(tensor.rows.begin(), tensor.rows.begin() + tensor.occupied);
  return detail::top_k_from_rows(std::move(occupied), k);
}

// --- serialization: "VXT1", u32 k, u32 occupied, then k*19 LE f32 rows ---

inline constexpr std::size_t kVoxelTensorHeaderSize = 4 + 4 + 4;

namespace detail {

inline void put_f32(std::vector<unsigned char>& out, float f) {
  std::uint32_t bits;
  static_assert(sizeof(bits) == sizeof(f));
  std::memcpy(&bits, &f, sizeof(bits));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(p[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_voxel_tensor(const VoxelTensor& vt) {
  std::vector<unsigned char> out;
  out.reserve(kVoxelTensorHeaderSize + std::size_t(vt.k) * kVoxelDescriptorDim * 4);
  out.insert(out.end(), {'V', 'X', 'T', '1'});
  detail::put_u32(out, static_cast<std::uint32_t>(vt.k));
  detail::put_u32(out, static_cast<std::uint32_t>(vt.occupied));
  for (const auto& v : vt.rows) {
    detail::put_f32(out, static_cast<float>(v.cx));
    detail::put_f32(out, static_cast<float>(v.cy));
    detail::put_f32(out, static_cast<float>(v.cz));
    for (double f : v.feat) detail::put_f32(out, static_cast<float>(f));
  }
  return out;
}

inline VoxelTensor parse_voxel_tensor(const unsigned char* data, std::size_t size) {
  if (size < kVoxelTensorHeaderSize) throw ParseError("truncated voxel tensor header",
                                                      static_cast<long long>(size));
  if (!(data[0] == 'V' && data[1] == 'X' && data[2] == 'T' && data[3] == '1')) {
    throw ParseError("bad magic, expected 'VXT1'", 0);
  }
  VoxelTensor vt;
  vt.k = static_cast<int>(detail::get_u32(data + 4));
  vt.occupied = static_cast<int>(detail::get_u32(data + 8));
  if (vt.occupied > vt.k || vt.k < 1) throw ParseError("inconsistent voxel tensor header", 4);
  const std::size_t need =
      kVoxelTensorHeaderSize + std::size_t(vt.k) * kVoxelDescriptorDim * 4;
  if (size < need) throw ParseError("truncated voxel tensor payload",
                                    static_cast<long long>(size));
  vt.rows.resize(vt.k);
  const unsigned char* p = data + kVoxelTensorHeaderSize;
  for (auto& v : vt.rows) {
    v.cx = detail::get_f32(p);
    v.cy = detail::get_f32(p + 4);
    v.cz = detail::get_f32(p + 8);
    for (int i = 0; i < 16; ++i) v.feat[i] = detail::get_f32(p + 12 + 4 * i);
    p += kVoxelDescriptorDim * 4;
  }
  // Row counts are not serialized; mark the occupied prefix as non-padding.
  for (int i = 0; i < vt.occupied; ++i) {
    if (vt.rows[i].count == 0) vt.rows[i].count = 1;
  }
  return vt;
}

inline VoxelTensor parse_voxel_tensor(const std::vector<unsigned char>& bytes) {
  return parse_voxel_tensor(bytes.data(), bytes.size());
}

}  // namespace ceutrack
