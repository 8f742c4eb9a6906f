// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors
//
// Deterministic synthetic color-event sequences for desk-scale tests: a
// bright rectangle glides over a dark background; events fire wherever the
// per-pixel log-intensity change between consecutive frames crosses the
// contrast threshold, with timestamps interpolated at the crossings.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ceutrack/errors.hpp"
#include "ceutrack/events.hpp"
#include "ceutrack/image.hpp"
#include "ceutrack/rng.hpp"

namespace ceutrack {

struct SyntheticSceneConfig {
  std::uint16_t sensor_w = 64;
  std::uint16_t sensor_h = 48;
  int n_frames = 20;
  double object_w = 12.0;   // pixels
  double object_h = 10.0;
  double start_x = 6.0;     // top-left corner at frame 0
  double start_y = 8.0;
  double vel_x = 1.5;       // pixels/frame
  double vel_y = 0.75;
  double contrast_threshold = 0.15;  // log-intensity units
  double background = 20.0;          // intensity of the empty scene
  double foreground = 200.0;         // intensity of the object
  double noise_amp = 0.0;            // per-pixel intensity dither fed by `seed`
  std::uint64_t frame_dt_us = 10000;
  std::uint32_t seed = 1;
};

struct SyntheticScene {
  std::vector<Image> frames;  // 1-channel intensity
  std::vector<std::uint64_t> frame_times;
  std::vector<EventPoint> events;
  std::vector<TrackAnnotation> gt;
};

namespace detail {

// Fractional overlap of pixel cell [x, x+1) x [y, y+1) with the object rect.
inline double pixel_coverage(int x, int y, double rx, double ry, double rw, double rh) {
  const double ox = std::min(double(x) + 1.0, rx + rw) - std::max(double(x), rx);
  const double oy = std::min(double(y) + 1.0, ry + rh) - std::max(double(y), ry);
  if (ox <= 0.0 || oy <= 0.0) return 0.0;
  return ox * oy;
}

}  // namespace detail

inline SyntheticScene generate_synthetic(const SyntheticSceneConfig& cfg) {
  if (cfg.n_frames < 1) throw ValidationError("n_frames must be >= 1");
  if (cfg.object_w <= 0.0 || cfg.object_h <= 0.0) {
    throw ValidationError("object size must be positive");
  }
  if (cfg.contrast_threshold <= 0.0) {
    throw ValidationError("contrast threshold must be positive");
  }

  SyntheticScene scene;
  scene.frames.reserve(cfg.n_frames);
  scene.gt.reserve(cfg.n_frames);
  std::mt19937 rng(cfg.seed);

  for (int r = 0; r < cfg.n_frames; ++r) {
    const double rx = cfg.start_x + cfg.vel_x * r;
    const double ry = cfg.start_y + cfg.vel_y * r;
    if (rx < 0.0 || ry < 0.0 || rx + cfg.object_w > cfg.sensor_w ||
        ry + cfg.object_h > cfg.sensor_h) {
      throw ValidationError("object leaves the frame at frame " + std::to_string(r));
    }
    Image frame(cfg.sensor_w, cfg.sensor_h, 1);
    for (int y = 0; y < cfg.sensor_h; ++y) {
      for (int x = 0; x < cfg.sensor_w; ++x) {
        double v = cfg.background +
                   (cfg.foreground - cfg.background) *
                       detail::pixel_coverage(x, y, rx, ry, cfg.object_w, cfg.object_h);
        if (cfg.noise_amp > 0.0) {
          v += (uniform_unit_d(rng) - 0.5) * 2.0 * cfg.noise_amp;
          v = std::max(v, 0.0);
        }
        frame.at(x, y, 0) = static_cast<float>(v);
      }
    }
    scene.frames.push_back(std::move(frame));
    scene.frame_times.push_back(static_cast<std::uint64_t>(r) * cfg.frame_dt_us);
    scene.gt.push_back({r, BBox{rx, ry, cfg.object_w, cfg.object_h}, false});
  }

  // One threshold crossing per multiple of the contrast threshold, timestamped
  // where the linear intensity ramp crosses it inside the inter-frame interval.
  for (int r = 1; r < cfg.n_frames; ++r) {
    const Image& prev = scene.frames[r - 1];
    const Image& cur = scene.frames[r];
    const std::uint64_t t_prev = scene.frame_times[r - 1];
    for (int y = 0; y < cfg.sensor_h; ++y) {
      for (int x = 0; x < cfg.sensor_w; ++x) {
        const double d = std::log1p(double(cur.at(x, y, 0))) -
                         std::log1p(double(prev.at(x, y, 0)));
        const double mag = std::abs(d);
        const int crossings = static_cast<int>(std::floor(mag / cfg.contrast_threshold));
        const std::int8_t pol = d > 0.0 ? std::int8_t(1) : std::int8_t(-1);
        for (int j = 0; j < crossings; ++j) {
          const double frac = (j + 1) * cfg.contrast_threshold / mag;
          std::uint64_t t = t_prev + static_cast<std::uint64_t>(
                                         std::floor(frac * double(cfg.frame_dt_us)));
          if (t >= t_prev + cfg.frame_dt_us) t = t_prev + cfg.frame_dt_us - 1;
          scene.events.push_back(EventPoint{t, std::uint16_t(x), std::uint16_t(y), pol});
        }
      }
    }
  }
  std::sort(scene.events.begin(), scene.events.end(),
            [](const EventPoint& a, const EventPoint& b) {
              if (a.t != b.t) return a.t < b.t;
              if (a.y != b.y) return a.y < b.y;
              if (a.x != b.x) return a.x < b.x;
              return a.p < b.p;
            });
  return scene;
}

}  // namespace ceutrack
