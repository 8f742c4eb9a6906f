// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors
//
// Dense image-like event representations: polarity-split count frames,
// exponential-decay time surfaces, and the 0.2:1 early-fusion blend.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ceutrack/errors.hpp"
#include "ceutrack/events.hpp"
#include "ceutrack/image.hpp"

namespace ceutrack {

/// 3-channel count frame: positive events accumulate into channel 0,
/// negative into channel 2, channel 1 stays zero. Counts are scaled by
/// 255/c_max (per-window max bin count, 1 when empty) and clipped to [0,255].
inline Image render_event_frame(const EventWindow& window, int w, int h) {
  Image img(w, h, 3);
  float c_max = 1.0f;
  for (const auto& e : window.events) {
    if (e.x >= w || e.y >= h) throw ValidationError("event outside image bounds");
    float& bin = img.at(e.x, e.y, e.p > 0 ? 0 : 2);
    bin += 1.0f;
    c_max = std::max(c_max, bin);
  }
  const float scale = 255.0f / c_max;
  for (float& v : img.data) v = std::clamp(v * scale, 0.0f, 255.0f);
  return img;
}

/// 2-channel time surface: per pixel and polarity (channel 0 positive,
/// channel 1 negative), exp(-(t_end - t_last)/decay_tau) of the most recent
/// event, 0 where none occurred.
inline Image render_time_surface(const EventWindow& window, int w, int h,
                                 double decay_tau_us) {
  if (decay_tau_us <= 0.0) throw ValidationError("decay_tau must be positive");
  // Last-event timestamps; -1 marks "never fired".
  std::vector<double> last(static_cast<std::size_t>(w) * h * 2, -1.0);
  for (const auto& e : window.events) {
    if (e.x >= w || e.y >= h) throw ValidationError("event outside image bounds");
    const std::size_t idx = (static_cast<std::size_t>(e.y) * w + e.x) * 2 + (e.p > 0 ? 0 : 1);
    last[idx] = std::max(last[idx], double(e.t));
  }
  Image img(w, h, 2);
  for (std::size_t i = 0; i < last.size(); ++i) {
    if (last[i] < 0.0) continue;
    img.data[i] = static_cast<float>(std::exp(-(double(window.t_end) - last[i]) / decay_tau_us));
  }
  return img;
}

/// Default time-surface decay when none is given: half the window duration.
inline double default_decay_tau(const EventWindow& window) {
  return std::max(1.0, double(window.duration()) / 2.0);
}

/// Early fusion at the 0.2:1 event:color rate, normalized back into range:
/// out = (0.2 * event + color) / 1.2, clipped to [0, 255].
inline Image blend_early_fusion(const Image& color, const Image& event_frame) {
  if (color.w != event_frame.w || color.h != event_frame.h ||
      color.channels != 3 || event_frame.channels != 3) {
    throw ValidationError("blend_early_fusion requires matching 3-channel images");
  }
  Image out(color.w, color.h, 3);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = std::clamp((0.2f * event_frame.data[i] + color.data[i]) / 1.2f, 0.0f, 255.0f);
  }
  return out;
}

}  // namespace ceutrack
