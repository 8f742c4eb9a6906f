// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ceutrack/errors.hpp"
#include "ceutrack/geometry.hpp"

namespace ceutrack {

/// Dense image, row-major with interleaved channels:
/// data[(y * w + x) * channels + c]. Values are real; the 8-bit range
/// [0, 255] is only imposed when writing PGM/PPM.
struct Image {
  int w = 0;
  int h = 0;
  int channels = 1;  // 1 (gray), 2 (per-polarity maps) or 3 (color)
  std::vector<float> data;

  Image() = default;
  Image(int w_, int h_, int channels_, float fill = 0.0f)
      : w(w_), h(h_), channels(channels_),
        data(static_cast<std::size_t>(w_) * h_ * channels_, fill) {}

  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
};

/// Grayscale replicated into three channels; 3-channel input passes through.
inline Image to_three_channels(const Image& img) {
  if (img.channels == 3) return img;
  if (img.channels != 1) throw ValidationError("to_three_channels expects 1 or 3 channels");
  Image out(img.w, img.h, 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const float v = img.at(x, y, 0);
      out.at(x, y, 0) = v;
      out.at(x, y, 1) = v;
      out.at(x, y, 2) = v;
    }
  return out;
}

namespace detail {

inline float sample_bilinear(const Image& img, double sx, double sy, int c) {
  // Border clamp; sample coordinates are pixel centers.
  sx = std::clamp(sx, 0.0, double(img.w - 1));
  sy = std::clamp(sy, 0.0, double(img.h - 1));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, img.w - 1);
  const int y1 = std::min(y0 + 1, img.h - 1);
  const double fx = sx - x0;
  const double fy = sy - y0;
  const double v00 = img.at(x0, y0, c);
  const double v10 = img.at(x1, y0, c);
  const double v01 = img.at(x0, y1, c);
  const double v11 = img.at(x1, y1, c);
  const double v0 = v00 + (v10 - v00) * fx;
  const double v1 = v01 + (v11 - v01) * fx;
  return static_cast<float>(v0 + (v1 - v0) * fy);
}

}  // namespace detail

/// Bilinear crop+resize of `region` to out_w x out_h. Region may extend past
/// the image; samples clamp at the border.
inline Image crop_resize(const Image& img, const Region& region, int out_w, int out_h) {
  if (region.side_w <= 0.0 || region.side_h <= 0.0) {
    throw ValidationError("crop_resize requires a region with positive sides");
  }
  Image out(out_w, out_h, img.channels);
  for (int y = 0; y < out_h; ++y) {
    const double sy = region.top() + (y + 0.5) / out_h * region.side_h - 0.5;
    for (int x = 0; x < out_w; ++x) {
      const double sx = region.left() + (x + 0.5) / out_w * region.side_w - 0.5;
      for (int c = 0; c < img.channels; ++c) {
        out.at(x, y, c) = detail::sample_bilinear(img, sx, sy, c);
      }
    }
  }
  return out;
}

/// PGM (P5, 1 channel) or PPM (P6, 3 channels) with binary payload.
/// 2-channel images map to PPM as (ch0, 0, ch1).
inline std::string write_pnm(const Image& img) {
  const bool gray = img.channels == 1;
  std::string out = gray ? "P5\n" : "P6\n";
  out += std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
  auto quantize = [](float v) {
    return static_cast<unsigned char>(std::clamp(std::lround(v), 0l, 255l));
  };
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      if (gray) {
        out.push_back(static_cast<char>(quantize(img.at(x, y, 0))));
      } else if (img.channels == 2) {
        out.push_back(static_cast<char>(quantize(img.at(x, y, 0))));
        out.push_back(static_cast<char>(quantize(0.0f)));
        out.push_back(static_cast<char>(quantize(img.at(x, y, 1))));
      } else {
        out.push_back(static_cast<char>(quantize(img.at(x, y, 0))));
        out.push_back(static_cast<char>(quantize(img.at(x, y, 1))));
        out.push_back(static_cast<char>(quantize(img.at(x, y, 2))));
      }
    }
  }
  return out;
}

inline Image parse_pnm(std::string_view bytes) {
  if (bytes.size() < 2) throw ParseError("truncated PNM", 0);
  const bool gray = bytes[0] == 'P' && bytes[1] == '5';
  const bool color = bytes[0] == 'P' && bytes[1] == '6';
  if (!gray && !color) throw ParseError("expected P5 or P6 magic", 0);
  std::size_t pos = 2;
  auto next_int = [&]() -> int {
    while (pos < bytes.size() &&
           (bytes[pos] == ' ' || bytes[pos] == '\n' || bytes[pos] == '\t' || bytes[pos] == '\r')) {
      ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {  // comment to end of line
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      }
    }
    int v = 0;
    bool any = false;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) throw ParseError("bad PNM header", static_cast<long long>(pos));
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw ParseError("only maxval 255 supported", static_cast<long long>(pos));
  ++pos;  // single whitespace after maxval
  const int ch = gray ? 1 : 3;
  const std::size_t need = static_cast<std::size_t>(w) * h * ch;
  if (bytes.size() - pos < need) {
    throw ParseError("truncated PNM payload", static_cast<long long>(bytes.size()));
  }
  Image img(w, h, ch);
  for (std::size_t i = 0; i < need; ++i) {
    img.data[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i]));
  }
  return img;
}

}  // namespace ceutrack
