// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors
//
// Tracking evaluation: per-video success/precision/normalized-precision
// curves and AUC scores, attribute breakdowns, absent-frame handling, and
// the baseline-difficulty-weighted BOC score.
//
// Conventions (fixed here so numbers are reproducible):
//   - success(theta) uses strict IoU > theta on the 101-point grid
//     {0, 0.01, ..., 1}; SR = mean of the curve x100. Identical boxes give
//     IoU = 1, which fails only the theta = 1 point, so a perfect tracker
//     scores SR = 100*100/101.
//   - precision(d) uses center error <= d over d in {0, 1, ..., 50} px;
//     PR = precision(20) x100.
//   - normalized precision sweeps d in {0, 0.01, ..., 0.5}; NPR = mean x100.
//   - absent frames are excluded from every denominator.

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ceutrack/errors.hpp"
#include "ceutrack/events.hpp"
#include "ceutrack/geometry.hpp"

namespace ceutrack {

inline constexpr int kSuccessPoints = 101;
inline constexpr int kPrecisionPoints = 51;
inline constexpr int kNormPrecisionPoints = 51;
inline constexpr double kPrecisionReportPx = 20.0;

struct VideoResult {
  std::string video_id;
  std::vector<BBox> predictions;
  std::vector<TrackAnnotation> gt;
  std::set<std::string> attributes;
};

/// Intersection over union; 0 when the union has zero area.
inline double iou(const BBox& a, const BBox& b) {
  const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  const double inter = (ix > 0.0 && iy > 0.0) ? ix * iy : 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double center_error(const BBox& a, const BBox& b) {
  const double dx = a.cx() - b.cx();
  const double dy = a.cy() - b.cy();
  return std::sqrt(dx * dx + dy * dy);
}

/// Center error with each axis normalized by the ground-truth box size.
inline double normalized_center_error(const BBox& pred, const BBox& gt) {
  if (gt.w <= 0.0 || gt.h <= 0.0) {
    throw ValidationError("normalized_center_error requires a non-degenerate gt box");
  }
  const double dx = (pred.cx() - gt.cx()) / gt.w;
  const double dy = (pred.cy() - gt.cy()) / gt.h;
  return std::sqrt(dx * dx + dy * dy);
}

struct VideoCurves {
  std::string video_id;
  std::array<double, kSuccessPoints> success{};
  std::array<double, kPrecisionPoints> precision{};
  std::array<double, kNormPrecisionPoints> norm_precision{};
  double sr = 0.0;   // AUC of success x100
  double pr = 0.0;   // precision at 20 px x100
  double npr = 0.0;  // AUC of norm precision over [0, 0.5] x100
  int frames_total = 0;
  int frames_evaluated = 0;       // non-absent
  int frames_norm_evaluated = 0;  // non-absent with non-degenerate gt
  std::set<std::string> attributes;
  std::vector<std::string> warnings;

  bool evaluable() const { return frames_evaluated > 0; }
};

inline VideoCurves video_curves(const VideoResult& result) {
  if (result.predictions.size() != result.gt.size()) {
    throw ValidationError("video '" + result.video_id + "': " +
                          std::to_string(result.predictions.size()) + " predictions vs " +
                          std::to_string(result.gt.size()) + " gt frames");
  }
  VideoCurves out;
  out.video_id = result.video_id;
  out.attributes = result.attributes;
  out.frames_total = static_cast<int>(result.gt.size());

  std::array<int, kSuccessPoints> success_hits{};
  std::array<int, kPrecisionPoints> precision_hits{};
  std::array<int, kNormPrecisionPoints> norm_hits{};

  for (std::size_t i = 0; i < result.gt.size(); ++i) {
    const auto& ann = result.gt[i];
    if (ann.absent) continue;
    ++out.frames_evaluated;
    const double overlap = iou(result.predictions[i], ann.box);
    for (int s = 0; s < kSuccessPoints; ++s) {
      if (overlap > s / 100.0) ++success_hits[s];
    }
    const double err = center_error(result.predictions[i], ann.box);
    for (int d = 0; d < kPrecisionPoints; ++d) {
      if (err <= double(d)) ++precision_hits[d];
    }
    if (ann.box.w > 0.0 && ann.box.h > 0.0) {
      ++out.frames_norm_evaluated;
      const double nerr = normalized_center_error(result.predictions[i], ann.box);
      for (int d = 0; d < kNormPrecisionPoints; ++d) {
        if (nerr <= d / 100.0) ++norm_hits[d];
      }
    } else {
      out.warnings.push_back("video '" + result.video_id + "' frame " + std::to_string(i) +
                             ": degenerate gt box skipped in normalized precision");
    }
  }

  if (out.frames_evaluated == 0) {
    out.warnings.push_back("video '" + result.video_id +
                           "': all frames absent, excluded from aggregation");
    return out;
  }

  for (int s = 0; s < kSuccessPoints; ++s) {
    out.success[s] = double(success_hits[s]) / out.frames_evaluated;
    out.sr += out.success[s];
  }
  out.sr *= 100.0 / kSuccessPoints;
  for (int d = 0; d < kPrecisionPoints; ++d) {
    out.precision[d] = double(precision_hits[d]) / out.frames_evaluated;
  }
  out.pr = out.precision[int(kPrecisionReportPx)] * 100.0;
  if (out.frames_norm_evaluated > 0) {
    for (int d = 0; d < kNormPrecisionPoints; ++d) {
      out.norm_precision[d] = double(norm_hits[d]) / out.frames_norm_evaluated;
      out.npr += out.norm_precision[d];
    }
    out.npr *= 100.0 / kNormPrecisionPoints;
  }
  return out;
}

struct AggregateScores {
  std::array<double, kSuccessPoints> success{};
  std::array<double, kPrecisionPoints> precision{};
  std::array<double, kNormPrecisionPoints> norm_precision{};
  double sr = 0.0;
  double pr = 0.0;
  double npr = 0.0;
  int n_videos = 0;
};

struct MetricReport {
  AggregateScores aggregate;
  std::vector<VideoCurves> per_video;            // evaluable videos only
  std::map<std::string, AggregateScores> per_attribute;
  bool has_boc = false;
  double boc = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline AggregateScores mean_of(const std::vector<const VideoCurves*>& videos) {
  AggregateScores agg;
  agg.n_videos = static_cast<int>(videos.size());
  if (videos.empty()) return agg;
  for (const auto* v : videos) {
    for (int i = 0; i < kSuccessPoints; ++i) agg.success[i] += v->success[i];
    for (int i = 0; i < kPrecisionPoints; ++i) agg.precision[i] += v->precision[i];
    for (int i = 0; i < kNormPrecisionPoints; ++i) agg.norm_precision[i] += v->norm_precision[i];
    agg.sr += v->sr;
    agg.pr += v->pr;
    agg.npr += v->npr;
  }
  const double inv = 1.0 / videos.size();
  for (auto& v : agg.success) v *= inv;
  for (auto& v : agg.precision) v *= inv;
  for (auto& v : agg.norm_precision) v *= inv;
  agg.sr *= inv;
  agg.pr *= inv;
  agg.npr *= inv;
  return agg;
}

}  // namespace detail

/// Per-video averaging: the aggregate curve is the unweighted mean of the
/// per-video curves; all-absent videos are dropped with a warning. Attribute
/// sub-reports cover every tag of the 17-tag vocabulary carried by at least
/// one video.
inline MetricReport aggregate(const std::vector<VideoResult>& results) {
  if (results.empty()) throw ValidationError("aggregate requires at least one video");
  MetricReport report;
  for (const auto& r : results) {
    VideoCurves c = video_curves(r);
    report.warnings.insert(report.warnings.end(), c.warnings.begin(), c.warnings.end());
    if (!c.evaluable()) continue;
    report.per_video.push_back(std::move(c));
  }
  std::vector<const VideoCurves*> all;
  for (const auto& c : report.per_video) all.push_back(&c);
  report.aggregate = detail::mean_of(all);

  for (const auto& tag : attribute_vocabulary()) {
    std::vector<const VideoCurves*> subset;
    for (const auto& c : report.per_video) {
      if (c.attributes.count(tag)) subset.push_back(&c);
    }
    if (!subset.empty()) report.per_attribute[tag] = detail::mean_of(subset);
  }
  return report;
}

/// Per-video SR fractions (AUC in [0,1]) for T baseline trackers on N videos.
struct BaselineSRTable {
  std::vector<std::string> tracker_names;
  std::vector<std::string> video_ids;
  std::vector<std::vector<double>> sr;  // [video][tracker]
};

/// CSV with header "video_id,tracker1,...,trackerT" and fractional entries.
inline BaselineSRTable parse_baseline_table(std::string_view text) {
  BaselineSRTable table;
  std::size_t offset = 0;
  long long line_no = 0;
  bool header = true;
  while (offset < text.size()) {
    std::size_t eol = text.find('\n', offset);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = detail::trim(text.substr(offset, eol - offset));
    ++line_no;
    offset = eol + 1;
    if (line.empty()) continue;
    const auto fields = detail::split_fields(line);
    if (header) {
      if (fields.size() < 2 || detail::trim(fields[0]) != "video_id") {
        throw ParseError("baseline table header must start with 'video_id'", -1, line_no);
      }
      for (std::size_t i = 1; i < fields.size(); ++i) {
        table.tracker_names.emplace_back(detail::trim(fields[i]));
      }
      header = false;
      continue;
    }
    if (fields.size() != table.tracker_names.size() + 1) {
      throw ParseError("baseline row has " + std::to_string(fields.size() - 1) +
                       " entries, expected " + std::to_string(table.tracker_names.size()),
                       -1, line_no);
    }
    table.video_ids.emplace_back(detail::trim(fields[0]));
    std::vector<double> row;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const double v = detail::parse_number<double>(fields[i], -1, line_no);
      if (v < 0.0 || v > 1.0) {
        throw ParseError("baseline SR entries must lie in [0,1]", -1, line_no);
      }
      row.push_back(v);
    }
    table.sr.push_back(std::move(row));
  }
  if (header) throw ParseError("baseline table is empty", -1, 0);
  return table;
}

/// BreakOut Capability: mean over videos of the evaluated tracker's SR
/// fraction weighted by (1 - mean baseline SR fraction); reported x100.
/// `eval_sr` and `baseline_sr` must use the same video ordering.
inline double boc(const std::vector<double>& eval_sr,
                  const std::vector<std::vector<double>>& baseline_sr) {
  const std::size_t n = eval_sr.size();
  if (n == 0 || baseline_sr.size() != n) {
    throw ValidationError("boc: eval and baseline video counts differ");
  }
  const std::size_t t = baseline_sr.front().size();
  if (t == 0) throw ValidationError("boc: need at least one baseline tracker");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (baseline_sr[i].size() != t) {
      throw ValidationError("boc: ragged baseline table");
    }
    if (eval_sr[i] < 0.0 || eval_sr[i] > 1.0) {
      throw ValidationError("boc: eval SR entries must lie in [0,1]");
    }
    double base_mean = 0.0;
    for (double v : baseline_sr[i]) {
      if (v < 0.0 || v > 1.0) throw ValidationError("boc: baseline SR entries must lie in [0,1]");
      base_mean += v;
    }
    base_mean /= double(t);
    acc += eval_sr[i] * (1.0 - base_mean);
  }
  return acc / double(n) * 100.0;
}

}  // namespace ceutrack
