#pragma once

#include <cmath>
#include <vector>

#include "fusetrack/feature_map.hpp"
#include "fusetrack/image.hpp"
#include "fusetrack/rng.hpp"

namespace fusetrack {

// Hand-crafted image features: per-cell oriented gradient energy over
// num_orientations unsigned-angle bins, plus an optional mean-intensity
// channel. Dense, cheap, and deterministic.

struct FeatureConfig {
  int cell_size = 8;
  int num_orientations = 8;
  bool include_intensity = true;

  int channel_count() const { return num_orientations + (include_intensity ? 1 : 0); }
};

// ---------------------------------------------------------------------------
// Patch cropping
// ---------------------------------------------------------------------------

// Square crop centered on the state with side context_scale * sqrt(w * h),
// bilinearly resampled to out_size x out_size. Samples falling outside the
// image are filled with the image mean.
inline Image extract_patch(const Image& img, const Rect& state, double context_scale,
                           int out_size) {
  require(state.w > 0.0 && state.h > 0.0, "extract_patch: degenerate state");
  require(context_scale > 0.0, "extract_patch: context_scale must be positive");
  require(out_size >= 32, "extract_patch: out_size must be >= 32");

  const double side = context_scale * std::sqrt(state.w * state.h);
  const double fill = img.mean();
  const double step = side / out_size;
  // continuous window [cy - side/2, cy + side/2] x [cx - side/2, cx + side/2];
  // output pixel (i, j) center sits at window origin + (i + 0.5) * step,
  // converted to pixel-index coordinates by the -0.5 shift.
  const double top = state.cy - 0.5 * side - 0.5;
  const double left = state.cx - 0.5 * side - 0.5;

  Image out(out_size, out_size, img.channels);
  for (int i = 0; i < out_size; ++i) {
    const double sr = top + (i + 0.5) * step;
    const bool row_in = sr >= 0.0 && sr <= img.height - 1;
    for (int j = 0; j < out_size; ++j) {
      const double sc = left + (j + 0.5) * step;
      if (!row_in || sc < 0.0 || sc > img.width - 1) {
        for (int ch = 0; ch < img.channels; ++ch) out.at(i, j, ch) = fill;
      } else {
        for (int ch = 0; ch < img.channels; ++ch)
          out.at(i, j, ch) = bilinear_sample(img, sr, sc, ch);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature extraction
// ---------------------------------------------------------------------------

namespace detail {

// Edge-replicate pad on the bottom/right up to the next cell multiple.
inline Image pad_to_cell_multiple(const Image& img, int cell) {
  const int h = (img.height + cell - 1) / cell * cell;
  const int w = (img.width + cell - 1) / cell * cell;
  if (h == img.height && w == img.width) return img;
  Image out(h, w, img.channels);
  for (int r = 0; r < h; ++r) {
    const int sr = std::min(r, img.height - 1);
    for (int c = 0; c < w; ++c) {
      const int sc = std::min(c, img.width - 1);
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  }
  return out;
}

}  // namespace detail

// Cell-aggregated oriented gradient energy. Gradients are central differences
// on the grayscale plane (clamped at borders); each pixel's squared magnitude
// is assigned to the bin of its orientation folded to [0, pi). Channels hold
// per-cell mean energy per bin, then the mean intensity when enabled.
// Patches whose dims are not cell multiples are edge-padded up front, so a
// 255x255 patch with cell 8 yields a 32x32 map. stride = cell_size.
inline FeatureMap extract_features(const Image& patch, const FeatureConfig& cfg) {
  require(cfg.cell_size >= 1, "extract_features: cell_size must be >= 1");
  require(cfg.num_orientations >= 1, "extract_features: num_orientations must be >= 1");

  const Image padded = detail::pad_to_cell_multiple(
      patch.channels == 1 ? patch : patch.to_gray(), cfg.cell_size);
  const int h = padded.height, w = padded.width, cell = cfg.cell_size;
  const int mh = h / cell, mw = w / cell;
  const int bins = cfg.num_orientations;

  FeatureMap out(cfg.channel_count(), mh, mw, static_cast<double>(cell));
  const double inv_area = 1.0 / (cell * cell);
  const double bin_scale = bins / M_PI;

  for (int r = 0; r < h; ++r) {
    const int rm = std::min(r + 1, h - 1), rp = std::max(r - 1, 0);
    const int cell_r = r / cell;
    for (int c = 0; c < w; ++c) {
      const int cm = std::min(c + 1, w - 1), cp = std::max(c - 1, 0);
      const double gx = 0.5 * (padded.at(r, cm) - padded.at(r, cp));
      const double gy = 0.5 * (padded.at(rm, c) - padded.at(rp, c));
      const double energy = gx * gx + gy * gy;
      if (energy > 0.0) {
        double theta = std::atan2(gy, gx);
        if (theta < 0.0) theta += M_PI;
        if (theta >= M_PI) theta = 0.0;
        const int bin = std::min(bins - 1, static_cast<int>(theta * bin_scale));
        out.at(bin, cell_r, c / cell) += energy * inv_area;
      }
      if (cfg.include_intensity)
        out.at(bins, cell_r, c / cell) += padded.at(r, c) * inv_area;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// First-frame augmentation
// ---------------------------------------------------------------------------

struct AugmentOp {
  double dx = 0.0;       // content translation, pixels
  double dy = 0.0;
  double angle = 0.0;    // rotation about patch center, degrees
  int blur_passes = 0;   // 3-tap binomial applications
};

// Deterministic augmentation plan; element 0 is always the identity.
// Translations up to +-8 px, rotations up to +-15 deg, 0-3 blur passes.
inline std::vector<AugmentOp> plan_augmentations(int count, int seed) {
  require(count >= 1, "plan_augmentations: count must be >= 1");
  std::vector<AugmentOp> plan(1);  // identity first
  Rng rng(static_cast<std::uint64_t>(seed) * 0x9e3779b97f4a7c15ULL + 1);
  for (int i = 1; i < count; ++i) {
    AugmentOp op;
    op.dx = rng.uniform(-8.0, 8.0);
    op.dy = rng.uniform(-8.0, 8.0);
    op.angle = rng.uniform(-15.0, 15.0);
    op.blur_passes = rng.uniform_int(0, 3);
    plan.push_back(op);
  }
  return plan;
}

inline Image apply_augment(const Image& patch, const AugmentOp& op) {
  Image out = (op.dx == 0.0 && op.dy == 0.0 && op.angle == 0.0)
                  ? patch
                  : warp_rigid(patch, op.dx, op.dy, op.angle);
  for (int i = 0; i < op.blur_passes; ++i) out = blur3(out);
  return out;
}

// Seeded augmented variants of the first-frame patch; [0] is the input patch.
inline std::vector<Image> augment_initial(const Image& patch, int count, int seed) {
  const std::vector<AugmentOp> plan = plan_augmentations(count, seed);
  std::vector<Image> out;
  out.reserve(plan.size());
  for (const AugmentOp& op : plan) out.push_back(apply_augment(patch, op));
  return out;
}

}  // namespace fusetrack
