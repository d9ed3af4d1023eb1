#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusetrack {

// Coordinate convention used throughout: a map cell (r, c) spans
// [r, r+1) x [c, c+1) of its own grid and its center maps to the image point
//   (origin_row + (r + 0.5) * stride, origin_col + (c + 0.5) * stride).
// Image pixels follow the same rule with stride 1 and origin 0, so pixel
// (r, c) has center (r + 0.5, c + 0.5) in continuous image coordinates.

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Rect: center-based box in image pixels.
// ---------------------------------------------------------------------------

struct Rect {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double area() const { return w * h; }
  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }

  static Rect from_tlwh(double x, double y, double w, double h) {
    return Rect{x + 0.5 * w, y + 0.5 * h, w, h};
  }
};

inline double iou(const Rect& a, const Rect& b) {
  const double ix = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double iy = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// ---------------------------------------------------------------------------
// FeatureMap: dense channels x height x width tensor with spatial metadata.
// ---------------------------------------------------------------------------

struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  double stride = 1.0;        // image pixels per cell
  double origin_row = 0.0;    // image coordinate of the grid origin
  double origin_col = 0.0;
  std::vector<double> data;   // [channel][row][col], row-major

  FeatureMap() = default;

  FeatureMap(int c, int h, int w, double stride_ = 1.0)
      : channels(c), height(h), width(w), stride(stride_),
        data(static_cast<std::size_t>(c) * h * w, 0.0) {
    require(c > 0 && h > 0 && w > 0, "FeatureMap: dims must be positive");
    require(stride_ > 0.0, "FeatureMap: stride must be positive");
  }

  FeatureMap(int c, int h, int w, std::vector<double> values, double stride_ = 1.0)
      : channels(c), height(h), width(w), stride(stride_), data(std::move(values)) {
    require(c > 0 && h > 0 && w > 0, "FeatureMap: dims must be positive");
    require(stride_ > 0.0, "FeatureMap: stride must be positive");
    require(data.size() == static_cast<std::size_t>(c) * h * w,
            "FeatureMap: data length mismatch");
    require(all_finite(data), "FeatureMap: non-finite values");
  }

  double& at(int c, int r, int col) {
    return data[(static_cast<std::size_t>(c) * height + r) * width + col];
  }
  double at(int c, int r, int col) const {
    return data[(static_cast<std::size_t>(c) * height + r) * width + col];
  }
  const double* plane(int c) const {
    return data.data() + static_cast<std::size_t>(c) * height * width;
  }
  double* plane(int c) {
    return data.data() + static_cast<std::size_t>(c) * height * width;
  }
  std::size_t size() const { return data.size(); }
};

// ---------------------------------------------------------------------------
// ScoreMap: single-channel response map with peak-query helpers.
// ---------------------------------------------------------------------------

struct Peak {
  int row = 0;        // argmax cell
  int col = 0;
  double refined_row = 0.0;  // sub-cell refined position (cell coordinates)
  double refined_col = 0.0;
  double value = 0.0;
};

struct ScoreMap {
  int height = 0;
  int width = 0;
  double stride = 1.0;
  double origin_row = 0.0;
  double origin_col = 0.0;
  std::vector<double> data;

  ScoreMap() = default;

  ScoreMap(int h, int w, double stride_ = 1.0, double orow = 0.0, double ocol = 0.0)
      : height(h), width(w), stride(stride_), origin_row(orow), origin_col(ocol),
        data(static_cast<std::size_t>(h) * w, 0.0) {
    require(h > 0 && w > 0, "ScoreMap: dims must be positive");
    require(stride_ > 0.0, "ScoreMap: stride must be positive");
  }

  ScoreMap(int h, int w, std::vector<double> values, double stride_ = 1.0,
           double orow = 0.0, double ocol = 0.0)
      : height(h), width(w), stride(stride_), origin_row(orow), origin_col(ocol),
        data(std::move(values)) {
    require(h > 0 && w > 0, "ScoreMap: dims must be positive");
    require(stride_ > 0.0, "ScoreMap: stride must be positive");
    require(data.size() == static_cast<std::size_t>(h) * w,
            "ScoreMap: data length mismatch");
    require(all_finite(data), "ScoreMap: non-finite values");
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }

  // cell (r, c) center in image coordinates (row, col order)
  std::pair<double, double> point_of(double r, double c) const {
    return {origin_row + (r + 0.5) * stride, origin_col + (c + 0.5) * stride};
  }
  // image point -> fractional cell coordinates
  std::pair<double, double> cell_of(double img_row, double img_col) const {
    return {(img_row - origin_row) / stride - 0.5,
            (img_col - origin_col) / stride - 0.5};
  }

  double max_value() const { return *std::max_element(data.begin(), data.end()); }
  double min_value() const { return *std::min_element(data.begin(), data.end()); }

  std::pair<int, int> argmax_cell() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < data.size(); ++i)
      if (data[i] > data[best]) best = i;
    return {static_cast<int>(best) / width, static_cast<int>(best) % width};
  }

  // Global max with quadratic sub-cell refinement over the 3x3 neighborhood.
  Peak find_peak() const {
    auto [r, c] = argmax_cell();
    Peak p;
    p.row = r;
    p.col = c;
    p.value = at(r, c);
    p.refined_row = r + refine_axis(r, c, true);
    p.refined_col = c + refine_axis(r, c, false);
    return p;
  }

 private:
  // Parabola through the argmax and its two axis neighbors; clamped to half
  // a cell, zero at borders or when the fit is not concave.
  double refine_axis(int r, int c, bool along_rows) const {
    const int lim = along_rows ? height : width;
    const int idx = along_rows ? r : c;
    if (idx <= 0 || idx >= lim - 1) return 0.0;
    const double fm = along_rows ? at(r - 1, c) : at(r, c - 1);
    const double f0 = at(r, c);
    const double fp = along_rows ? at(r + 1, c) : at(r, c + 1);
    const double denom = fm + fp - 2.0 * f0;
    if (denom >= 0.0) return 0.0;
    return std::clamp(0.5 * (fm - fp) / denom, -0.5, 0.5);
  }
};

// ---------------------------------------------------------------------------
// Cross-correlation
// ---------------------------------------------------------------------------

enum class CorrMode { valid, same };

// Channel-summed sliding inner product. Valid mode yields
// (H-kh+1) x (W-kw+1); same mode zero-pads so output dims equal input dims.
// The output origin accounts for the kernel-center offset so that cell
// centers keep mapping to the correct image coordinates.
inline ScoreMap xcorr2d(const FeatureMap& input, const FeatureMap& kernel,
                        CorrMode mode) {
  require(input.channels == kernel.channels, "xcorr2d: channel mismatch");
  const int H = input.height, W = input.width;
  const int kh = kernel.height, kw = kernel.width;

  if (mode == CorrMode::valid) {
    require(kh <= H && kw <= W, "xcorr2d: kernel larger than input in valid mode");
    const int oh = H - kh + 1, ow = W - kw + 1;
    ScoreMap out(oh, ow, input.stride,
                 input.origin_row + 0.5 * (kh - 1) * input.stride,
                 input.origin_col + 0.5 * (kw - 1) * input.stride);
    for (int ch = 0; ch < input.channels; ++ch) {
      const double* in = input.plane(ch);
      const double* k = kernel.plane(ch);
      for (int i = 0; i < kh; ++i) {
        for (int j = 0; j < kw; ++j) {
          const double kv = k[i * kw + j];
          if (kv == 0.0) continue;
          for (int r = 0; r < oh; ++r) {
            const double* src = in + (r + i) * W + j;
            double* dst = out.data.data() + static_cast<std::size_t>(r) * ow;
            for (int c = 0; c < ow; ++c) dst[c] += kv * src[c];
          }
        }
      }
    }
    return out;
  }

  // same mode
  const int pad_t = (kh - 1) / 2, pad_l = (kw - 1) / 2;
  ScoreMap out(H, W, input.stride,
               input.origin_row + (0.5 * (kh - 1) - pad_t) * input.stride,
               input.origin_col + (0.5 * (kw - 1) - pad_l) * input.stride);
  for (int ch = 0; ch < input.channels; ++ch) {
    const double* in = input.plane(ch);
    const double* k = kernel.plane(ch);
    for (int i = 0; i < kh; ++i) {
      const int r_lo = std::max(0, pad_t - i);
      const int r_hi = std::min(H, H + pad_t - i);
      for (int j = 0; j < kw; ++j) {
        const double kv = k[i * kw + j];
        if (kv == 0.0) continue;
        const int c_lo = std::max(0, pad_l - j);
        const int c_hi = std::min(W, W + pad_l - j);
        for (int r = r_lo; r < r_hi; ++r) {
          const double* src = in + (r + i - pad_t) * W + (c_lo + j - pad_l);
          double* dst = out.data.data() + static_cast<std::size_t>(r) * W + c_lo;
          for (int c = 0; c < c_hi - c_lo; ++c) dst[c] += kv * src[c];
        }
      }
    }
  }
  return out;
}

// Gradient of a same-mode correlation output w.r.t. the kernel:
//   g(ch, i, j) = sum_{r,c} out_grad(r, c) * input(ch, r+i-pad_t, c+j-pad_l)
inline FeatureMap xcorr2d_same_grad_kernel(const FeatureMap& input,
                                           const ScoreMap& out_grad,
                                           int kh, int kw) {
  require(out_grad.height == input.height && out_grad.width == input.width,
          "grad_kernel: dim mismatch");
  const int H = input.height, W = input.width;
  const int pad_t = (kh - 1) / 2, pad_l = (kw - 1) / 2;
  FeatureMap g(input.channels, kh, kw);
  for (int ch = 0; ch < input.channels; ++ch) {
    const double* in = input.plane(ch);
    double* gp = g.plane(ch);
    for (int i = 0; i < kh; ++i) {
      const int r_lo = std::max(0, pad_t - i);
      const int r_hi = std::min(H, H + pad_t - i);
      for (int j = 0; j < kw; ++j) {
        const int c_lo = std::max(0, pad_l - j);
        const int c_hi = std::min(W, W + pad_l - j);
        double acc = 0.0;
        for (int r = r_lo; r < r_hi; ++r) {
          const double* src = in + (r + i - pad_t) * W + (c_lo + j - pad_l);
          const double* og = out_grad.data.data() + static_cast<std::size_t>(r) * W + c_lo;
          for (int c = 0; c < c_hi - c_lo; ++c) acc += og[c] * src[c];
        }
        gp[i * kw + j] = acc;
      }
    }
  }
  return g;
}

// Gradient of a same-mode correlation output w.r.t. the input:
//   din(ch, r, c) = sum_{i,j} kernel(ch, i, j) * out_grad(r-i+pad_t, c-j+pad_l)
inline FeatureMap xcorr2d_same_grad_input(const FeatureMap& kernel,
                                          const ScoreMap& out_grad) {
  const int H = out_grad.height, W = out_grad.width;
  const int kh = kernel.height, kw = kernel.width;
  const int pad_t = (kh - 1) / 2, pad_l = (kw - 1) / 2;
  FeatureMap g(kernel.channels, H, W);
  for (int ch = 0; ch < kernel.channels; ++ch) {
    const double* k = kernel.plane(ch);
    double* gp = g.plane(ch);
    for (int i = 0; i < kh; ++i) {
      const int r_lo = std::max(0, pad_t - i);            // rows of out_grad
      const int r_hi = std::min(H, H + pad_t - i);
      for (int j = 0; j < kw; ++j) {
        const double kv = k[i * kw + j];
        if (kv == 0.0) continue;
        const int c_lo = std::max(0, pad_l - j);
        const int c_hi = std::min(W, W + pad_l - j);
        for (int r = r_lo; r < r_hi; ++r) {
          const double* og = out_grad.data.data() + static_cast<std::size_t>(r) * W + c_lo;
          double* dst = gp + (r + i - pad_t) * W + (c_lo + j - pad_l);
          for (int c = 0; c < c_hi - c_lo; ++c) dst[c] += kv * og[c];
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Bicubic interpolation (Catmull-Rom, a = -0.5) with edge-clamped sampling.
// ---------------------------------------------------------------------------

inline double cubic_catmull_rom(double p0, double p1, double p2, double p3, double t) {
  const double a0 = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
  const double a1 = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
  const double a2 = -0.5 * p0 + 0.5 * p2;
  return ((a0 * t + a1) * t + a2) * t + p1;
}

// Sample a plane at fractional cell coordinates (r, c), clamping out-of-range
// taps to the border cells.
inline double bicubic_sample_plane(const double* data, int h, int w, double r,
                                   double c) {
  const int ir = static_cast<int>(std::floor(r));
  const int ic = static_cast<int>(std::floor(c));
  const double tr = r - ir;
  const double tc = c - ic;
  double rows[4];
  for (int m = -1; m <= 2; ++m) {
    const int rr = std::clamp(ir + m, 0, h - 1);
    double cols[4];
    for (int n = -1; n <= 2; ++n) {
      const int cc = std::clamp(ic + n, 0, w - 1);
      cols[n + 1] = data[rr * w + cc];
    }
    rows[m + 1] = cubic_catmull_rom(cols[0], cols[1], cols[2], cols[3], tc);
  }
  return cubic_catmull_rom(rows[0], rows[1], rows[2], rows[3], tr);
}

inline double bicubic_sample(const ScoreMap& map, double r, double c) {
  return bicubic_sample_plane(map.data.data(), map.height, map.width, r, c);
}

// Bicubic resize covering the same image extent: stride and origin are
// rescaled so a peak keeps its image coordinates across the resize.
inline ScoreMap resize_cubic(const ScoreMap& map, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize_cubic: output dims must be >= 1");
  if (out_h == map.height && out_w == map.width) return map;
  const double scale_r = static_cast<double>(map.height) / out_h;
  const double scale_c = static_cast<double>(map.width) / out_w;
  ScoreMap out(out_h, out_w, map.stride * scale_r, map.origin_row, map.origin_col);
  for (int r = 0; r < out_h; ++r) {
    const double sr = (r + 0.5) * scale_r - 0.5;
    for (int c = 0; c < out_w; ++c) {
      const double sc = (c + 0.5) * scale_c - 0.5;
      out.at(r, c) = bicubic_sample(map, sr, sc);
    }
  }
  return out;
}

// Channel-wise bicubic resize of a FeatureMap (same extent convention).
inline FeatureMap resize_cubic(const FeatureMap& map, int out_h, int out_w) {
  require(out_h >= 1 && out_w >= 1, "resize_cubic: output dims must be >= 1");
  if (out_h == map.height && out_w == map.width) return map;
  const double scale_r = static_cast<double>(map.height) / out_h;
  const double scale_c = static_cast<double>(map.width) / out_w;
  FeatureMap out(map.channels, out_h, out_w, map.stride * scale_r);
  out.origin_row = map.origin_row;
  out.origin_col = map.origin_col;
  for (int ch = 0; ch < map.channels; ++ch) {
    const double* src = map.plane(ch);
    double* dst = out.plane(ch);
    for (int r = 0; r < out_h; ++r) {
      const double sr = (r + 0.5) * scale_r - 0.5;
      for (int c = 0; c < out_w; ++c) {
        const double sc = (c + 0.5) * scale_c - 0.5;
        dst[r * out_w + c] = bicubic_sample_plane(src, map.height, map.width, sr, sc);
      }
    }
  }
  return out;
}

// Resample src at the cell centers of ref's grid, matching image coordinates
// through both maps' origin/stride metadata. Output carries ref's geometry.
inline ScoreMap resample_like(const ScoreMap& src, const ScoreMap& ref) {
  ScoreMap out(ref.height, ref.width, ref.stride, ref.origin_row, ref.origin_col);
  for (int r = 0; r < ref.height; ++r) {
    for (int c = 0; c < ref.width; ++c) {
      auto [iy, ix] = ref.point_of(r, c);
      auto [sr, sc] = src.cell_of(iy, ix);
      out.at(r, c) = bicubic_sample(src, sr, sc);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian labels and penalty windows
// ---------------------------------------------------------------------------

// y(r, c) = exp(-((r-row)^2 + (c-col)^2) / (2 sigma^2)); peak value is 1
// when the center lies on a cell. Center may be fractional or off the map.
inline ScoreMap gaussian_label(int h, int w, double center_row, double center_col,
                               double sigma) {
  require(sigma > 0.0, "gaussian_label: sigma must be positive");
  ScoreMap out(h, w);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int r = 0; r < h; ++r) {
    const double dr = r - center_row;
    for (int c = 0; c < w; ++c) {
      const double dc = c - center_col;
      out.at(r, c) = std::exp(-(dr * dr + dc * dc) * inv);
    }
  }
  return out;
}

enum class WindowKind { gaussian, cosine };

// Centered window in [0, 1] with max 1 at the center cell (odd dims).
inline ScoreMap penalty_window(int h, int w, WindowKind kind) {
  ScoreMap out(h, w);
  const double cr = 0.5 * (h - 1), cc = 0.5 * (w - 1);
  if (kind == WindowKind::gaussian) {
    const double sr = std::max(1.0, h / 4.0), sc = std::max(1.0, w / 4.0);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double dr = (r - cr) / sr, dc = (c - cc) / sc;
        out.at(r, c) = std::exp(-0.5 * (dr * dr + dc * dc));
      }
  } else {
    for (int r = 0; r < h; ++r) {
      const double wr = h > 1 ? 0.5 * (1.0 - std::cos(2.0 * M_PI * r / (h - 1))) : 1.0;
      for (int c = 0; c < w; ++c) {
        const double wc = w > 1 ? 0.5 * (1.0 - std::cos(2.0 * M_PI * c / (w - 1))) : 1.0;
        out.at(r, c) = wr * wc;
      }
    }
  }
  return out;
}

// Documented blend: score * (1 - strength) + window * strength * score-scale,
// where score-scale is the score map's maximum. Strength 0 is a no-op.
inline ScoreMap blend_window(const ScoreMap& score, const ScoreMap& window,
                             double strength) {
  require(strength >= 0.0 && strength <= 1.0, "blend_window: strength in [0,1]");
  require(score.height == window.height && score.width == window.width,
          "blend_window: dim mismatch");
  ScoreMap out = score;
  if (strength == 0.0) return out;
  const double scale = std::max(0.0, score.max_value());
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = score.data[i] * (1.0 - strength) + window.data[i] * strength * scale;
  return out;
}

}  // namespace fusetrack
