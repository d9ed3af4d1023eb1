#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "fusetrack/feature_map.hpp"

namespace fusetrack {

// ---------------------------------------------------------------------------
// Image: grayscale or 3-channel real image with values in [0, 1].
// Pixel layout is interleaved: pixels[(r * width + c) * channels + ch].
// ---------------------------------------------------------------------------

struct Image {
  int height = 0;
  int width = 0;
  int channels = 1;  // 1 or 3
  std::vector<double> pixels;

  Image() = default;

  Image(int h, int w, int ch = 1, double fill = 0.0)
      : height(h), width(w), channels(ch),
        pixels(static_cast<std::size_t>(h) * w * ch, fill) {
    require(h > 0 && w > 0, "Image: dims must be positive");
    require(ch == 1 || ch == 3, "Image: channels must be 1 or 3");
  }

  double& at(int r, int c, int ch = 0) {
    return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
  double at(int r, int c, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }

  double mean() const {
    return std::accumulate(pixels.begin(), pixels.end(), 0.0) / pixels.size();
  }

  // Luma for 3-channel images, identity for grayscale.
  double gray(int r, int c) const {
    if (channels == 1) return at(r, c);
    return 0.299 * at(r, c, 0) + 0.587 * at(r, c, 1) + 0.114 * at(r, c, 2);
  }

  Image to_gray() const {
    if (channels == 1) return *this;
    Image out(height, width, 1);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) out.at(r, c) = gray(r, c);
    return out;
  }
};

// Bilinear sample at fractional pixel-index coordinates; (r, c) must lie in
// [0, h-1] x [0, w-1]. Exact pixel copy at integer coordinates.
inline double bilinear_sample(const Image& img, double r, double c, int ch = 0) {
  const int r0 = std::clamp(static_cast<int>(std::floor(r)), 0, img.height - 1);
  const int c0 = std::clamp(static_cast<int>(std::floor(c)), 0, img.width - 1);
  const int r1 = std::min(r0 + 1, img.height - 1);
  const int c1 = std::min(c0 + 1, img.width - 1);
  const double tr = r - r0, tc = c - c0;
  const double a = img.at(r0, c0, ch) + (img.at(r0, c1, ch) - img.at(r0, c0, ch)) * tc;
  const double b = img.at(r1, c0, ch) + (img.at(r1, c1, ch) - img.at(r1, c0, ch)) * tc;
  return a + (b - a) * tr;
}

// ---------------------------------------------------------------------------
// Warping primitives used by augmentation and synthesis.
// ---------------------------------------------------------------------------

// Shift content by (dx, dy) pixels and rotate by angle_deg about the image
// center; samples that leave the source are filled with the source mean.
inline Image warp_rigid(const Image& img, double dx, double dy, double angle_deg) {
  Image out(img.height, img.width, img.channels);
  const double fill = img.mean();
  const double cr = 0.5 * (img.height - 1), cc = 0.5 * (img.width - 1);
  const double a = angle_deg * M_PI / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      // inverse map: undo translation, then rotate backwards about center
      const double yr = (r - dy) - cr, xc = (c - dx) - cc;
      const double sr = ca * yr + sa * xc + cr;
      const double sc = -sa * yr + ca * xc + cc;
      for (int ch = 0; ch < img.channels; ++ch) {
        out.at(r, c, ch) =
            (sr < 0.0 || sr > img.height - 1 || sc < 0.0 || sc > img.width - 1)
                ? fill
                : bilinear_sample(img, sr, sc, ch);
      }
    }
  }
  return out;
}

// Separable 3-tap binomial blur ([1 2 1] / 4 per axis) with clamped borders.
inline Image blur3(const Image& img) {
  Image tmp(img.height, img.width, img.channels);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch) {
        const int cl = std::max(0, c - 1), cr = std::min(img.width - 1, c + 1);
        tmp.at(r, c, ch) =
            0.25 * img.at(r, cl, ch) + 0.5 * img.at(r, c, ch) + 0.25 * img.at(r, cr, ch);
      }
  Image out(img.height, img.width, img.channels);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch) {
        const int rl = std::max(0, r - 1), rh = std::min(img.height - 1, r + 1);
        out.at(r, c, ch) =
            0.25 * tmp.at(rl, c, ch) + 0.5 * tmp.at(r, c, ch) + 0.25 * tmp.at(rh, c, ch);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Netpbm I/O: binary PGM (P5) for grayscale, binary PPM (P6) for RGB,
// 8-bit, normalized to [0, 1] on load.
// ---------------------------------------------------------------------------

namespace detail {
inline int read_pnm_token(std::istream& is) {
  // skips whitespace and '#' comments
  for (;;) {
    int c = is.peek();
    if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
  int v = 0;
  is >> v;
  return v;
}
}  // namespace detail

inline Image load_image(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open image file: " + path);
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw std::runtime_error("unsupported image format (want binary PGM/PPM): " + path);
  const int channels = (m1 == '5') ? 1 : 3;
  const int w = detail::read_pnm_token(is);
  const int h = detail::read_pnm_token(is);
  const int maxval = detail::read_pnm_token(is);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw std::runtime_error("bad PNM header: " + path);
  is.get();  // single whitespace after maxval
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw std::runtime_error("truncated image data: " + path);
  Image img(h, w, channels);
  const double inv = 1.0 / maxval;
  for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] * inv;
  return img;
}

inline void save_image(const Image& img, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write image file: " + path);
  os << (img.channels == 1 ? "P5" : "P6") << "\n"
     << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> raw(img.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size()));
  if (!os) throw std::runtime_error("failed writing image data: " + path);
}

}  // namespace fusetrack
