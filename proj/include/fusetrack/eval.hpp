#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fusetrack/image.hpp"
#include "fusetrack/rng.hpp"
#include "fusetrack/tracker.hpp"

namespace fusetrack {

// Synthetic benchmark sequences with exact ground truth, sequence and result
// file I/O, tracking metrics, and the ablation runner.

// ---------------------------------------------------------------------------
// Sequences
// ---------------------------------------------------------------------------

struct Sequence {
  std::vector<Image> frames;
  std::vector<Rect> groundtruth;
  std::string name;
};

enum class SynthPreset { static_scene, distractor, deform, occlusion, zoom };

inline const char* preset_name(SynthPreset p) {
  switch (p) {
    case SynthPreset::static_scene: return "static";
    case SynthPreset::distractor: return "distractor";
    case SynthPreset::deform: return "deform";
    case SynthPreset::occlusion: return "occlusion";
    case SynthPreset::zoom: return "zoom";
  }
  return "?";
}

inline SynthPreset parse_preset(const std::string& s) {
  if (s == "static") return SynthPreset::static_scene;
  if (s == "distractor") return SynthPreset::distractor;
  if (s == "deform") return SynthPreset::deform;
  if (s == "occlusion") return SynthPreset::occlusion;
  if (s == "zoom") return SynthPreset::zoom;
  throw std::invalid_argument("unknown preset: " + s);
}

struct SynthSpec {
  SynthPreset preset = SynthPreset::static_scene;
  int frames = 50;
  int seed = 1;
  int image_size = 320;
  int target_size = 64;
  double motion_amplitude = 2.0;  // peak center wander, pixels
};

// Frames [start, end) of the occlusion preset during which the target is
// fully covered; empty for every other preset. Frame indices are 1-based.
inline std::pair<int, int> occlusion_window(const SynthSpec& spec) {
  if (spec.preset != SynthPreset::occlusion) return {0, 0};
  const int start = std::max(2, static_cast<int>(0.4 * spec.frames));
  const int len = std::max(5, spec.frames / 5);
  return {start, std::min(spec.frames + 1, start + len)};
}

namespace detail {

// Blobby value-noise texture: coarse random grid, bilinear upsample, mapped
// to [lo, hi].
inline Image make_noise_texture(int h, int w, Rng& rng, double lo, double hi,
                                int cell = 6) {
  const int gh = h / cell + 2, gw = w / cell + 2;
  std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
  for (double& x : grid) x = rng.uniform();
  Image out(h, w, 1);
  for (int r = 0; r < h; ++r) {
    const double gr = static_cast<double>(r) / cell;
    const int r0 = static_cast<int>(gr);
    const double tr = gr - r0;
    for (int c = 0; c < w; ++c) {
      const double gc = static_cast<double>(c) / cell;
      const int c0 = static_cast<int>(gc);
      const double tc = gc - c0;
      const double a = grid[r0 * gw + c0] + (grid[r0 * gw + c0 + 1] - grid[r0 * gw + c0]) * tc;
      const double b =
          grid[(r0 + 1) * gw + c0] + (grid[(r0 + 1) * gw + c0 + 1] - grid[(r0 + 1) * gw + c0]) * tc;
      out.at(r, c) = lo + (hi - lo) * (a + (b - a) * tr);
    }
  }
  return out;
}

// Paint the textured box onto the canvas; texture is stretched to the box.
inline void render_box(Image& canvas, const Image& texture, const Rect& box) {
  const int r_lo = std::max(0, static_cast<int>(std::ceil(box.y0() - 0.5)));
  const int r_hi = std::min(canvas.height - 1, static_cast<int>(std::floor(box.y1() - 0.5)));
  const int c_lo = std::max(0, static_cast<int>(std::ceil(box.x0() - 0.5)));
  const int c_hi = std::min(canvas.width - 1, static_cast<int>(std::floor(box.x1() - 0.5)));
  for (int r = r_lo; r <= r_hi; ++r) {
    const double v = (r + 0.5 - box.y0()) / box.h;
    const double tr = std::clamp(v * (texture.height - 1), 0.0, texture.height - 1.0);
    for (int c = c_lo; c <= c_hi; ++c) {
      const double u = (c + 0.5 - box.x0()) / box.w;
      const double tc = std::clamp(u * (texture.width - 1), 0.0, texture.width - 1.0);
      canvas.at(r, c) = bilinear_sample(texture, tr, tc);
    }
  }
}

}  // namespace detail

// Deterministic textured scene with exact ground truth by construction.
inline Sequence gen_synthetic(const SynthSpec& spec) {
  require(spec.frames >= 2, "gen_synthetic: need at least 2 frames");
  require(spec.image_size > 0 && spec.target_size > 0, "gen_synthetic: sizes positive");

  Rng rng(static_cast<std::uint64_t>(spec.seed) * 0x9e3779b97f4a7c15ULL +
          static_cast<std::uint64_t>(spec.preset) + 11);
  const int W = spec.image_size, H = spec.image_size;
  const double ts = spec.target_size;

  const Image background = detail::make_noise_texture(H, W, rng, 0.25, 0.55);
  const Image target_tex =
      detail::make_noise_texture(spec.target_size, spec.target_size, rng, 0.0, 1.0, 4);
  const Image occluder_tex = detail::make_noise_texture(
      static_cast<int>(2.0 * ts), static_cast<int>(2.0 * ts), rng, 0.35, 0.85);

  const double phase1 = rng.uniform(0.0, 2.0 * M_PI);
  const double phase2 = rng.uniform(0.0, 2.0 * M_PI);
  const double base_cx = 0.5 * W + rng.uniform(-8.0, 8.0);
  const double base_cy = 0.5 * H + rng.uniform(-8.0, 8.0);
  const auto [occ_start, occ_end] = occlusion_window(spec);

  Sequence seq;
  seq.name = std::string(preset_name(spec.preset)) + "_" + std::to_string(spec.seed);

  for (int t = 1; t <= spec.frames; ++t) {
    Rect box{base_cx, base_cy, ts, ts};
    const double wander = spec.motion_amplitude;
    switch (spec.preset) {
      case SynthPreset::static_scene:
        break;
      case SynthPreset::distractor:
      case SynthPreset::occlusion:
        box.cx += wander * std::sin(0.21 * t + phase1);
        box.cy += wander * std::cos(0.17 * t + phase2);
        break;
      case SynthPreset::deform: {
        const double pulse = 1.0 + 0.35 * std::sin(2.0 * M_PI * t / 20.0);
        box.w = ts * pulse;
        box.h = ts / pulse;
        box.cx += wander * std::sin(0.21 * t + phase1);
        box.cy += wander * std::cos(0.17 * t + phase2);
        break;
      }
      case SynthPreset::zoom: {
        const double s = 1.0 + 0.006 * (t - 1);
        box.w = ts * s;
        box.h = ts * s;
        break;
      }
    }
    // ground truth never leaves the image
    box.cx = std::clamp(box.cx, 0.5 * box.w, W - 0.5 * box.w);
    box.cy = std::clamp(box.cy, 0.5 * box.h, H - 0.5 * box.h);

    Image frame = background;
    if (spec.preset == SynthPreset::distractor) {
      // same-texture distractor sweeping horizontally past the target
      const double u = static_cast<double>(t - 1) / (spec.frames - 1);
      const Rect dbox{(-0.6 + 2.2 * u) * W, box.cy - 1.15 * ts, ts, ts};
      detail::render_box(frame, target_tex, dbox);
    }
    detail::render_box(frame, target_tex, box);
    if (spec.preset == SynthPreset::occlusion && t >= occ_start && t < occ_end) {
      const Rect obox{box.cx, box.cy, 2.1 * ts, 2.1 * ts};
      detail::render_box(frame, occluder_tex, obox);
    }
    seq.frames.push_back(std::move(frame));
    seq.groundtruth.push_back(box);
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Sequence directory I/O: frames/%08d.pgm + groundtruth.txt (x,y,w,h top-left)
// ---------------------------------------------------------------------------

inline void save_sequence(const Sequence& seq, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");
  std::ofstream gt(fs::path(dir) / "groundtruth.txt");
  if (!gt) throw std::runtime_error("cannot write groundtruth.txt under " + dir);
  char buf[160];
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "frames/%08zu.pgm", i + 1);
    save_image(seq.frames[i], (fs::path(dir) / buf).string());
    const Rect& b = seq.groundtruth[i];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f\n", b.x0(), b.y0(), b.w, b.h);
    gt << buf;
  }
}

inline Sequence load_sequence(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path gt_path = fs::path(dir) / "groundtruth.txt";
  std::ifstream gt(gt_path);
  if (!gt) throw std::runtime_error("missing ground truth file: " + gt_path.string());
  Sequence seq;
  seq.name = fs::path(dir).filename().string();
  std::string line;
  while (std::getline(gt, line)) {
    if (line.empty()) continue;
    double x, y, w, h;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &x, &y, &w, &h) != 4)
      throw std::runtime_error("malformed groundtruth line in " + gt_path.string() +
                               ": " + line);
    seq.groundtruth.push_back(Rect::from_tlwh(x, y, w, h));
  }
  if (seq.groundtruth.size() < 2)
    throw std::runtime_error("sequence needs at least 2 annotated frames: " + dir);
  char buf[32];
  for (std::size_t i = 0; i < seq.groundtruth.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%08zu", i + 1);
    const fs::path base = fs::path(dir) / "frames" / buf;
    fs::path p = base;
    p += ".pgm";
    if (!fs::exists(p)) {
      p = base;
      p += ".ppm";
    }
    if (!fs::exists(p))
      throw std::runtime_error("missing frame image: " + base.string() + ".pgm");
    seq.frames.push_back(load_image(p.string()));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Success AUC with the 101-point convention: mean over t in {0, 0.01, .., 1}
// of the fraction of frames with iou strictly greater than t.
inline double success_auc(const std::vector<double>& ious) {
  require(!ious.empty(), "success_auc: empty iou list");
  double acc = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double t = k / 100.0;
    int hits = 0;
    for (double v : ious)
      if (v > t) ++hits;
    acc += static_cast<double>(hits) / ious.size();
  }
  return acc / 101.0;
}

// Fraction of frames whose predicted center is within radius_px (inclusive)
// of ground truth.
inline double precision_at(const std::vector<std::pair<double, double>>& centers_pred,
                           const std::vector<std::pair<double, double>>& centers_gt,
                           double radius_px) {
  require(centers_pred.size() == centers_gt.size() && !centers_pred.empty(),
          "precision_at: length mismatch");
  require(radius_px > 0.0, "precision_at: radius must be positive");
  int hits = 0;
  for (std::size_t i = 0; i < centers_pred.size(); ++i) {
    const double dx = centers_pred[i].first - centers_gt[i].first;
    const double dy = centers_pred[i].second - centers_gt[i].second;
    if (std::sqrt(dx * dx + dy * dy) <= radius_px) ++hits;
  }
  return static_cast<double>(hits) / centers_pred.size();
}

// ---------------------------------------------------------------------------
// Tracking runs and result files
// ---------------------------------------------------------------------------

struct FrameResult {
  int frame = 0;
  Rect box;
  double score = 0.0;
  bool distractor = false;
  bool absent = false;
};

struct TrackRunResult {
  std::vector<FrameResult> frames;
  std::vector<double> ious;
  double auc = 0.0;
  double precision = 0.0;
  double mean_iou = 0.0;
  double fps = 0.0;  // measured wall clock; reported on stdout, not in files
};

inline TrackRunResult run_tracker(const Sequence& seq, const TrackerConfig& cfg,
                                  int seed, double precision_radius = 20.0) {
  require(seq.frames.size() >= 2 && seq.frames.size() == seq.groundtruth.size(),
          "run_tracker: bad sequence");
  TrackRunResult out;
  TrackerState ts = tracker_init(seq.frames[0], seq.groundtruth[0], cfg, seed);
  out.frames.push_back({1, seq.groundtruth[0], 1.0, false, false});

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    const TargetState st = tracker_step(ts, seq.frames[i], cfg);
    out.frames.push_back({static_cast<int>(i + 1), st.box, st.confidence,
                          ts.distractor_present, ts.target_absent});
  }
  const auto t1 = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t1 - t0).count();
  out.fps = secs > 0.0 ? (seq.frames.size() - 1) / secs : 0.0;

  std::vector<std::pair<double, double>> pc, gc;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    out.ious.push_back(iou(out.frames[i].box, seq.groundtruth[i]));
    pc.emplace_back(out.frames[i].box.cx, out.frames[i].box.cy);
    gc.emplace_back(seq.groundtruth[i].cx, seq.groundtruth[i].cy);
  }
  out.auc = success_auc(out.ious);
  out.precision = precision_at(pc, gc, precision_radius);
  double acc = 0.0;
  for (double v : out.ious) acc += v;
  out.mean_iou = acc / out.ious.size();
  return out;
}

// JSON-shaped results file with fixed field order so identical runs produce
// identical bytes. The fps slot is pinned to 0 in files (wall-clock timing
// lives on stdout and in the bench command).
inline void write_results(const TrackRunResult& res, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write results file: " + path);
  char buf[256];
  os << "{\n  \"frames\": [\n";
  for (std::size_t i = 0; i < res.frames.size(); ++i) {
    const FrameResult& f = res.frames[i];
    std::snprintf(buf, sizeof(buf),
                  "    {\"frame\": %d, \"box\": [%.6f, %.6f, %.6f, %.6f], "
                  "\"score\": %.6f, \"flags\": [",
                  f.frame, f.box.x0(), f.box.y0(), f.box.w, f.box.h, f.score);
    os << buf;
    bool first = true;
    if (f.distractor) {
      os << "\"distractor\"";
      first = false;
    }
    if (f.absent) os << (first ? "" : ", ") << "\"absent\"";
    os << "]}" << (i + 1 < res.frames.size() ? "," : "") << "\n";
  }
  std::snprintf(buf, sizeof(buf),
                "  ],\n  \"summary\": {\"auc\": %.6f, \"precision\": %.6f, "
                "\"mean_iou\": %.6f, \"fps\": %.6f}\n}\n",
                res.auc, res.precision, res.mean_iou, 0.0);
  os << buf;
}

// ---------------------------------------------------------------------------
// Ablation runner
// ---------------------------------------------------------------------------

enum class AblationGroup { G1, G2, G3, G4 };

inline AblationGroup parse_group(const std::string& s) {
  if (s == "G1" || s == "g1") return AblationGroup::G1;
  if (s == "G2" || s == "g2") return AblationGroup::G2;
  if (s == "G3" || s == "g3") return AblationGroup::G3;
  if (s == "G4" || s == "g4") return AblationGroup::G4;
  throw std::invalid_argument("unknown ablation group: " + s);
}

struct AblationRow {
  std::string setting;
  double mean_iou = 0.0;
  double auc = 0.0;
  double precision = 0.0;
};

namespace detail {

inline AblationRow ablation_row(const std::string& setting, const TrackerConfig& cfg,
                                const std::vector<SynthSpec>& suite) {
  AblationRow row;
  row.setting = setting;
  for (const SynthSpec& spec : suite) {
    const Sequence seq = gen_synthetic(spec);
    const TrackRunResult res = run_tracker(seq, cfg, spec.seed);
    row.mean_iou += res.mean_iou;
    row.auc += res.auc;
    row.precision += res.precision;
  }
  const double n = static_cast<double>(suite.size());
  row.mean_iou /= n;
  row.auc /= n;
  row.precision /= n;
  return row;
}

}  // namespace detail

// G1 sweeps the fusion weight (short-term updates off), G2 toggles the
// attention gates, G3 sweeps the template update interval, G4 disables
// fusion while keeping the template updater.
inline std::vector<AblationRow> run_ablation(AblationGroup group,
                                             const TrackerConfig& base_cfg,
                                             const std::vector<SynthSpec>& suite) {
  require(!suite.empty(), "run_ablation: empty suite");
  std::vector<AblationRow> rows;
  char label[64];
  switch (group) {
    case AblationGroup::G1: {
      for (double lam : {0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0}) {
        TrackerConfig cfg = base_cfg;
        cfg.lambda_fusion = lam;
        cfg.use_short_term = false;
        std::snprintf(label, sizeof(label), "lambda=%.1f", lam);
        rows.push_back(detail::ablation_row(label, cfg, suite));
      }
      break;
    }
    case AblationGroup::G2: {
      for (bool att : {false, true}) {
        TrackerConfig cfg = base_cfg;
        cfg.use_attention = att;
        cfg.use_short_term = false;
        rows.push_back(detail::ablation_row(att ? "attention=on" : "attention=off",
                                            cfg, suite));
      }
      break;
    }
    case AblationGroup::G3: {
      for (int t : {1, 5, 10}) {
        TrackerConfig cfg = base_cfg;
        cfg.use_short_term = true;
        cfg.template_interval = t;
        std::snprintf(label, sizeof(label), "T=%d", t);
        rows.push_back(detail::ablation_row(label, cfg, suite));
      }
      break;
    }
    case AblationGroup::G4: {
      TrackerConfig cfg = base_cfg;
      cfg.lambda_fusion = 0.0;
      cfg.use_short_term = true;
      rows.push_back(detail::ablation_row("fusion=off,T=5", cfg, suite));
      break;
    }
  }
  return rows;
}

// Aligned text table followed by a one-line machine-readable JSON block.
inline std::string format_ablation_table(AblationGroup group,
                                         const std::vector<AblationRow>& rows) {
  const char* gname = group == AblationGroup::G1   ? "G1"
                      : group == AblationGroup::G2 ? "G2"
                      : group == AblationGroup::G3 ? "G3"
                                                   : "G4";
  std::string out = std::string("group ") + gname + "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-18s %10s %10s %10s\n", "setting", "mean_iou",
                "auc", "precision");
  out += buf;
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-18s %10.4f %10.4f %10.4f\n", r.setting.c_str(),
                  r.mean_iou, r.auc, r.precision);
    out += buf;
  }
  out += "# json: {\"group\": \"" + std::string(gname) + "\", \"rows\": [";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf),
                  "{\"setting\": \"%s\", \"mean_iou\": %.6f, \"auc\": %.6f, "
                  "\"precision\": %.6f}%s",
                  rows[i].setting.c_str(), rows[i].mean_iou, rows[i].auc,
                  rows[i].precision, i + 1 < rows.size() ? ", " : "");
    out += buf;
  }
  out += "]}\n";
  return out;
}

}  // namespace fusetrack
