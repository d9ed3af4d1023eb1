#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "fusetrack/feature_map.hpp"
#include "fusetrack/rng.hpp"

namespace fusetrack {

// Online classification subnet: 1x1 compression with ReLU to 64 channels,
// channel gate (GAP -> FC -> ReLU -> FC -> sigmoid), spatial gate (softmax
// over positions of the channel-mean map, applied residually), and a final
// 4x4 single-output-channel correlation filter. Compression and attention
// are fine-tuned on the first frame only; the filter is re-solved online.

struct RegLambda {
  double compress = 0.0;
  double attention = 0.0;
  double filter = 1e-2;
};

struct ClassifierParams {
  static constexpr int kChannels = 64;
  static constexpr int kReduced = 16;  // squeeze ratio 4
  static constexpr int kFilter = 4;

  int in_channels = 0;
  bool use_attention = true;

  std::vector<double> compress_w;  // [kChannels][in_channels]
  std::vector<double> compress_b;  // [kChannels]
  std::vector<double> fc1_w;       // [kReduced][kChannels]
  std::vector<double> fc1_b;       // [kReduced]
  std::vector<double> fc2_w;       // [kChannels][kReduced]
  std::vector<double> fc2_b;       // [kChannels]
  std::vector<double> filter_w;    // [kChannels][kFilter][kFilter]
  RegLambda reg_lambda;

  static constexpr int filter_dim() { return kChannels * kFilter * kFilter; }
};

// Seeded initialization: scaled normal draws for the trainable blocks
// (variance 2 / fan_in), small positive biases, zero filter so the first
// online solve starts from a well-posed quadratic.
inline ClassifierParams init_classifier(int in_channels, int seed,
                                        bool use_attention = true) {
  require(in_channels > 0, "init_classifier: in_channels must be positive");
  ClassifierParams p;
  p.in_channels = in_channels;
  p.use_attention = use_attention;
  Rng rng(static_cast<std::uint64_t>(seed) * 0x2545f4914f6cdd1dULL + 7);

  auto fill_normal = [&rng](std::vector<double>& v, std::size_t n, double stddev) {
    v.resize(n);
    for (double& x : v) x = rng.normal(0.0, stddev);
  };
  constexpr int C = ClassifierParams::kChannels;
  constexpr int R = ClassifierParams::kReduced;
  fill_normal(p.compress_w, static_cast<std::size_t>(C) * in_channels,
              std::sqrt(2.0 / in_channels));
  p.compress_b.assign(C, 0.1);
  fill_normal(p.fc1_w, static_cast<std::size_t>(R) * C, std::sqrt(2.0 / C));
  p.fc1_b.assign(R, 0.1);
  fill_normal(p.fc2_w, static_cast<std::size_t>(C) * R, std::sqrt(2.0 / R));
  p.fc2_b.assign(C, 0.0);
  p.filter_w.assign(ClassifierParams::filter_dim(), 0.0);
  return p;
}

struct AttentionState {
  std::vector<double> channel_scale;  // 64 sigmoid gates
  ScoreMap spatial_weight;            // softmax over positions, sums to 1
};

namespace detail {

// Everything the backward pass needs from one forward evaluation.
struct ClassifierTrace {
  FeatureMap pre;            // compression preactivation
  FeatureMap rectified;      // U = relu(pre)
  std::vector<double> gap;   // per-channel mean of U
  std::vector<double> z1;    // fc1 preactivation
  std::vector<double> hid;   // relu(z1)
  std::vector<double> z2;    // fc2 preactivation
  std::vector<double> scale; // sigmoid(z2)
  std::vector<double> smax;  // spatial softmax (size H*W)
  FeatureMap gated;          // V = U * scale (per channel)
  FeatureMap stack;          // Z = V * (1 + N * A)
  ScoreMap score;
};

inline void classifier_forward(const FeatureMap& feat, const ClassifierParams& p,
                               ClassifierTrace& t) {
  require(feat.channels == p.in_channels, "classifier: channel mismatch");
  constexpr int C = ClassifierParams::kChannels;
  constexpr int R = ClassifierParams::kReduced;
  const int H = feat.height, W = feat.width, N = H * W;

  // 1x1 compression + ReLU
  t.pre = FeatureMap(C, H, W, feat.stride);
  t.pre.origin_row = feat.origin_row;
  t.pre.origin_col = feat.origin_col;
  for (int k = 0; k < C; ++k) {
    double* dst = t.pre.plane(k);
    const double* wrow = p.compress_w.data() + static_cast<std::size_t>(k) * p.in_channels;
    const double b = p.compress_b[k];
    for (int n = 0; n < N; ++n) dst[n] = b;
    for (int i = 0; i < p.in_channels; ++i) {
      const double wv = wrow[i];
      const double* src = feat.plane(i);
      for (int n = 0; n < N; ++n) dst[n] += wv * src[n];
    }
  }
  t.rectified = t.pre;
  for (double& x : t.rectified.data) x = std::max(0.0, x);

  if (!p.use_attention) {
    t.stack = t.rectified;
    t.scale.assign(C, 1.0);
    t.smax.assign(static_cast<std::size_t>(N), 1.0 / N);
  } else {
    // channel gate
    t.gap.assign(C, 0.0);
    for (int k = 0; k < C; ++k) {
      const double* u = t.rectified.plane(k);
      double acc = 0.0;
      for (int n = 0; n < N; ++n) acc += u[n];
      t.gap[k] = acc / N;
    }
    t.z1.assign(R, 0.0);
    for (int j = 0; j < R; ++j) {
      double acc = p.fc1_b[j];
      const double* wrow = p.fc1_w.data() + static_cast<std::size_t>(j) * C;
      for (int k = 0; k < C; ++k) acc += wrow[k] * t.gap[k];
      t.z1[j] = acc;
    }
    t.hid = t.z1;
    for (double& x : t.hid) x = std::max(0.0, x);
    t.z2.assign(C, 0.0);
    t.scale.assign(C, 0.0);
    for (int k = 0; k < C; ++k) {
      double acc = p.fc2_b[k];
      const double* wrow = p.fc2_w.data() + static_cast<std::size_t>(k) * R;
      for (int j = 0; j < R; ++j) acc += wrow[j] * t.hid[j];
      t.z2[k] = acc;
      t.scale[k] = 1.0 / (1.0 + std::exp(-acc));
    }
    t.gated = t.rectified;
    for (int k = 0; k < C; ++k) {
      double* v = t.gated.plane(k);
      const double s = t.scale[k];
      for (int n = 0; n < N; ++n) v[n] *= s;
    }

    // spatial gate: softmax of the channel-mean map, residual application
    std::vector<double> mean(static_cast<std::size_t>(N), 0.0);
    for (int k = 0; k < C; ++k) {
      const double* v = t.gated.plane(k);
      for (int n = 0; n < N; ++n) mean[n] += v[n];
    }
    double mmax = -1e300;
    for (double& x : mean) {
      x /= C;
      mmax = std::max(mmax, x);
    }
    t.smax.assign(static_cast<std::size_t>(N), 0.0);
    double denom = 0.0;
    for (int n = 0; n < N; ++n) {
      t.smax[n] = std::exp(mean[n] - mmax);
      denom += t.smax[n];
    }
    for (double& x : t.smax) x /= denom;

    t.stack = t.gated;
    for (int k = 0; k < C; ++k) {
      double* z = t.stack.plane(k);
      for (int n = 0; n < N; ++n) z[n] *= 1.0 + N * t.smax[n];
    }
  }

  FeatureMap filter(C, ClassifierParams::kFilter, ClassifierParams::kFilter);
  filter.data = p.filter_w;
  t.score = xcorr2d(t.stack, filter, CorrMode::same);
}

}  // namespace detail

// Forward evaluation: returns the score map (same spatial dims as the input,
// geometry carried through) and the attention state that produced it.
inline std::pair<ScoreMap, AttentionState> forward(const FeatureMap& feat,
                                                   const ClassifierParams& p) {
  detail::ClassifierTrace t;
  detail::classifier_forward(feat, p, t);
  AttentionState att;
  att.channel_scale = t.scale;
  att.spatial_weight = ScoreMap(feat.height, feat.width, t.smax, feat.stride,
                                feat.origin_row, feat.origin_col);
  return {std::move(t.score), std::move(att)};
}

// The attended feature stack Z the filter correlates with. Depends only on
// the frozen compression/attention blocks, so callers may cache it per input.
inline FeatureMap attend_stack(const FeatureMap& feat, const ClassifierParams& p) {
  detail::ClassifierTrace t;
  detail::classifier_forward(feat, p, t);
  return std::move(t.stack);
}

struct ClassifierGradients {
  std::vector<double> compress_w, compress_b;
  std::vector<double> fc1_w, fc1_b;
  std::vector<double> fc2_w, fc2_b;
  std::vector<double> filter_w;

  void resize_like(const ClassifierParams& p) {
    compress_w.assign(p.compress_w.size(), 0.0);
    compress_b.assign(p.compress_b.size(), 0.0);
    fc1_w.assign(p.fc1_w.size(), 0.0);
    fc1_b.assign(p.fc1_b.size(), 0.0);
    fc2_w.assign(p.fc2_w.size(), 0.0);
    fc2_b.assign(p.fc2_b.size(), 0.0);
    filter_w.assign(p.filter_w.size(), 0.0);
  }
};

namespace detail {

inline void accumulate_axpy(std::vector<double>& dst, const std::vector<double>& src,
                            double a) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
}

// Gradient of weight * ||score - label||^2 through the whole pipeline,
// accumulated into g (which must be sized already).
inline void accumulate_data_gradients(const FeatureMap& feat, const ScoreMap& label,
                                      double weight, const ClassifierParams& p,
                                      const ClassifierTrace& t,
                                      ClassifierGradients& g) {
  constexpr int C = ClassifierParams::kChannels;
  constexpr int R = ClassifierParams::kReduced;
  constexpr int K = ClassifierParams::kFilter;
  require(label.height == t.score.height && label.width == t.score.width,
          "gradients: label dim mismatch");
  const int H = feat.height, W = feat.width, N = H * W;

  ScoreMap dscore(t.score.height, t.score.width);
  for (std::size_t i = 0; i < dscore.data.size(); ++i)
    dscore.data[i] = 2.0 * weight * (t.score.data[i] - label.data[i]);

  // filter block
  const FeatureMap dfilter = xcorr2d_same_grad_kernel(t.stack, dscore, K, K);
  for (std::size_t i = 0; i < g.filter_w.size(); ++i) g.filter_w[i] += dfilter.data[i];

  FeatureMap filter(C, K, K);
  filter.data = p.filter_w;
  const FeatureMap dstack = xcorr2d_same_grad_input(filter, dscore);

  FeatureMap drect(C, H, W);  // gradient into U = relu(pre)
  if (!p.use_attention) {
    drect.data = dstack.data;
  } else {
    // spatial gate
    std::vector<double> dgated(static_cast<std::size_t>(C) * N);
    std::vector<double> dsmax(static_cast<std::size_t>(N), 0.0);
    for (int k = 0; k < C; ++k) {
      const double* dz = dstack.plane(k);
      const double* v = t.gated.plane(k);
      double* dv = dgated.data() + static_cast<std::size_t>(k) * N;
      for (int n = 0; n < N; ++n) {
        dv[n] = dz[n] * (1.0 + N * t.smax[n]);
        dsmax[n] += dz[n] * v[n] * N;
      }
    }
    double dot = 0.0;
    for (int n = 0; n < N; ++n) dot += t.smax[n] * dsmax[n];
    for (int n = 0; n < N; ++n) {
      const double dmean = t.smax[n] * (dsmax[n] - dot) / C;
      for (int k = 0; k < C; ++k) dgated[static_cast<std::size_t>(k) * N + n] += dmean;
    }

    // channel gate
    std::vector<double> dscale(C, 0.0);
    for (int k = 0; k < C; ++k) {
      const double* dv = dgated.data() + static_cast<std::size_t>(k) * N;
      const double* u = t.rectified.plane(k);
      double* du = drect.plane(k);
      const double s = t.scale[k];
      double acc = 0.0;
      for (int n = 0; n < N; ++n) {
        acc += dv[n] * u[n];
        du[n] = dv[n] * s;
      }
      dscale[k] = acc;
    }

    // FC path
    std::vector<double> dz2(C), dhid(R, 0.0), dz1(R), dgap(C, 0.0);
    for (int k = 0; k < C; ++k) {
      dz2[k] = dscale[k] * t.scale[k] * (1.0 - t.scale[k]);
      g.fc2_b[k] += dz2[k];
      double* grow = g.fc2_w.data() + static_cast<std::size_t>(k) * R;
      const double* wrow = p.fc2_w.data() + static_cast<std::size_t>(k) * R;
      for (int j = 0; j < R; ++j) {
        grow[j] += dz2[k] * t.hid[j];
        dhid[j] += wrow[j] * dz2[k];
      }
    }
    for (int j = 0; j < R; ++j) {
      dz1[j] = t.z1[j] > 0.0 ? dhid[j] : 0.0;
      g.fc1_b[j] += dz1[j];
      double* grow = g.fc1_w.data() + static_cast<std::size_t>(j) * C;
      const double* wrow = p.fc1_w.data() + static_cast<std::size_t>(j) * C;
      for (int k = 0; k < C; ++k) {
        grow[k] += dz1[j] * t.gap[k];
        dgap[k] += wrow[k] * dz1[j];
      }
    }
    for (int k = 0; k < C; ++k) {
      const double per_cell = dgap[k] / N;
      double* du = drect.plane(k);
      for (int n = 0; n < N; ++n) du[n] += per_cell;
    }
  }

  // compression block
  for (int k = 0; k < C; ++k) {
    const double* prek = t.pre.plane(k);
    double* du = drect.plane(k);
    double* grow = g.compress_w.data() + static_cast<std::size_t>(k) * p.in_channels;
    double bacc = 0.0;
    for (int n = 0; n < N; ++n) {
      if (prek[n] <= 0.0) du[n] = 0.0;
      bacc += du[n];
    }
    g.compress_b[k] += bacc;
    for (int i = 0; i < p.in_channels; ++i) {
      const double* x = feat.plane(i);
      double acc = 0.0;
      for (int n = 0; n < N; ++n) acc += du[n] * x[n];
      grow[i] += acc;
    }
  }
}

inline void accumulate_reg_gradients(const ClassifierParams& p, ClassifierGradients& g) {
  accumulate_axpy(g.compress_w, p.compress_w, 2.0 * p.reg_lambda.compress);
  accumulate_axpy(g.fc1_w, p.fc1_w, 2.0 * p.reg_lambda.attention);
  accumulate_axpy(g.fc2_w, p.fc2_w, 2.0 * p.reg_lambda.attention);
  accumulate_axpy(g.filter_w, p.filter_w, 2.0 * p.reg_lambda.filter);
}

inline double squared_norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

}  // namespace detail

inline double regularization_term(const ClassifierParams& p) {
  return p.reg_lambda.compress * detail::squared_norm(p.compress_w) +
         p.reg_lambda.attention *
             (detail::squared_norm(p.fc1_w) + detail::squared_norm(p.fc2_w)) +
         p.reg_lambda.filter * detail::squared_norm(p.filter_w);
}

inline double classifier_data_loss(const FeatureMap& feat, const ScoreMap& label,
                                   double weight, const ClassifierParams& p) {
  detail::ClassifierTrace t;
  detail::classifier_forward(feat, p, t);
  require(label.height == t.score.height && label.width == t.score.width,
          "loss: label dim mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < t.score.data.size(); ++i) {
    const double d = t.score.data[i] - label.data[i];
    acc += d * d;
  }
  return weight * acc;
}

// Exact analytic gradient of weight * ||forward(feat) - label||^2 plus the
// per-block regularization, with respect to every parameter block.
inline ClassifierGradients gradients(const FeatureMap& feat, const ScoreMap& label,
                                     double weight, const ClassifierParams& p) {
  require(weight >= 0.0, "gradients: weight must be nonnegative");
  ClassifierGradients g;
  g.resize_like(p);
  detail::ClassifierTrace t;
  detail::classifier_forward(feat, p, t);
  detail::accumulate_data_gradients(feat, label, weight, p, t, g);
  detail::accumulate_reg_gradients(p, g);
  return g;
}

struct TrainSample {
  FeatureMap feat;
  ScoreMap label;
  double weight = 1.0;
};

namespace detail {

inline void apply_step(ClassifierParams& p, const ClassifierGradients& g, double lr) {
  accumulate_axpy(p.compress_w, g.compress_w, -lr);
  accumulate_axpy(p.compress_b, g.compress_b, -lr);
  accumulate_axpy(p.fc1_w, g.fc1_w, -lr);
  accumulate_axpy(p.fc1_b, g.fc1_b, -lr);
  accumulate_axpy(p.fc2_w, g.fc2_w, -lr);
  accumulate_axpy(p.fc2_b, g.fc2_b, -lr);
  accumulate_axpy(p.filter_w, g.filter_w, -lr);
}

}  // namespace detail

inline double total_loss(const std::vector<TrainSample>& samples,
                         const ClassifierParams& p) {
  double acc = regularization_term(p);
  for (const TrainSample& s : samples)
    acc += classifier_data_loss(s.feat, s.label, s.weight, p);
  return acc;
}

// First-frame fine-tuning: gradient descent on the summed L2 objective over
// all parameter blocks, with backtracking halving of the learning rate on any
// loss increase so the returned loss never exceeds the starting loss.
inline ClassifierParams finetune_init(const std::vector<TrainSample>& samples,
                                      const ClassifierParams& start, int steps,
                                      double lr) {
  require(!samples.empty(), "finetune_init: need at least one sample");
  require(steps >= 1, "finetune_init: steps must be >= 1");
  require(lr > 0.0, "finetune_init: lr must be positive");

  ClassifierParams p = start;
  double current = total_loss(samples, p);
  double rate = lr;

  for (int step = 0; step < steps; ++step) {
    ClassifierGradients g;
    g.resize_like(p);
    detail::ClassifierTrace t;
    for (const TrainSample& s : samples) {
      detail::classifier_forward(s.feat, p, t);
      detail::accumulate_data_gradients(s.feat, s.label, s.weight, p, t, g);
    }
    detail::accumulate_reg_gradients(p, g);

    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      ClassifierParams trial = p;
      detail::apply_step(trial, g, rate);
      const double trial_loss = total_loss(samples, trial);
      if (trial_loss <= current) {
        p = std::move(trial);
        current = trial_loss;
        accepted = true;
        break;
      }
      rate *= 0.5;
    }
    if (!accepted) break;  // gradient no longer yields descent at any rate
  }
  return p;
}

// 64-bit FNV-1a over the frozen blocks; lets callers key caches of the
// attended stack, which depends on everything except the filter.
inline std::uint64_t frozen_signature(const ClassifierParams& p) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* ptr, std::size_t bytes) {
    const unsigned char* b = static_cast<const unsigned char*>(ptr);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  auto mix_vec = [&mix](const std::vector<double>& v) {
    mix(v.data(), v.size() * sizeof(double));
  };
  mix_vec(p.compress_w);
  mix_vec(p.compress_b);
  mix_vec(p.fc1_w);
  mix_vec(p.fc1_b);
  mix_vec(p.fc2_w);
  mix_vec(p.fc2_b);
  const unsigned char att = p.use_attention ? 1 : 0;
  mix(&att, 1);
  return h;
}

// ---------------------------------------------------------------------------
// Parameter snapshot serialization: versioned header + raw blocks.
// ---------------------------------------------------------------------------

inline void save_classifier(const ClassifierParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write parameter file: " + path);
  const char magic[4] = {'F', 'T', 'C', 'P'};
  const std::uint32_t version = 1;
  os.write(magic, 4);
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::int32_t in_ch = p.in_channels;
  const std::uint8_t att = p.use_attention ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&in_ch), sizeof(in_ch));
  os.write(reinterpret_cast<const char*>(&att), sizeof(att));
  os.write(reinterpret_cast<const char*>(&p.reg_lambda), sizeof(p.reg_lambda));
  auto put = [&os](const std::vector<double>& v) {
    const std::uint64_t n = v.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
  };
  put(p.compress_w);
  put(p.compress_b);
  put(p.fc1_w);
  put(p.fc1_b);
  put(p.fc2_w);
  put(p.fc2_b);
  put(p.filter_w);
  if (!os) throw std::runtime_error("failed writing parameter file: " + path);
}

inline ClassifierParams load_classifier(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open parameter file: " + path);
  char magic[4];
  std::uint32_t version = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!is || std::memcmp(magic, "FTCP", 4) != 0 || version != 1)
    throw std::runtime_error("bad parameter file header: " + path);
  ClassifierParams p;
  std::int32_t in_ch = 0;
  std::uint8_t att = 0;
  is.read(reinterpret_cast<char*>(&in_ch), sizeof(in_ch));
  is.read(reinterpret_cast<char*>(&att), sizeof(att));
  is.read(reinterpret_cast<char*>(&p.reg_lambda), sizeof(p.reg_lambda));
  p.in_channels = in_ch;
  p.use_attention = att != 0;
  auto get = [&is, &path](std::vector<double>& v) {
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    v.resize(n);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("truncated parameter file: " + path);
  };
  get(p.compress_w);
  get(p.compress_b);
  get(p.fc1_w);
  get(p.fc1_b);
  get(p.fc2_w);
  get(p.fc2_b);
  get(p.filter_w);
  return p;
}

}  // namespace fusetrack
