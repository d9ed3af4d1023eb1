#pragma once

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "fusetrack/classifier.hpp"
#include "fusetrack/feature_map.hpp"

namespace fusetrack {

// Online learning engine: a recency-weighted bounded sample memory and a
// Gauss-Newton/conjugate-gradient solver for the filter. With compression
// and attention frozen the forward map is linear in the filter, so the L2
// objective is an exactly positive definite quadratic.

// ---------------------------------------------------------------------------
// SampleMemory
// ---------------------------------------------------------------------------

struct MemoryEntry {
  FeatureMap feat;
  ScoreMap label;
  double gamma = 0.0;
  int frame_index = 0;
  bool initial = false;  // first-frame entries are never evicted

  // cached attended stack, keyed by the frozen-block signature
  std::shared_ptr<const FeatureMap> stack;
  std::uint64_t stack_sig = 0;
};

struct SampleMemory {
  int capacity = 250;
  std::vector<MemoryEntry> entries;  // insertion order == frame order

  static constexpr double kInitialFloor = 0.25;

  bool empty() const { return entries.empty(); }
  int size() const { return static_cast<int>(entries.size()); }

  double total_gamma() const {
    double acc = 0.0;
    for (const MemoryEntry& e : entries) acc += e.gamma;
    return acc;
  }
  double initial_gamma() const {
    double acc = 0.0;
    for (const MemoryEntry& e : entries)
      if (e.initial) acc += e.gamma;
    return acc;
  }
  int min_frame_index() const {
    int m = entries.empty() ? 0 : entries.front().frame_index;
    for (const MemoryEntry& e : entries) m = std::min(m, e.frame_index);
    return m;
  }
};

namespace detail {

inline void normalize_gammas(SampleMemory& mem) {
  const double total = mem.total_gamma();
  if (total <= 0.0) return;
  for (MemoryEntry& e : mem.entries) e.gamma /= total;
}

// Keep the protected first-frame entries at a joint weight of at least 0.25
// while any remain, rescaling the two groups proportionally.
inline void floor_initial_weight(SampleMemory& mem) {
  const double init = mem.initial_gamma();
  const double rest = mem.total_gamma() - init;
  if (init <= 0.0 || rest <= 0.0) return;
  if (init >= SampleMemory::kInitialFloor) return;
  const double init_scale = SampleMemory::kInitialFloor / init;
  const double rest_scale = (1.0 - SampleMemory::kInitialFloor) / rest;
  for (MemoryEntry& e : mem.entries) e.gamma *= e.initial ? init_scale : rest_scale;
}

}  // namespace detail

// Seed the memory with the first-frame (augmented) samples at uniform weight;
// these entries are protected from replacement.
inline void init_fill(SampleMemory& mem, std::vector<FeatureMap> feats,
                      std::vector<ScoreMap> labels, int frame_index = 1) {
  require(!feats.empty() && feats.size() == labels.size(),
          "init_fill: need matching nonempty sample lists");
  require(static_cast<int>(feats.size()) <= mem.capacity,
          "init_fill: more samples than capacity");
  mem.entries.clear();
  const double w = 1.0 / feats.size();
  for (std::size_t i = 0; i < feats.size(); ++i) {
    MemoryEntry e;
    e.feat = std::move(feats[i]);
    e.label = std::move(labels[i]);
    e.gamma = w;
    e.frame_index = frame_index;
    e.initial = true;
    mem.entries.push_back(std::move(e));
  }
}

// Recency-weighted insertion: the new entry takes weight `rate`, existing
// weights scale by (1 - rate), and at capacity the oldest non-protected
// entry is replaced first.
inline void add_sample(SampleMemory& mem, FeatureMap feat, ScoreMap label,
                       double rate, int frame_index = -1) {
  require(rate > 0.0 && rate < 1.0, "add_sample: rate must be in (0, 1)");
  if (frame_index < 0) {
    frame_index = 0;
    for (const MemoryEntry& e : mem.entries)
      frame_index = std::max(frame_index, e.frame_index);
    ++frame_index;
  }

  if (mem.size() >= mem.capacity) {
    for (auto it = mem.entries.begin(); it != mem.entries.end(); ++it) {
      if (!it->initial) {
        mem.entries.erase(it);
        break;
      }
    }
    // all-protected memory cannot grow; drop the insert in that degenerate case
    if (mem.size() >= mem.capacity) return;
  }

  for (MemoryEntry& e : mem.entries) e.gamma *= 1.0 - rate;
  MemoryEntry e;
  e.feat = std::move(feat);
  e.label = std::move(label);
  e.gamma = mem.entries.empty() ? 1.0 : rate;
  e.frame_index = frame_index;
  mem.entries.push_back(std::move(e));

  detail::normalize_gammas(mem);
  detail::floor_initial_weight(mem);
}

// ---------------------------------------------------------------------------
// Matrix-free quadratic: A v = sum_j gamma_j J_j^T (J_j v) + lambda v,
// b = sum_j gamma_j J_j^T y_j, where J_j maps a filter to its same-mode
// correlation response over the attended stack of sample j.
// ---------------------------------------------------------------------------

struct FilterProblem {
  std::vector<std::shared_ptr<const FeatureMap>> stacks;
  std::vector<ScoreMap> labels;
  std::vector<double> gammas;
  double lambda = 0.0;
  int channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;

  int dim() const { return channels * kernel_h * kernel_w; }

  FeatureMap as_kernel(const std::vector<double>& v) const {
    FeatureMap k(channels, kernel_h, kernel_w);
    k.data = v;
    return k;
  }

  std::vector<double> apply(const std::vector<double>& v) const {
    std::vector<double> out(v.size(), 0.0);
    const FeatureMap kernel = as_kernel(v);
    for (std::size_t j = 0; j < stacks.size(); ++j) {
      const ScoreMap resp = xcorr2d(*stacks[j], kernel, CorrMode::same);
      const FeatureMap back =
          xcorr2d_same_grad_kernel(*stacks[j], resp, kernel_h, kernel_w);
      const double g = gammas[j];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += g * back.data[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += lambda * v[i];
    return out;
  }

  std::vector<double> rhs() const {
    std::vector<double> out(static_cast<std::size_t>(dim()), 0.0);
    for (std::size_t j = 0; j < stacks.size(); ++j) {
      const FeatureMap back =
          xcorr2d_same_grad_kernel(*stacks[j], labels[j], kernel_h, kernel_w);
      const double g = gammas[j];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += g * back.data[i];
    }
    return out;
  }

  // The weighted L2 objective this quadratic came from.
  double loss(const std::vector<double>& v) const {
    const FeatureMap kernel = as_kernel(v);
    double acc = 0.0;
    for (std::size_t j = 0; j < stacks.size(); ++j) {
      const ScoreMap resp = xcorr2d(*stacks[j], kernel, CorrMode::same);
      double sq = 0.0;
      for (std::size_t i = 0; i < resp.data.size(); ++i) {
        const double d = resp.data[i] - labels[j].data[i];
        sq += d * d;
      }
      acc += gammas[j] * sq;
    }
    for (double x : v) acc += lambda * x * x;
    return acc;
  }
};

// Builds the SPD operator and right-hand side over the memory, reusing each
// entry's cached attended stack when the frozen blocks are unchanged.
inline FilterProblem build_quadratic(SampleMemory& mem, const ClassifierParams& p) {
  require(!mem.empty(), "build_quadratic: empty memory");
  const std::uint64_t sig = frozen_signature(p);
  FilterProblem prob;
  prob.lambda = p.reg_lambda.filter;
  prob.channels = ClassifierParams::kChannels;
  prob.kernel_h = ClassifierParams::kFilter;
  prob.kernel_w = ClassifierParams::kFilter;
  for (MemoryEntry& e : mem.entries) {
    if (!e.stack || e.stack_sig != sig) {
      e.stack = std::make_shared<const FeatureMap>(attend_stack(e.feat, p));
      e.stack_sig = sig;
    }
    prob.stacks.push_back(e.stack);
    prob.labels.push_back(e.label);
    prob.gammas.push_back(e.gamma);
  }
  return prob;
}

// ---------------------------------------------------------------------------
// Conjugate gradient
// ---------------------------------------------------------------------------

// Standard CG on an SPD operator; stops when ||r|| <= tol * ||rhs|| or after
// max_iter steps. Non-positive curvature means the operator is broken and
// raises an error.
template <typename Op>
std::vector<double> cg_solve(Op&& apply, const std::vector<double>& rhs,
                             std::vector<double> x, int max_iter, double tol) {
  require(max_iter >= 1, "cg_solve: max_iter must be >= 1");
  require(tol > 0.0, "cg_solve: tol must be positive");
  require(x.size() == rhs.size(), "cg_solve: x0/rhs size mismatch");

  const std::size_t n = rhs.size();
  auto dot = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
  };

  double bnorm = std::sqrt(dot(rhs, rhs));
  std::vector<double> r = apply(x);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - r[i];
  double rs = dot(r, r);
  if (std::sqrt(rs) <= tol * bnorm) return x;

  std::vector<double> p = r;
  for (int it = 0; it < max_iter; ++it) {
    const std::vector<double> ap = apply(p);
    const double pap = dot(p, ap);
    if (pap <= 0.0)
      throw std::runtime_error("cg_solve: non-positive curvature (operator not SPD)");
    const double alpha = rs / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rs_next = dot(r, r);
    if (std::sqrt(rs_next) <= tol * bnorm) break;
    const double beta = rs_next / rs;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rs = rs_next;
  }
  return x;
}

inline std::vector<double> cg_solve(const FilterProblem& prob,
                                    const std::vector<double>& rhs,
                                    std::vector<double> x0, int max_iter, double tol) {
  return cg_solve([&prob](const std::vector<double>& v) { return prob.apply(v); },
                  rhs, std::move(x0), max_iter, tol);
}

// ---------------------------------------------------------------------------
// Filter update
// ---------------------------------------------------------------------------

// Eq-style objective over the memory for the given parameters.
inline double memory_loss(SampleMemory& mem, const ClassifierParams& p) {
  const FilterProblem prob = build_quadratic(mem, p);
  return prob.loss(p.filter_w);
}

// Gauss-Newton outer loop around CG. The problem is exactly quadratic in the
// filter, so each outer step warm-starts CG from the current filter and the
// objective is non-increasing across the call; once converged, further steps
// leave the filter unchanged up to the CG tolerance.
inline ClassifierParams update_filter(SampleMemory& mem, const ClassifierParams& params,
                                      int gn_steps, int cg_iters) {
  require(gn_steps >= 1, "update_filter: gn_steps must be >= 1");
  require(cg_iters >= 1, "update_filter: cg_iters must be >= 1");
  ClassifierParams p = params;
  const FilterProblem prob = build_quadratic(mem, p);
  const std::vector<double> b = prob.rhs();
  std::vector<double> x = p.filter_w;
  for (int s = 0; s < gn_steps; ++s) x = cg_solve(prob, b, std::move(x), cg_iters, 1e-10);
  p.filter_w = std::move(x);
  return p;
}

}  // namespace fusetrack
