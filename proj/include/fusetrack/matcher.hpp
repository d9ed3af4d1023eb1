#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "fusetrack/feature_map.hpp"

namespace fusetrack {

// Siamese matching layer: classification correlation against a long-term
// (first frame) or short-term template, scale regression over a 3-level
// template pyramid, and the gate deciding which template to trust.

struct TemplateBank {
  FeatureMap z1;                 // first-frame template, never mutated
  std::optional<FeatureMap> zs;  // short-term template
  int zs_frame = -1;
  double bias = 0.0;
};

struct ScalePyramid {
  std::array<double, 3> factors{1.0 / 1.0375, 1.0, 1.0375};
};

enum class TemplateKind { long_term, short_term };

// Valid-mode cross-correlation of the search features with the chosen
// template, plus the scalar bias on every cell.
inline ScoreMap match_cls(const FeatureMap& search, const TemplateBank& bank,
                          TemplateKind which) {
  const FeatureMap* tmpl = &bank.z1;
  if (which == TemplateKind::short_term) {
    require(bank.zs.has_value(), "match_cls: short-term template not set");
    tmpl = &*bank.zs;
  }
  ScoreMap out = xcorr2d(search, *tmpl, CorrMode::valid);
  if (bank.bias != 0.0)
    for (double& x : out.data) x += bank.bias;
  return out;
}

struct RegResult {
  Rect box;
  double score = 0.0;   // winning response, before the scale penalty
  int scale_index = 1;  // index into the pyramid factors
};

namespace detail {

// Hysteresis against scale flicker and damping of the size update.
constexpr double kScalePenalty = 0.97;
constexpr double kScaleDamping = 0.6;

}  // namespace detail

// Scale regression: correlates the three scaled templates (cubic channel-wise
// resize, responses normalized per kernel cell so sizes compare fairly),
// picks the maximal penalized response, and returns the previous box
// recentered at the refined peak with damped width/height. Ties break toward
// the smallest row, then column, then the factor closest to 1.
inline RegResult match_reg_fc(const FeatureMap& search, const TemplateBank& bank,
                              const ScalePyramid& pyr, const Rect& prev,
                              TemplateKind which = TemplateKind::long_term) {
  const FeatureMap* tmpl = &bank.z1;
  if (which == TemplateKind::short_term) {
    require(bank.zs.has_value(), "match_reg_fc: short-term template not set");
    tmpl = &*bank.zs;
  }

  RegResult best;
  double best_penalized = -1e300;
  ScoreMap best_map;
  bool have = false;

  for (int s = 0; s < 3; ++s) {
    const double f = pyr.factors[s];
    const int th = std::max(1, static_cast<int>(std::lround(tmpl->height * f)));
    const int tw = std::max(1, static_cast<int>(std::lround(tmpl->width * f)));
    if (th > search.height || tw > search.width) continue;
    const FeatureMap scaled =
        (th == tmpl->height && tw == tmpl->width) ? *tmpl : resize_cubic(*tmpl, th, tw);

    ScoreMap resp = xcorr2d(search, scaled, CorrMode::valid);
    const double norm = 1.0 / (static_cast<double>(th) * tw);
    for (double& x : resp.data) x = x * norm + bank.bias;

    const auto [r, c] = resp.argmax_cell();
    const double raw = resp.at(r, c);
    const double penalized = raw * (f == 1.0 ? 1.0 : detail::kScalePenalty);

    bool take = !have;
    if (have && penalized > best_penalized) take = true;
    if (have && penalized == best_penalized) {
      const auto [br, bc] = best_map.argmax_cell();
      if (r < br || (r == br && c < bc) ||
          (r == br && c == bc &&
           std::abs(f - 1.0) < std::abs(pyr.factors[best.scale_index] - 1.0)))
        take = true;
    }
    if (take) {
      have = true;
      best_penalized = penalized;
      best.score = raw;
      best.scale_index = s;
      best_map = std::move(resp);
    }
  }
  require(have, "match_reg_fc: no pyramid level fits the search region");

  const Peak peak = best_map.find_peak();
  const auto [py, px] = best_map.point_of(peak.refined_row, peak.refined_col);
  const double f = pyr.factors[best.scale_index];
  const double grow = detail::kScaleDamping * f + (1.0 - detail::kScaleDamping);
  best.box = Rect{px, py, prev.w * grow, prev.h * grow};
  return best;
}

// Template switch gate: prefer the short-term template only when its box
// agrees with the long-term one (IoU >= ur) and its score clears the margin
// (score_s - score_1 >= uc). Both conditions must hold.
inline TemplateKind select_template(const TemplateBank& bank, const Rect& candidate_box_s,
                                    const Rect& candidate_box_1, double score_s,
                                    double score_1, double ur, double uc) {
  require(ur >= 0.0 && ur <= 1.0 && uc >= 0.0 && uc <= 1.0,
          "select_template: thresholds in [0,1]");
  if (!bank.zs.has_value()) return TemplateKind::long_term;
  const bool consistent = iou(candidate_box_s, candidate_box_1) >= ur;
  const bool confident = (score_s - score_1) >= uc;
  return (consistent && confident) ? TemplateKind::short_term : TemplateKind::long_term;
}

}  // namespace fusetrack
