#pragma once

// Turns network outputs (nuclear-pixel probability, horizontal/vertical
// distance maps and optional per-class probabilities) into classified
// nuclear instances with a marker-controlled watershed.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <vector>

#include "hovernet/core.hpp"
#include "hovernet/filters.hpp"
#include "hovernet/targetgen.hpp"

namespace hovernet {

enum class EnergyMode { sobel, sqsum };
enum class MarkerMode { sobel, threshold };

struct PostProcConfig {
  double h = 0.5;  // nuclear-pixel probability threshold
  double k = 0.4;  // normalized gradient threshold
  int sobel_ksize = 3;
  std::size_t min_marker_area = 10;
  std::size_t min_instance_area = 10;
  EnergyMode energy_mode = EnergyMode::sobel;
  MarkerMode marker_mode = MarkerMode::sobel;
  double threshold_marker_lo = 0.0;
  double threshold_marker_hi = 0.4;

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::invalid_argument, msg); };
    if (!(h > 0.0 && h < 1.0)) fail("h must lie in (0,1)");
    if (!(k > 0.0 && k < 1.0)) fail("k must lie in (0,1)");
    if (sobel_ksize != 3 && sobel_ksize != 5) fail("sobel_ksize must be 3 or 5");
    if (!(threshold_marker_lo < threshold_marker_hi)) {
      fail("threshold marker range requires lo < hi");
    }
  }

  friend bool operator==(const PostProcConfig&, const PostProcConfig&) = default;
};

/// Nuclear-pixel probability (q) plus optional per-class probabilities (r),
/// the latter including the background class at index 0.
struct ProbMaps {
  RealGrid np_prob;
  std::optional<GridStack> type_probs;

  explicit ProbMaps(RealGrid np, std::optional<GridStack> types = std::nullopt)
      : np_prob(std::move(np)), type_probs(std::move(types)) {
    for (auto& v : np_prob) v = std::clamp(v, 0.0, 1.0);
    if (type_probs) {
      for (const auto& g : *type_probs) require_same_shape(np_prob, g, "type probability map");
    }
  }
};

struct InstanceType {
  ClassId class_id;
  double mean_prob;

  friend bool operator==(const InstanceType&, const InstanceType&) = default;
};

struct ClassifiedInstances {
  InstanceMap instances;
  std::map<Label, InstanceType> types;
};

/// tau(a, b): 1 where a > b, else 0.
inline BinaryMask threshold(const RealGrid& a, double b) {
  BinaryMask out(a.height(), a.width(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > b ? 1 : 0;
  return out;
}

/// S_m: pixelwise max of the min-max normalized Sobel magnitudes of the
/// horizontal channel (x-derivative) and vertical channel (y-derivative).
inline RealGrid sobel_energy(const HoverMap& p, const PostProcConfig& cfg) {
  auto gx = sobel(p.horizontal, Axis::horizontal, cfg.sobel_ksize);
  auto gy = sobel(p.vertical, Axis::vertical, cfg.sobel_ksize);
  for (auto& v : gx) v = std::abs(v);
  for (auto& v : gy) v = std::abs(v);
  const RealGrid nx = minmax_normalize(gx);
  const RealGrid ny = minmax_normalize(gy);
  RealGrid out(p.height(), p.width(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(nx[i], ny[i]);
  return out;
}

inline RealGrid square_sum(const HoverMap& p) {
  RealGrid out(p.height(), p.width(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = p.horizontal[i] * p.horizontal[i] + p.vertical[i] * p.vertical[i];
  }
  return out;
}

/// 1 - (chi^2 + phi^2), clamped to [0,1]: high at centroids, low at boundaries.
inline RealGrid pseudo_distance_energy(const HoverMap& p) {
  RealGrid out = square_sum(p);
  for (auto& v : out) v = std::clamp(1.0 - v, 0.0, 1.0);
  return out;
}

/// Markers from tau(q,h) - tau(S_m,k), rectified, labelled (8-connected) and
/// filtered by min_marker_area.
inline InstanceMap compute_markers(const RealGrid& q, const RealGrid& sm,
                                   const PostProcConfig& cfg) {
  require_same_shape(q, sm, "markers: probability vs gradient map");
  const BinaryMask fg = threshold(q, cfg.h);
  const BinaryMask edge = threshold(sm, cfg.k);
  BinaryMask m(q.height(), q.width(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const int v = static_cast<int>(fg[i]) - static_cast<int>(edge[i]);
    m[i] = v > 0 ? 1 : 0;
  }
  return remove_small_instances(connected_components(m, Connectivity::eight),
                                cfg.min_marker_area);
}

/// Markers from the pixels whose chi^2 + phi^2 falls inside the configured
/// range, restricted to tau(q,h).
inline InstanceMap compute_threshold_markers(const RealGrid& q, const HoverMap& p,
                                             const PostProcConfig& cfg) {
  require_same_shape(q, p.horizontal, "markers: probability vs hover map");
  const BinaryMask fg = threshold(q, cfg.h);
  const RealGrid ss = square_sum(p);
  BinaryMask m(q.height(), q.width(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m[i] = (fg[i] != 0 && ss[i] >= cfg.threshold_marker_lo && ss[i] <= cfg.threshold_marker_hi)
               ? 1
               : 0;
  }
  return connected_components(m, Connectivity::eight);
}

/// Dispatches on cfg.marker_mode.
inline InstanceMap compute_markers(const RealGrid& q, const RealGrid& sm, const HoverMap& p,
                                   const PostProcConfig& cfg) {
  return cfg.marker_mode == MarkerMode::sobel ? compute_markers(q, sm, cfg)
                                              : compute_threshold_markers(q, p, cfg);
}

/// E = [1 - tau(S_m,k)] * tau(q,h) in sobel mode; in sqsum mode the pseudo
/// distance energy masked by tau(q,h). The hover map is only read in sqsum mode.
inline RealGrid energy_landscape(const RealGrid& q, const RealGrid& sm, const HoverMap& p,
                                 const PostProcConfig& cfg) {
  require_same_shape(q, sm, "energy: probability vs gradient map");
  const BinaryMask fg = threshold(q, cfg.h);
  RealGrid out(q.height(), q.width(), 0.0);
  if (cfg.energy_mode == EnergyMode::sobel) {
    const BinaryMask edge = threshold(sm, cfg.k);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<double>(1 - edge[i]) * static_cast<double>(fg[i]);
    }
  } else {
    require_same_shape(q, p.horizontal, "energy: probability vs hover map");
    const RealGrid pd = pseudo_distance_energy(p);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pd[i] * static_cast<double>(fg[i]);
  }
  return out;
}

inline RealGrid energy_landscape(const RealGrid& q, const RealGrid& sm,
                                 const PostProcConfig& cfg) {
  if (cfg.energy_mode != EnergyMode::sobel) {
    throw Error(ErrorKind::invalid_argument, "sqsum energy needs the hover map");
  }
  return energy_landscape(q, sm, HoverMap(q.height(), q.width()), cfg);
}

/// Marker-controlled priority-flood watershed restricted to the mask.
///
/// Unlabelled mask neighbours of marker pixels seed a priority queue; the
/// pixel with the highest energy is popped first (equal energies in FIFO
/// order), takes the label of the pixel that queued it, and queues its own
/// unvisited mask neighbours. Mask components no marker reaches become new
/// instances, numbered after the largest marker label in raster order.
inline InstanceMap watershed(const InstanceMap& markers, const RealGrid& energy,
                             const BinaryMask& mask) {
  require_same_shape(markers, energy, "watershed: markers vs energy");
  require_same_shape(markers, mask, "watershed: markers vs mask");
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  for (std::size_t i = 0; i < markers.size(); ++i) {
    if (markers[i] != 0 && mask[i] == 0) {
      throw Error(ErrorKind::invalid_argument,
                  "watershed: marker pixel (" + std::to_string(i / w) + "," +
                      std::to_string(i % w) + ") lies outside the mask");
    }
  }

  struct Entry {
    double energy;
    std::uint64_t seq;
    std::size_t index;
    Label label;
  };
  struct Lower {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.energy != b.energy) return a.energy < b.energy;
      return a.seq > b.seq;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, Lower> queue;
  std::vector<std::uint8_t> queued(mask.size(), 0);
  InstanceMap out = markers;
  std::uint64_t seq = 0;

  auto push_neighbours = [&](std::size_t p, Label label) {
    for_each_neighbour(p / w, p % w, h, w, Connectivity::eight, [&](std::size_t r, std::size_t c) {
      const std::size_t q = r * w + c;
      if (mask[q] == 0 || out[q] != 0 || queued[q] != 0) return;
      queued[q] = 1;
      queue.push({energy[q], seq++, q, label});
    });
  };

  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != 0) push_neighbours(i, out[i]);
  }
  while (!queue.empty()) {
    const Entry e = queue.top();
    queue.pop();
    out[e.index] = e.label;
    push_neighbours(e.index, e.label);
  }

  BinaryMask orphan(h, w, 0);
  bool any_orphan = false;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] != 0 && out[i] == 0) {
      orphan[i] = 1;
      any_orphan = true;
    }
  }
  if (any_orphan) {
    const Label base = max_label(markers);
    const InstanceMap extra = connected_components(orphan, Connectivity::eight);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (extra[i] != 0) out[i] = base + extra[i];
    }
  }
  return out;
}

/// Majority vote of the per-pixel argmax class within each instance.
///
/// Background (class 0) is a candidate only if no pixel of the instance
/// votes for a foreground class; in that case the foreground class with the
/// highest mean probability is reported so every instance carries a class
/// id >= 1. Vote ties go to the higher mean probability, then the lower id.
inline std::map<Label, InstanceType> classify_instances(const InstanceMap& im,
                                                        const GridStack& type_probs) {
  if (type_probs.size() < 2) {
    throw Error(ErrorKind::invalid_argument,
                "classification needs background plus at least one class");
  }
  for (const auto& g : type_probs) require_same_shape(im, g, "classify: instances vs probs");
  const std::size_t k = type_probs.size();

  struct Tally {
    std::vector<std::size_t> votes;
    std::vector<double> prob_sum;
    std::size_t area = 0;
  };
  std::map<Label, Tally> tallies;
  for (std::size_t i = 0; i < im.size(); ++i) {
    const Label l = im[i];
    if (l == 0) continue;
    auto& t = tallies[l];
    if (t.votes.empty()) {
      t.votes.assign(k, 0);
      t.prob_sum.assign(k, 0.0);
    }
    std::size_t best = 0;
    for (std::size_t c = 0; c < k; ++c) {
      t.prob_sum[c] += type_probs[c][i];
      if (type_probs[c][i] > type_probs[best][i]) best = c;
    }
    ++t.votes[best];
    ++t.area;
  }

  std::map<Label, InstanceType> out;
  for (const auto& [label, t] : tallies) {
    const auto n = static_cast<double>(t.area);
    std::size_t best = 0;
    bool any_fg_vote = false;
    for (std::size_t c = 1; c < k; ++c) any_fg_vote = any_fg_vote || t.votes[c] > 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (best == 0) {
        best = c;
        continue;
      }
      const bool more_votes = any_fg_vote && t.votes[c] > t.votes[best];
      const bool tie = !any_fg_vote || t.votes[c] == t.votes[best];
      if (more_votes || (tie && t.prob_sum[c] > t.prob_sum[best])) best = c;
    }
    out.emplace(label, InstanceType{static_cast<ClassId>(best), t.prob_sum[best] / n});
  }
  return out;
}

/// Full post-processing: energy, markers, watershed over tau(q,h), small
/// instance removal, sequential relabelling and, when per-class
/// probabilities are present, per-instance classification.
inline ClassifiedInstances run_pipeline(const HoverMap& p, const ProbMaps& maps,
                                        const PostProcConfig& cfg) {
  cfg.validate();
  const RealGrid& q = maps.np_prob;
  require_same_shape(q, p.horizontal, "pipeline: probability vs hover map");
  const RealGrid sm = sobel_energy(p, cfg);
  const BinaryMask fg = threshold(q, cfg.h);
  const RealGrid energy = energy_landscape(q, sm, p, cfg);
  const InstanceMap markers = compute_markers(q, sm, p, cfg);
  InstanceMap inst = watershed(markers, energy, fg);
  inst = relabel_sequential(remove_small_instances(inst, cfg.min_instance_area));
  ClassifiedInstances result{std::move(inst), {}};
  if (maps.type_probs) result.types = classify_instances(result.instances, *maps.type_probs);
  return result;
}

}  // namespace hovernet
