// mot.hpp: tracking-by-detection with constant-velocity Kalman trackers, IOU
// association, and the H/R tracker lifecycle
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "controlloc/geometry.hpp"
#include "controlloc/hungarian.hpp"

namespace controlloc {

struct MotConfig {
  double t_iou = 0.3;  // association gate
  int hits_to_confirm = 3;  // H
  int max_misses = 2;       // R
  double cov = 1.0;         // measurement noise scale
  std::string association = "hungarian-iou";

  void validate() const {
    if (!(t_iou > 0 && t_iou < 1)) throw std::invalid_argument("MotConfig: T_IOU must lie in (0,1)");
    if (hits_to_confirm < 1) throw std::invalid_argument("MotConfig: H must be >= 1");
    if (max_misses < 0) throw std::invalid_argument("MotConfig: R must be >= 0");
    if (!(cov > 0)) throw std::invalid_argument("MotConfig: cov must be > 0");
    if (association != "hungarian-iou") throw std::invalid_argument("MotConfig: unknown association method " + association);
  }
};

enum class TrackStatus { tentative, confirmed, deleted };

inline const char* to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::tentative: return "tentative";
    case TrackStatus::confirmed: return "confirmed";
    default: return "deleted";
  }
}

using StateVec = Eigen::Matrix<double, 8, 1>;
using StateCov = Eigen::Matrix<double, 8, 8>;

// Kalman state (cx, cy, w, h, v_cx, v_cy, v_w, v_h).
struct TrackerState {
  int id = 0;
  StateVec mean = StateVec::Zero();
  StateCov covariance = StateCov::Identity();
  int hits = 0;
  int time_since_update = 0;
  TrackStatus status = TrackStatus::tentative;

  BBox box() const { return BBox::from_center(mean(0), mean(1), mean(2), mean(3)); }
};

namespace kalman {

inline StateCov transition() {
  StateCov F = StateCov::Identity();
  F.block<4, 4>(0, 4) = Eigen::Matrix4d::Identity();
  return F;
}
inline StateCov process_noise() {
  StateVec d;
  d << 1, 1, 1, 1, 0.01, 0.01, 0.01, 0.01;
  return d.asDiagonal();
}
inline StateCov initial_covariance() {
  StateVec d;
  d << 10, 10, 10, 10, 100, 100, 100, 100;
  return d.asDiagonal();
}

}  // namespace kalman

inline TrackerState make_tracker(int id, const BBox& det) {
  TrackerState t;
  t.id = id;
  t.mean << det.cx(), det.cy(), det.width(), det.height(), 0, 0, 0, 0;
  t.covariance = kalman::initial_covariance();
  t.hits = 1;
  t.time_since_update = 0;
  return t;
}

// Constant-velocity time update; returns the predicted box.
inline BBox predict(TrackerState& t) {
  if (t.status == TrackStatus::deleted) throw std::invalid_argument("predict: tracker is deleted");
  // keep the predicted extent positive
  if (t.mean(2) + t.mean(6) <= 1.0) t.mean(6) = 0;
  if (t.mean(3) + t.mean(7) <= 1.0) t.mean(7) = 0;
  const StateCov F = kalman::transition();
  t.mean = F * t.mean;
  t.covariance = F * t.covariance * F.transpose() + kalman::process_noise();
  return t.box();
}

// Measurement update with z = (cx, cy, w, h) and noise cov * I.
inline void kalman_update(TrackerState& t, const BBox& det, double cov) {
  Eigen::Matrix<double, 4, 8> H = Eigen::Matrix<double, 4, 8>::Zero();
  H.block<4, 4>(0, 0) = Eigen::Matrix4d::Identity();
  const Eigen::Vector4d z(det.cx(), det.cy(), det.width(), det.height());
  const Eigen::Matrix4d S = H * t.covariance * H.transpose() + cov * Eigen::Matrix4d::Identity();
  const Eigen::Matrix<double, 8, 4> K = t.covariance * H.transpose() * S.inverse();
  t.mean += K * (z - H * t.mean);
  const StateCov I_KH = StateCov::Identity() - K * H;
  // Joseph form keeps the covariance symmetric positive semi-definite
  t.covariance = I_KH * t.covariance * I_KH.transpose() + cov * K * K.transpose();
  t.covariance = 0.5 * (t.covariance + t.covariance.transpose());
}

struct Match {
  int tracker = 0;    // index into the predicted list (or tracker id in MotFrameResult)
  int detection = 0;  // index into the detection list
  bool operator==(const Match&) const = default;
};

struct Association {
  std::vector<Match> matches;
  std::vector<int> unmatched_trackers;
  std::vector<int> unmatched_detections;
};

// Maximum-total-IOU assignment over admissible pairs (IOU > t_iou).
inline Association associate(const std::vector<BBox>& predicted, const std::vector<BBox>& detections, double t_iou) {
  if (!(t_iou > 0 && t_iou < 1)) throw std::invalid_argument("associate: T_IOU must lie in (0,1)");
  const std::size_t nt = predicted.size(), nd = detections.size();
  Association out;
  std::vector<double> iou_m(nt * nd, 0.0), cost(nt * nd, 1.0);
  for (std::size_t i = 0; i < nt; ++i)
    for (std::size_t j = 0; j < nd; ++j) {
      const double v = iou(predicted[i], detections[j]);
      iou_m[i * nd + j] = v;
      // inadmissible pairs cost the same as leaving both sides unmatched
      if (v > t_iou) cost[i * nd + j] = 1.0 - v;
    }
  const std::vector<int> assign = solve_assignment(cost, nt, nd);
  std::vector<char> det_used(nd, 0);
  for (std::size_t i = 0; i < nt; ++i) {
    const int j = assign[i];
    if (j >= 0 && iou_m[i * nd + static_cast<std::size_t>(j)] > t_iou) {
      out.matches.push_back({static_cast<int>(i), j});
      det_used[static_cast<std::size_t>(j)] = 1;
    } else {
      out.unmatched_trackers.push_back(static_cast<int>(i));
    }
  }
  for (std::size_t j = 0; j < nd; ++j)
    if (!det_used[j]) out.unmatched_detections.push_back(static_cast<int>(j));
  return out;
}

struct Detection {
  BBox box;
  double confidence = 1.0;
};

struct TrackSnapshot {
  int id = 0;
  TrackStatus status = TrackStatus::tentative;
  BBox predicted;
  StateVec mean = StateVec::Zero();
  int matched_detection = -1;
};

struct MotFrameResult {
  std::vector<TrackSnapshot> tracks;  // every tracker alive at the start of the frame or spawned in it
  std::vector<Match> matches;         // (tracker id, detection index)
  std::vector<int> new_ids;
  std::vector<int> deleted_ids;

  int tracker_for_detection(int det) const {
    for (const Match& m : matches)
      if (m.detection == det) return m.tracker;
    return -1;
  }
};

// Owns the live tracker set. Ids are strictly increasing and never reused.
class MultiTracker {
 public:
  explicit MultiTracker(MotConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const std::vector<TrackerState>& trackers() const { return trackers_; }
  const MotConfig& config() const { return cfg_; }

  // Box the tracker `id` will predict on the next step, without advancing it.
  std::optional<BBox> peek_prediction(int id) const {
    for (const TrackerState& t : trackers_) {
      if (t.id != id) continue;
      TrackerState copy = t;
      return predict(copy);
    }
    return std::nullopt;
  }

  MotFrameResult step(const std::vector<Detection>& detections) {
    MotFrameResult res;
    std::vector<BBox> predicted;
    predicted.reserve(trackers_.size());
    for (TrackerState& t : trackers_) predicted.push_back(predict(t));
    std::vector<BBox> dets;
    dets.reserve(detections.size());
    for (const Detection& d : detections) dets.push_back(d.box);
    const Association a = associate(predicted, dets, cfg_.t_iou);

    std::vector<int> matched_det(trackers_.size(), -1);
    for (const Match& m : a.matches) matched_det[static_cast<std::size_t>(m.tracker)] = m.detection;
    for (std::size_t i = 0; i < trackers_.size(); ++i) {
      TrackerState& t = trackers_[i];
      const int d = matched_det[i];
      if (d >= 0) {
        kalman_update(t, dets[static_cast<std::size_t>(d)], cfg_.cov);
        t.hits += 1;
        t.time_since_update = 0;
        if (t.status == TrackStatus::tentative && t.hits >= cfg_.hits_to_confirm) t.status = TrackStatus::confirmed;
        res.matches.push_back({t.id, d});
      } else {
        t.hits = 0;
        t.time_since_update += 1;
        if (t.time_since_update > cfg_.max_misses) {
          t.status = TrackStatus::deleted;
          res.deleted_ids.push_back(t.id);
        }
      }
      res.tracks.push_back({t.id, t.status, predicted[i], t.mean, d});
    }
    for (int d : a.unmatched_detections) {
      TrackerState t = make_tracker(next_id_++, dets[static_cast<std::size_t>(d)]);
      if (t.hits >= cfg_.hits_to_confirm) t.status = TrackStatus::confirmed;
      res.new_ids.push_back(t.id);
      res.tracks.push_back({t.id, t.status, t.box(), t.mean, d});
      trackers_.push_back(t);
    }
    std::erase_if(trackers_, [](const TrackerState& t) { return t.status == TrackStatus::deleted; });
    return res;
  }

 private:
  MotConfig cfg_;
  std::vector<TrackerState> trackers_;
  int next_id_ = 1;
};

// Track log: one row per (frame, tracker).
inline void write_track_log_header(std::ostream& os) {
  os << "frame,track_id,status,cx,cy,w,h,v_cx,v_cy,matched_detection\n";
}
inline void write_track_log_rows(std::ostream& os, int frame, const MotFrameResult& r) {
  for (const TrackSnapshot& s : r.tracks) {
    os << frame << ',' << s.id << ',' << to_string(s.status) << ',' << s.mean(0) << ',' << s.mean(1) << ',' << s.mean(2)
       << ',' << s.mean(3) << ',' << s.mean(4) << ',' << s.mean(5) << ',' << s.matched_detection << '\n';
  }
}

}  // namespace controlloc
