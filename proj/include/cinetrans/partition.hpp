#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cinetrans/error.hpp"

namespace cinetrans {

// Half-open frame interval [start, end).
struct Shot {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start; }
  bool contains(std::size_t frame) const noexcept { return frame >= start && frame < end; }
  bool operator==(const Shot&) const = default;
};

// Frame-level shot labels of one video. Indices are zero based: shot m covers
// [start_m, end_m). Frames that belong to a gradual transition are listed in
// gradual_frames and belong to no shot. Shots plus gradual frames cover
// [0, n_frames) exactly once.
//
// A partition without gradual frames is "contiguous" and is fully described by
// its boundary list 0 = i_1 < i_2 < ... < i_{M+1} = N.
class ShotPartition {
 public:
  ShotPartition() = default;

  ShotPartition(std::size_t n_frames, std::vector<Shot> shots, std::vector<std::size_t> gradual_frames = {})
      : n_frames_(n_frames), shots_(std::move(shots)), gradual_(std::move(gradual_frames)) {
    validate();
  }

  static ShotPartition from_boundaries(const std::vector<std::size_t>& boundaries) {
    if (boundaries.size() < 2) throw ValidationError("partition needs at least two boundaries");
    if (boundaries.front() != 0) throw ValidationError("first boundary must be 0");
    std::vector<Shot> shots;
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
      if (boundaries[i + 1] <= boundaries[i]) {
        throw ValidationError("partition boundaries must be strictly increasing");
      }
      shots.push_back({boundaries[i], boundaries[i + 1]});
    }
    return ShotPartition(boundaries.back(), std::move(shots));
  }

  static ShotPartition single_shot(std::size_t n_frames) { return from_boundaries({0, n_frames}); }

  std::size_t n_frames() const noexcept { return n_frames_; }
  std::size_t shot_count() const noexcept { return shots_.size(); }
  const std::vector<Shot>& shots() const noexcept { return shots_; }
  const Shot& shot(std::size_t m) const { return shots_.at(m); }
  const std::vector<std::size_t>& gradual_frames() const noexcept { return gradual_; }
  bool is_contiguous() const noexcept { return gradual_.empty(); }

  std::vector<std::size_t> boundaries() const {
    require_contiguous("boundaries");
    std::vector<std::size_t> b;
    b.reserve(shots_.size() + 1);
    for (const auto& s : shots_) b.push_back(s.start);
    b.push_back(n_frames_);
    return b;
  }

  // Shot index of `frame`, or nullopt for gradual frames.
  std::optional<std::size_t> shot_of_frame(std::size_t frame) const {
    if (frame >= n_frames_) {
      throw IndexError("frame " + std::to_string(frame) + " outside partition of " +
                       std::to_string(n_frames_) + " frames");
    }
    auto it = std::upper_bound(shots_.begin(), shots_.end(), frame,
                               [](std::size_t f, const Shot& s) { return f < s.start; });
    if (it == shots_.begin()) return std::nullopt;
    --it;
    if (!it->contains(frame)) return std::nullopt;
    return static_cast<std::size_t>(it - shots_.begin());
  }

  void require_contiguous(const char* what) const {
    if (!is_contiguous()) {
      throw ValidationError(std::string(what) + " requires a partition without gradual frames");
    }
  }

  bool operator==(const ShotPartition&) const = default;

 private:
  void validate() {
    if (shots_.empty()) throw ValidationError("partition must contain at least one shot");
    std::sort(gradual_.begin(), gradual_.end());
    if (std::adjacent_find(gradual_.begin(), gradual_.end()) != gradual_.end()) {
      throw ValidationError("duplicate gradual frame");
    }
    std::size_t covered = 0;
    std::size_t prev_end = 0;
    for (const auto& s : shots_) {
      if (s.end <= s.start) throw ValidationError("empty shot in partition");
      if (s.start < prev_end) throw ValidationError("shots must be ordered and disjoint");
      prev_end = s.end;
      covered += s.length();
    }
    if (prev_end > n_frames_) throw ValidationError("shot extends past n_frames");
    for (std::size_t g : gradual_) {
      if (g >= n_frames_) throw ValidationError("gradual frame outside video");
      for (const auto& s : shots_) {
        if (s.contains(g)) throw ValidationError("gradual frame " + std::to_string(g) + " lies inside a shot");
      }
    }
    if (covered + gradual_.size() != n_frames_) {
      throw ValidationError("shots and gradual frames must cover every frame exactly once");
    }
  }

  std::size_t n_frames_ = 0;
  std::vector<Shot> shots_;
  std::vector<std::size_t> gradual_;
};

}  // namespace cinetrans
