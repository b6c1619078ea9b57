#pragma once

// Bit-packed spatio-temporal binary mask volume (T x H x W) with popcount
// based intersection/union kernels.

#include <bit>
#include <cstdint>
#include <vector>

#include "novis/tensor.hpp"

namespace novis {

class BitVolume {
 public:
  BitVolume() = default;
  BitVolume(int frames, int height, int width)
      : frames_(frames), height_(height), width_(width) {
    check_contract(frames >= 1 && height >= 1 && width >= 1, "BitVolume: bad extents");
    words_.assign(static_cast<std::size_t>((numel() + 63) / 64), 0);
  }

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  long long numel() const {
    return static_cast<long long>(frames_) * height_ * width_;
  }
  bool same_extents(const BitVolume& other) const {
    return frames_ == other.frames_ && height_ == other.height_ && width_ == other.width_;
  }

  void set(int t, int y, int x, bool v) {
    const long long i = index(t, y, x);
    if (v)
      words_[static_cast<std::size_t>(i >> 6)] |= (std::uint64_t{1} << (i & 63));
    else
      words_[static_cast<std::size_t>(i >> 6)] &= ~(std::uint64_t{1} << (i & 63));
  }
  bool get(int t, int y, int x) const {
    const long long i = index(t, y, x);
    return (words_[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1;
  }
  void set_flat(long long i, bool v) {
    if (v)
      words_[static_cast<std::size_t>(i >> 6)] |= (std::uint64_t{1} << (i & 63));
    else
      words_[static_cast<std::size_t>(i >> 6)] &= ~(std::uint64_t{1} << (i & 63));
  }
  bool get_flat(long long i) const {
    return (words_[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1;
  }

  long long popcount() const {
    long long n = 0;
    for (std::uint64_t w : words_) n += std::popcount(w);
    return n;
  }

  bool frame_empty(int t) const {
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (get(t, y, x)) return false;
    return true;
  }

  const std::vector<std::uint64_t>& words() const { return words_; }

  friend long long intersection_count(const BitVolume& a, const BitVolume& b) {
    long long n = 0;
    for (std::size_t i = 0; i < a.words_.size(); ++i)
      n += std::popcount(a.words_[i] & b.words_[i]);
    return n;
  }
  friend long long union_count(const BitVolume& a, const BitVolume& b) {
    long long n = 0;
    for (std::size_t i = 0; i < a.words_.size(); ++i)
      n += std::popcount(a.words_[i] | b.words_[i]);
    return n;
  }

 private:
  long long index(int t, int y, int x) const {
    return (static_cast<long long>(t) * height_ + y) * width_ + x;
  }
  int frames_ = 0, height_ = 0, width_ = 0;
  std::vector<std::uint64_t> words_;
};

// |a ∩ b| / |a ∪ b| over the whole volume; 0 when both volumes are empty.
inline double volumetric_iou(const BitVolume& a, const BitVolume& b) {
  check_contract(a.same_extents(b), "volumetric_iou: extent mismatch");
  const long long uni = union_count(a, b);
  if (uni == 0) return 0.0;
  return static_cast<double>(intersection_count(a, b)) / static_cast<double>(uni);
}

}  // namespace novis
