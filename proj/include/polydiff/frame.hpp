#pragma once

#include <string>
#include <vector>

#include "polydiff/geometry.hpp"

namespace polydiff {

inline constexpr int kFrameSide = 32;
inline constexpr int kFrameSlots = kFrameSide * kFrameSide;  // 1024
inline constexpr int kFrameChannels = 3;

// A frame is a point cloud packed into the slots of a 32x32 grid, one channel
// per coordinate.  Stored as 3 x 1024 with slot index = row * 32 + column.
using FrameMatrix = Eigen::Matrix<double, 3, Eigen::Dynamic>;

inline FrameMatrix zero_frame() { return FrameMatrix::Zero(3, kFrameSlots); }

// Similarity transform between model space and frame space: points are scaled
// uniformly so the bounding box fits [-1,1]^3, halved into [-0.5,0.5]^3, and
// shifted by +0.5 along the first axis.
struct NormalizationTransform {
  Vec3 center = Vec3::Zero();
  double half_extent = 1.0;

  Vec3 to_frame(const Vec3& p) const {
    return (p - center) / (2.0 * half_extent) + Vec3(0.5, 0.0, 0.0);
  }
  Vec3 from_frame(const Vec3& q) const {
    return (q - Vec3(0.5, 0.0, 0.0)) * (2.0 * half_extent) + center;
  }
};

// Throws StageError when the cloud is empty or has zero extent on every axis.
NormalizationTransform normalize_for_frame(const Mat3X& points);

struct FrameMeta {
  int live_count = 0;
  int occupied_units = 1;                // grid cells covered by the source cloud
  std::vector<int> slot_to_point;        // slot -> original point index, live slots only
  NormalizationTransform transform;
};

struct EncodedFrame {
  FrameMatrix frame;
  FrameMeta meta;
};

// Normalizes, sorts by the first frame coordinate (ties: second, third,
// original index), packs points into slots 0..N-1 row-major, zero-fills the
// rest.  Throws StageError for empty input or more points than slots.
EncodedFrame encode_frame(const Mat3X& points, int occupied_units = 1);

// Exact inverse of encode_frame on the live slots: un-permutes and maps back
// to model space.
Mat3X decode_frame(const FrameMatrix& frame, const FrameMeta& meta);

// Live-slot mask as a frame-shaped 0/1 matrix.
FrameMatrix live_mask(const FrameMeta& meta);

// Diffusion timestep t in 1..T encoded as the scalar t/T in (0, 1].
double time_scalar(int t, int t_total);

// Frame blob container: 16-byte header (magic "DPCF", u32 version, u32 frame
// count, u32 reserved) followed by little-endian float32 payloads of
// 3*32*32 values per frame, channel-major.
void save_frame_blob(const std::string& path, const std::vector<FrameMatrix>& frames);
std::vector<FrameMatrix> load_frame_blob(const std::string& path);

void save_frame_meta(const std::string& path, const FrameMeta& meta);
FrameMeta load_frame_meta(const std::string& path);

}  // namespace polydiff
