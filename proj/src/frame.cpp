#include "polydiff/frame.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "polydiff/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "frame blobs assume a little-endian host");

namespace polydiff {

using nlohmann::json;

NormalizationTransform normalize_for_frame(const Mat3X& points) {
  if (points.cols() == 0) throw StageError("cannot normalize an empty point cloud");
  const Eigen::AlignedBox3d box = bounding_box(points);
  NormalizationTransform t;
  t.center = box.center();
  t.half_extent = 0.5 * box.sizes().maxCoeff();
  if (!(t.half_extent > 0.0))
    throw StageError("cannot normalize a degenerate point cloud with zero extent");
  return t;
}

EncodedFrame encode_frame(const Mat3X& points, int occupied_units) {
  const int n = static_cast<int>(points.cols());
  if (n == 0) throw StageError("cannot encode an empty point cloud");
  if (n > kFrameSlots)
    throw StageError("point cloud with " + std::to_string(n) + " points exceeds the " +
                     std::to_string(kFrameSlots) + " frame slots");

  EncodedFrame out;
  out.meta.live_count = n;
  out.meta.occupied_units = occupied_units;
  out.meta.transform = normalize_for_frame(points);

  Mat3X fpts(3, n);
  for (int i = 0; i < n; ++i) fpts.col(i) = out.meta.transform.to_frame(points.col(i));

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (fpts(0, a) != fpts(0, b)) return fpts(0, a) < fpts(0, b);
    if (fpts(1, a) != fpts(1, b)) return fpts(1, a) < fpts(1, b);
    if (fpts(2, a) != fpts(2, b)) return fpts(2, a) < fpts(2, b);
    return a < b;
  });

  out.frame = zero_frame();
  out.meta.slot_to_point.resize(static_cast<std::size_t>(n));
  for (int slot = 0; slot < n; ++slot) {
    out.frame.col(slot) = fpts.col(order[static_cast<std::size_t>(slot)]);
    out.meta.slot_to_point[static_cast<std::size_t>(slot)] = order[static_cast<std::size_t>(slot)];
  }
  return out;
}

Mat3X decode_frame(const FrameMatrix& frame, const FrameMeta& meta) {
  if (static_cast<int>(meta.slot_to_point.size()) != meta.live_count)
    throw StageError("frame meta is inconsistent: permutation size != live count");
  Mat3X points(3, meta.live_count);
  for (int slot = 0; slot < meta.live_count; ++slot) {
    const int orig = meta.slot_to_point[static_cast<std::size_t>(slot)];
    if (orig < 0 || orig >= meta.live_count)
      throw StageError("frame meta permutation entry out of range");
    points.col(orig) = meta.transform.from_frame(frame.col(slot));
  }
  return points;
}

FrameMatrix live_mask(const FrameMeta& meta) {
  FrameMatrix m = zero_frame();
  m.leftCols(meta.live_count).setOnes();
  return m;
}

double time_scalar(int t, int t_total) {
  if (t < 1 || t > t_total) throw StageError("timestep outside 1..T");
  return static_cast<double>(t) / static_cast<double>(t_total);
}

namespace {

constexpr char kMagic[4] = {'D', 'P', 'C', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kPayload = static_cast<std::size_t>(kFrameChannels) * kFrameSlots;

}  // namespace

void save_frame_blob(const std::string& path, const std::vector<FrameMatrix>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError(path + ": cannot open for writing");
  out.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  const std::uint32_t count = static_cast<std::uint32_t>(frames.size());
  const std::uint32_t reserved = 0;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&count), 4);
  out.write(reinterpret_cast<const char*>(&reserved), 4);
  std::vector<float> buf(kPayload);
  for (const FrameMatrix& f : frames) {
    if (f.cols() != kFrameSlots) throw StageError("frame has wrong slot count");
    for (int c = 0; c < kFrameChannels; ++c)
      for (int s = 0; s < kFrameSlots; ++s)
        buf[static_cast<std::size_t>(c) * kFrameSlots + static_cast<std::size_t>(s)] =
            static_cast<float>(f(c, s));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw StageError(path + ": write failed");
}

std::vector<FrameMatrix> load_frame_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError(path + ": cannot open file");
  char magic[4];
  std::uint32_t version = 0, count = 0, reserved = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  in.read(reinterpret_cast<char*>(&reserved), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw StageError(path + ": not a frame blob (bad magic)");
  if (version != kVersion)
    throw StageError(path + ": unsupported frame blob version " + std::to_string(version));
  std::vector<FrameMatrix> frames;
  frames.reserve(count);
  std::vector<float> buf(kPayload);
  for (std::uint32_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw StageError(path + ": truncated frame blob (frame " + std::to_string(i) + ")");
    FrameMatrix f = zero_frame();
    for (int c = 0; c < kFrameChannels; ++c)
      for (int s = 0; s < kFrameSlots; ++s)
        f(c, s) = buf[static_cast<std::size_t>(c) * kFrameSlots + static_cast<std::size_t>(s)];
    frames.push_back(std::move(f));
  }
  // Reject trailing garbage so truncation and concatenation bugs surface here.
  char extra;
  if (in.read(&extra, 1)) throw StageError(path + ": trailing bytes after last frame");
  return frames;
}

void save_frame_meta(const std::string& path, const FrameMeta& meta) {
  json j;
  j["live_count"] = meta.live_count;
  j["occupied_units"] = meta.occupied_units;
  j["slot_to_point"] = meta.slot_to_point;
  j["transform"] = {{"center", {meta.transform.center.x(), meta.transform.center.y(),
                                meta.transform.center.z()}},
                    {"half_extent", meta.transform.half_extent}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

FrameMeta load_frame_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError(path + ": cannot open file");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw StageError(path + ": invalid JSON: " + e.what());
  }
  FrameMeta meta;
  try {
    meta.live_count = j.at("live_count").get<int>();
    meta.occupied_units = j.at("occupied_units").get<int>();
    meta.slot_to_point = j.at("slot_to_point").get<std::vector<int>>();
    const auto& t = j.at("transform");
    const auto c = t.at("center").get<std::vector<double>>();
    if (c.size() != 3) throw StageError(path + ": transform center must have 3 entries");
    meta.transform.center = Vec3(c[0], c[1], c[2]);
    meta.transform.half_extent = t.at("half_extent").get<double>();
  } catch (const json::exception& e) {
    throw StageError(path + ": bad frame meta: " + e.what());
  }
  return meta;
}

}  // namespace polydiff
