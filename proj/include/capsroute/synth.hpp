#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace capsroute {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
};

enum class Phase { train, test };

/// Generator settings for the echo-like benchmark. Widths, the major axis and
/// translation are in pixels, rotations in degrees.
struct SynthConfig {
  std::size_t n_samples = 1000;
  std::size_t channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  double positive_ratio = 0.2;
  Interval rotation_train{-15.0, 15.0};
  Interval rotation_test{-15.0, 15.0};
  double translation = 2.0;
  Interval width_normal{6.0, 9.0};
  Interval width_dilated{10.0, 13.0};
  double major_axis = 18.0;
  double noise_sigma = 0.05;
  std::uint64_t seed = 10;
  bool three_crop = false;
  bool allow_width_overlap = false;

  void validate() const;
};

struct Dataset {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // [n, C, H, W] row-major, values in [0, 1]
  std::vector<int> labels;    // 0 normal, 1 dilated
  std::vector<float> y_reg;   // chamber width / height

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return channels * height * width; }
  std::span<const float> image(std::size_t i) const {
    return std::span<const float>(pixels).subspan(i * sample_size(), sample_size());
  }
  std::size_t positives() const;
  Dataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const Dataset&) const = default;
};

/// A rotated ellipse; the major axis is vertical at angle 0.
struct ChamberGeometry {
  double cx = 0.0;
  double cy = 0.0;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double angle_deg = 0.0;
};

// Pixels whose centre lies inside the ellipse.
std::size_t chamber_pixel_count(const ChamberGeometry& geometry, std::size_t height, std::size_t width);

// Exactly round(n * positive_ratio) positives. Sample i depends only on
// (seed, phase, i); the phase selects the rotation range.
Dataset generate(const SynthConfig& config, Phase phase = Phase::train);

// ECAP v1, little-endian: "ECAP", u32 version, u32 count, u16 C, u16 H, u16 W,
// then per sample C*H*W f32 pixels, u8 label, f32 y_reg.
inline constexpr std::size_t kEcapHeaderBytes = 18;
std::vector<std::uint8_t> serialize(const Dataset& data);
Dataset deserialize(std::span<const std::uint8_t> bytes);
void save(const Dataset& data, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Stratified by label, deterministic under `seed`.
DatasetSplits split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace capsroute
