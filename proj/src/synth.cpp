#include "capsroute/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "capsroute/errors.hpp"
#include "capsroute/rng.hpp"

namespace capsroute {

namespace {

constexpr std::uint32_t kEcapVersion = 1;
constexpr double kWallThickness = 1.5;
constexpr double kConeHalfAngleDeg = 45.0;
constexpr double kCentreRow = 0.55;
constexpr float kTissue = 0.6f;
constexpr float kWall = 0.9f;
constexpr float kChamber = 0.1f;

constexpr std::uint64_t kLabelStream = 0x6c6162656c;
constexpr std::uint64_t kSplitStream = 0x73706c6974;

std::string describe(const Interval& i) {
  std::ostringstream os;
  os << '[' << i.lo << ", " << i.hi << ']';
  return os.str();
}

// Ellipse test in the ellipse frame; `grow` widens both semi-axes.
bool inside_ellipse(const ChamberGeometry& g, double px, double py, double grow) {
  const double t = g.angle_deg * std::numbers::pi / 180.0;
  const double dx = px - g.cx, dy = py - g.cy;
  const double u = dx * std::cos(t) + dy * std::sin(t);
  const double v = -dx * std::sin(t) + dy * std::cos(t);
  const double a = g.semi_minor + grow, b = g.semi_major + grow;
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

bool inside_cone(double px, double py, std::size_t height, std::size_t width) {
  const double dx = px - 0.5 * static_cast<double>(width);
  const double dy = py;
  const double radius = static_cast<double>(height) - 1.0;
  return std::abs(dx) <= dy * std::tan(kConeHalfAngleDeg * std::numbers::pi / 180.0) && dx * dx + dy * dy <= radius * radius;
}

void render_sample(const SynthConfig& cfg, Phase phase, std::size_t index, int label, float* out, float& y_reg) {
  Rng rng(stream_key(cfg.seed, phase == Phase::train ? 1 : 2, index + 1));
  const Interval& widths = label == 1 ? cfg.width_dilated : cfg.width_normal;
  const Interval& rotation = phase == Phase::train ? cfg.rotation_train : cfg.rotation_test;
  const double chamber_width = rng.uniform(widths.lo, widths.hi);
  ChamberGeometry g;
  g.angle_deg = rng.uniform(rotation.lo, rotation.hi);
  g.cx = 0.5 * static_cast<double>(cfg.width) + rng.uniform(-cfg.translation, cfg.translation);
  g.cy = kCentreRow * static_cast<double>(cfg.height) + rng.uniform(-cfg.translation, cfg.translation);
  g.semi_major = 0.5 * cfg.major_axis;
  g.semi_minor = 0.5 * chamber_width;
  y_reg = static_cast<float>(chamber_width / static_cast<double>(cfg.height));

  const std::size_t h = cfg.height, w = cfg.width;
  std::vector<float> frame(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      float value = 0.0f;
      if (inside_cone(px, py, h, w)) {
        value = kTissue;
        if (inside_ellipse(g, px, py, 0.0)) {
          value = kChamber;
        } else if (inside_ellipse(g, px, py, kWallThickness)) {
          value = kWall;
        }
      }
      double noisy = value;
      if (cfg.noise_sigma > 0.0) noisy += cfg.noise_sigma * rng.normal();
      frame[y * w + x] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }

  for (std::size_t c = 0; c < cfg.channels; ++c) {
    float* plane = out + c * h * w;
    const double keep = cfg.three_crop ? 1.0 - 0.25 * static_cast<double>(c) : 1.0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double sx = 0.5 * static_cast<double>(w) + (static_cast<double>(x) + 0.5 - 0.5 * static_cast<double>(w)) * keep;
        const double sy = 0.5 * static_cast<double>(h) + (static_cast<double>(y) + 0.5 - 0.5 * static_cast<double>(h)) * keep;
        const auto ix = std::min(w - 1, static_cast<std::size_t>(sx));
        const auto iy = std::min(h - 1, static_cast<std::size_t>(sy));
        plane[y * w + x] = frame[iy * w + ix];
      }
  }
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

}  // namespace

void SynthConfig::validate() const {
  if (n_samples == 0) throw ConfigError("n_samples must be positive");
  if (channels == 0 || height == 0 || width == 0 || channels > 0xffff || height > 0xffff || width > 0xffff) {
    throw ConfigError("image extents must be in [1, 65535]");
  }
  if (!(positive_ratio > 0.0 && positive_ratio < 1.0)) throw ConfigError("positive_ratio must lie in (0, 1)");
  for (const Interval* i : {&rotation_train, &rotation_test, &width_normal, &width_dilated}) {
    if (!(i->lo <= i->hi)) throw ConfigError("interval " + describe(*i) + " is inverted");
  }
  if (width_normal.lo <= 0.0) throw ConfigError("chamber widths must be positive");
  if (!allow_width_overlap && width_normal.overlaps(width_dilated)) {
    throw ConfigError("width intervals " + describe(width_normal) + " and " + describe(width_dilated) +
                      " overlap; set allow_width_overlap to permit this");
  }
  if (translation < 0.0 || noise_sigma < 0.0 || major_axis <= 0.0) {
    throw ConfigError("translation, noise_sigma must be non-negative and major_axis positive");
  }
  if (three_crop && channels != 3) throw ConfigError("three_crop mode produces exactly 3 channels");
  const double reach = 0.5 * std::max({major_axis, width_normal.hi, width_dilated.hi}) + kWallThickness + translation;
  const double room = std::min({0.5 * static_cast<double>(width), kCentreRow * static_cast<double>(height),
                                (1.0 - kCentreRow) * static_cast<double>(height)}) - 0.5;
  if (reach > room) {
    std::ostringstream os;
    os << "chamber reaches " << reach << " px from its centre but the " << height << "x" << width
       << " frame leaves only " << room << " px";
    throw ConfigError(os.str());
  }
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.channels = channels;
  out.height = height;
  out.width = width;
  out.pixels.reserve(indices.size() * sample_size());
  for (std::size_t i : indices) {
    const auto img = image(i);
    out.pixels.insert(out.pixels.end(), img.begin(), img.end());
    out.labels.push_back(labels[i]);
    out.y_reg.push_back(y_reg[i]);
  }
  return out;
}

std::size_t chamber_pixel_count(const ChamberGeometry& geometry, std::size_t height, std::size_t width) {
  std::size_t count = 0;
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      if (inside_ellipse(geometry, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5, 0.0)) ++count;
    }
  return count;
}

Dataset generate(const SynthConfig& config, Phase phase) {
  config.validate();
  const std::size_t n = config.n_samples;
  const auto positives = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.positive_ratio));
  std::vector<int> labels(n, 0);
  std::fill_n(labels.begin(), positives, 1);
  Rng shuffler(stream_key(config.seed, phase == Phase::train ? 1 : 2, kLabelStream));
  shuffler.shuffle(std::span(labels));

  Dataset data;
  data.channels = config.channels;
  data.height = config.height;
  data.width = config.width;
  data.labels = labels;
  data.pixels.assign(n * data.sample_size(), 0.0f);
  data.y_reg.assign(n, 0.0f);
  const long count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    render_sample(config, phase, idx, labels[idx], data.pixels.data() + idx * data.sample_size(), data.y_reg[idx]);
  }
  return data;
}

std::vector<std::uint8_t> serialize(const Dataset& data) {
  const std::size_t per = data.sample_size();
  std::vector<std::uint8_t> out;
  out.reserve(kEcapHeaderBytes + data.size() * (4 * per + 5));
  for (char c : {'E', 'C', 'A', 'P'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, kEcapVersion);
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u16(out, static_cast<std::uint16_t>(data.channels));
  put_u16(out, static_cast<std::uint16_t>(data.height));
  put_u16(out, static_cast<std::uint16_t>(data.width));
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (float p : data.image(i)) put_u32(out, std::bit_cast<std::uint32_t>(p));
    out.push_back(static_cast<std::uint8_t>(data.labels[i]));
    put_u32(out, std::bit_cast<std::uint32_t>(data.y_reg[i]));
  }
  return out;
}

Dataset deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ECAP", 4) != 0) {
    throw FormatError(bytes.size() < 4 ? "truncated magic" : "bad magic, expected \"ECAP\"", 0);
  }
  if (bytes.size() < kEcapHeaderBytes) throw FormatError("truncated header", bytes.size());
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kEcapVersion) throw FormatError("unsupported version " + std::to_string(version), 4);
  Dataset data;
  const std::uint32_t count = get_u32(bytes, 8);
  data.channels = get_u16(bytes, 12);
  data.height = get_u16(bytes, 14);
  data.width = get_u16(bytes, 16);
  const std::size_t per = data.sample_size();
  const std::size_t record = 4 * per + 5;
  data.pixels.resize(count * per);
  data.labels.resize(count);
  data.y_reg.resize(count);
  std::size_t at = kEcapHeaderBytes;
  for (std::size_t i = 0; i < count; ++i) {
    if (bytes.size() < at + record) {
      throw FormatError("truncated sample " + std::to_string(i) + " of " + std::to_string(count), bytes.size());
    }
    for (std::size_t k = 0; k < per; ++k, at += 4) data.pixels[i * per + k] = std::bit_cast<float>(get_u32(bytes, at));
    if (bytes[at] > 1) throw FormatError("label byte " + std::to_string(bytes[at]) + " is not 0/1", at);
    data.labels[i] = bytes[at];
    ++at;
    data.y_reg[i] = std::bit_cast<float>(get_u32(bytes, at));
    at += 4;
  }
  if (at != bytes.size()) throw FormatError("trailing bytes after last sample", at);
  return data;
}

void save(const Dataset& data, const std::filesystem::path& path) {
  const auto bytes = serialize(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

DatasetSplits split(const Dataset& data, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  std::array<std::vector<std::size_t>, 3> parts;
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.labels[i] == cls) members.push_back(i);
    }
    Rng rng(stream_key(seed, kSplitStream, static_cast<std::uint64_t>(cls)));
    rng.shuffle(std::span(members));
    const double n = static_cast<double>(members.size());
    const auto n_train = std::min(members.size(), static_cast<std::size_t>(std::llround(fractions[0] * n)));
    const auto n_val = std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(fractions[1] * n)));
    parts[0].insert(parts[0].end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    parts[1].insert(parts[1].end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                    members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    parts[2].insert(parts[2].end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
  }

  const std::size_t total_pos = data.positives();
  static constexpr const char* kNames[] = {"train", "val", "test"};
  for (std::size_t s = 0; s < 3; ++s) {
    Rng rng(stream_key(seed, kSplitStream, 10 + s));
    rng.shuffle(std::span(parts[s]));
    const auto pos = std::count_if(parts[s].begin(), parts[s].end(), [&](std::size_t i) { return data.labels[i] == 1; });
    if (!parts[s].empty() && total_pos > 0 && pos == 0) {
      throw StratificationError(std::string(kNames[s]) + " split of " + std::to_string(parts[s].size()) +
                                " samples received no positives");
    }
  }
  return DatasetSplits{data.subset(parts[0]), data.subset(parts[1]), data.subset(parts[2])};
}

}  // namespace capsroute
