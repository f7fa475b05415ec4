#pragma once
#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seqstn/tensor.hpp"

namespace seqstn {

/// One source digit: 28x28 pixels in [0, 1].
struct MnistDigit {
  Tensor pixels;
  int label = 0;
};

/// IDX readers (big-endian, magic 2051 for images / 2049 for labels). Byte
/// pixels are scaled to [0, 1] by /255.
std::vector<Tensor> parse_idx_images(std::istream& is);
std::vector<int> parse_idx_labels(std::istream& is);
/// Loads and pairs the two files; count mismatch is a FormatError.
std::vector<MnistDigit> load_mnist(const std::string& images_path, const std::string& labels_path);

/// Inverse-mapping rotation about the digit center with bilinear
/// interpolation. The output box is the tight axis-aligned box of the rotated
/// 28x28 square; `mask` flags pixels with value > 0.05.
struct RotatedDigit {
  Tensor pixels;               // [bh x bw]
  std::vector<uint8_t> mask;   // bh*bw, row-major
};
RotatedDigit rotate_digit(const Tensor& digit, double angle);

constexpr int kCanvasSize = 100;
constexpr int kDigitsPerCanvas = 4;
constexpr int kNoiseBlocks = 10;
constexpr int kNoiseSize = 6;
/// Center spacing of consecutive digits along the rotated baseline. 22 px is
/// the largest integer spacing for which four co-rotated 28 px boxes fit a
/// 100 px canvas at every angle in [-pi/4, pi/4].
constexpr int kDigitSpacing = 22;

struct CanvasExample {
  Tensor canvas;                                  // [100 x 100], values in [0, 1]
  std::array<int, 4> labels{};                    // reading order along the baseline
  double angle = 0.0;                             // shared rotation, radians
  std::array<std::array<int, 2>, 4> anchors{};    // top-left (x, y) of each digit box
  uint64_t seed = 0;
};

/// Extra placement detail for invariant checks; not part of the container.
struct CanvasTrace {
  std::vector<std::vector<uint8_t>> masks;        // per digit, canvas-sized
  std::array<std::array<int, 2>, 4> box_dims{};   // (w, h) per digit box
  std::vector<std::array<int, 2>> noise_at;       // top-left of each noise block
};

/// Synthesizes one canvas: shared angle uniform in [-pi/4, pi/4], four digits
/// drawn with replacement, centers on the rotated baseline at kDigitSpacing,
/// first anchor uniform among in-bounds placements, anchor redrawn on mask
/// overlap (up to 100 times, then the angle is redrawn; 1000 attempts total
/// before GenerationError). Ten 6x6 noise crops of random pool digits are
/// max-composited last and may overlap anything.
CanvasExample generate_canvas(uint64_t seed, const std::vector<MnistDigit>& pool,
                              CanvasTrace* trace = nullptr);

enum class SplitRole { train, val, test };

struct DatasetSplit {
  std::vector<CanvasExample> examples;
  SplitRole role = SplitRole::train;
};

/// Deterministic split generation; example i uses child seed
/// Rng::derive(master_seed, i), so output is independent of scheduling.
DatasetSplit generate_split(uint64_t master_seed, int64_t count,
                            const std::vector<MnistDigit>& pool, SplitRole role);

// "SQMN" container: magic, u16 version, u16 canvas height, u16 canvas width,
// u64 example count; per example the canvas as round(v*255) bytes, 4 label
// bytes, angle f64, seed u64. Everything little-endian.
void write_split(const std::string& path, const DatasetSplit& split);
DatasetSplit read_split(const std::string& path, SplitRole role);

/// Byte-backed view of a split for training at scale (the f64 expansion of a
/// full 70000-example split would not fit modest RAM).
struct CompactSplit {
  int64_t count = 0;
  int h = 0, w = 0;
  std::vector<uint8_t> canvases;                   // count * h * w
  std::vector<std::array<uint8_t, 4>> labels;
};
CompactSplit read_split_compact(const std::string& path);

}  // namespace seqstn
