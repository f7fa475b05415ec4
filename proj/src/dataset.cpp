#include "seqstn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numbers>

#include "seqstn/bytesio.hpp"

namespace seqstn {

namespace {
constexpr uint32_t kIdxImagesMagic = 2051;
constexpr uint32_t kIdxLabelsMagic = 2049;
constexpr int kDigitSide = 28;
constexpr double kMaskThreshold = 0.05;
}  // namespace

std::vector<Tensor> parse_idx_images(std::istream& is) {
  const uint32_t magic = bytesio::get_u32be(is);
  if (magic != kIdxImagesMagic)
    throw FormatError("IDX images: expected magic 2051, got " + std::to_string(magic));
  const int64_t count = bytesio::get_u32be(is);
  const int64_t rows = bytesio::get_u32be(is);
  const int64_t cols = bytesio::get_u32be(is);
  if (rows < 1 || cols < 1 || rows > 4096 || cols > 4096)
    throw FormatError("IDX images: implausible dimensions");
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(count));
  std::vector<unsigned char> buf(static_cast<size_t>(rows * cols));
  for (int64_t i = 0; i < count; ++i) {
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw FormatError("IDX images: truncated payload at image " + std::to_string(i));
    Tensor t({rows, cols});
    for (size_t j = 0; j < buf.size(); ++j)
      t[static_cast<int64_t>(j)] = static_cast<double>(buf[j]) / 255.0;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<int> parse_idx_labels(std::istream& is) {
  const uint32_t magic = bytesio::get_u32be(is);
  if (magic != kIdxLabelsMagic)
    throw FormatError("IDX labels: expected magic 2049, got " + std::to_string(magic));
  const int64_t count = bytesio::get_u32be(is);
  std::vector<int> out(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    char b;
    if (!is.get(b)) throw FormatError("IDX labels: truncated payload");
    const int label = static_cast<unsigned char>(b);
    if (label > 9) throw FormatError("IDX labels: label " + std::to_string(label) + " out of range");
    out[static_cast<size_t>(i)] = label;
  }
  return out;
}

std::vector<MnistDigit> load_mnist(const std::string& images_path, const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw FormatError("cannot open " + images_path);
  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw FormatError("cannot open " + labels_path);
  std::vector<Tensor> images = parse_idx_images(fi);
  std::vector<int> labels = parse_idx_labels(fl);
  if (images.size() != labels.size())
    throw FormatError("image/label counts differ: " + std::to_string(images.size()) + " vs " +
                      std::to_string(labels.size()));
  std::vector<MnistDigit> out(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].extent(0) != kDigitSide || images[i].extent(1) != kDigitSide)
      throw FormatError("expected 28x28 digits, got " + images[i].shape_str());
    out[i].pixels = std::move(images[i]);
    out[i].label = labels[i];
  }
  return out;
}

RotatedDigit rotate_digit(const Tensor& digit, double angle) {
  if (digit.rank() != 2) throw ShapeError("rotate_digit: digit must be rank 2");
  const int64_t H = digit.extent(0), W = digit.extent(1);
  const double c = std::cos(angle), s = std::sin(angle);
  const auto span = [&](double a, double b) {
    return std::max<int64_t>(
        1, static_cast<int64_t>(std::ceil(a * std::abs(c) + b * std::abs(s) - 1e-9)));
  };
  const int64_t bw = span(static_cast<double>(W), static_cast<double>(H));
  const int64_t bh = span(static_cast<double>(H), static_cast<double>(W));
  const double cx_src = static_cast<double>(W - 1) / 2.0, cy_src = static_cast<double>(H - 1) / 2.0;
  const double cx_dst = static_cast<double>(bw - 1) / 2.0, cy_dst = static_cast<double>(bh - 1) / 2.0;

  RotatedDigit out;
  out.pixels = Tensor({bh, bw});
  out.mask.assign(static_cast<size_t>(bh * bw), 0);
  const double* src = digit.data();
  for (int64_t y = 0; y < bh; ++y) {
    for (int64_t x = 0; x < bw; ++x) {
      const double dx = static_cast<double>(x) - cx_dst;
      const double dy = static_cast<double>(y) - cy_dst;
      const double sx = c * dx + s * dy + cx_src;
      const double sy = -s * dx + c * dy + cy_src;
      const int64_t ix = static_cast<int64_t>(std::floor(sx));
      const int64_t iy = static_cast<int64_t>(std::floor(sy));
      const double fx = sx - static_cast<double>(ix);
      const double fy = sy - static_cast<double>(iy);
      const auto at = [&](int64_t yy, int64_t xx) {
        return (yy < 0 || yy >= H || xx < 0 || xx >= W) ? 0.0 : src[yy * W + xx];
      };
      const double v = (1.0 - fy) * ((1.0 - fx) * at(iy, ix) + fx * at(iy, ix + 1)) +
                       fy * ((1.0 - fx) * at(iy + 1, ix) + fx * at(iy + 1, ix + 1));
      out.pixels(y, x) = v;
      if (v > kMaskThreshold) out.mask[static_cast<size_t>(y * bw + x)] = 1;
    }
  }
  return out;
}

namespace {
struct Placement {
  std::array<std::array<int, 2>, 4> tl;  // top-left (x, y)
  int bw = 0, bh = 0;
};

bool masks_intersect(const RotatedDigit& a, std::array<int, 2> ta, const RotatedDigit& b,
                     std::array<int, 2> tb, int bw, int bh) {
  const int x0 = std::max(ta[0], tb[0]), x1 = std::min(ta[0] + bw, tb[0] + bw);
  const int y0 = std::max(ta[1], tb[1]), y1 = std::min(ta[1] + bh, tb[1] + bh);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x)
      if (a.mask[static_cast<size_t>((y - ta[1]) * bw + (x - ta[0]))] &&
          b.mask[static_cast<size_t>((y - tb[1]) * bw + (x - tb[0]))])
        return true;
  return false;
}
}  // namespace

CanvasExample generate_canvas(uint64_t seed, const std::vector<MnistDigit>& pool,
                              CanvasTrace* trace) {
  if (pool.empty()) throw ValueError("generate_canvas: empty digit pool");
  Rng rng(seed);
  constexpr int N = kCanvasSize;
  constexpr double kQuarterPi = std::numbers::pi / 4.0;

  CanvasExample ex;
  ex.seed = seed;
  std::array<const MnistDigit*, 4> picks{};
  for (int i = 0; i < kDigitsPerCanvas; ++i) {
    picks[static_cast<size_t>(i)] = &pool[static_cast<size_t>(rng.next_below(pool.size()))];
    ex.labels[static_cast<size_t>(i)] = picks[static_cast<size_t>(i)]->label;
  }

  std::array<RotatedDigit, 4> rotated;
  Placement place;
  int total_attempts = 0;
  bool placed = false;
  while (!placed) {
    ex.angle = rng.uniform(-kQuarterPi, kQuarterPi);
    for (int i = 0; i < kDigitsPerCanvas; ++i)
      rotated[static_cast<size_t>(i)] = rotate_digit(picks[static_cast<size_t>(i)]->pixels, ex.angle);
    place.bw = static_cast<int>(rotated[0].pixels.extent(1));
    place.bh = static_cast<int>(rotated[0].pixels.extent(0));

    std::array<std::array<int, 2>, 4> off{};
    int lox = 0, hix = N - place.bw, loy = 0, hiy = N - place.bh;
    for (int i = 0; i < kDigitsPerCanvas; ++i) {
      off[static_cast<size_t>(i)] = {
          static_cast<int>(std::lround(kDigitSpacing * i * std::cos(ex.angle))),
          static_cast<int>(std::lround(kDigitSpacing * i * std::sin(ex.angle)))};
      lox = std::max(lox, -off[static_cast<size_t>(i)][0]);
      hix = std::min(hix, N - place.bw - off[static_cast<size_t>(i)][0]);
      loy = std::max(loy, -off[static_cast<size_t>(i)][1]);
      hiy = std::min(hiy, N - place.bh - off[static_cast<size_t>(i)][1]);
    }
    if (hix < lox || hiy < loy) {
      if (++total_attempts >= 1000)
        throw GenerationError("generate_canvas: no in-bounds placement", seed);
      continue;  // cannot happen at the chosen spacing, but redraw the angle if it does
    }

    for (int attempt = 0; attempt < 100; ++attempt) {
      if (++total_attempts > 1000)
        throw GenerationError("generate_canvas: placement failed after 1000 attempts", seed);
      const int x0 = lox + static_cast<int>(rng.next_below(static_cast<uint64_t>(hix - lox + 1)));
      const int y0 = loy + static_cast<int>(rng.next_below(static_cast<uint64_t>(hiy - loy + 1)));
      for (int i = 0; i < kDigitsPerCanvas; ++i)
        place.tl[static_cast<size_t>(i)] = {x0 + off[static_cast<size_t>(i)][0],
                                            y0 + off[static_cast<size_t>(i)][1]};
      bool overlap = false;
      for (int i = 0; i < kDigitsPerCanvas && !overlap; ++i)
        for (int j = i + 1; j < kDigitsPerCanvas && !overlap; ++j)
          overlap = masks_intersect(rotated[static_cast<size_t>(i)], place.tl[static_cast<size_t>(i)],
                                    rotated[static_cast<size_t>(j)], place.tl[static_cast<size_t>(j)],
                                    place.bw, place.bh);
      if (!overlap) {
        placed = true;
        break;
      }
    }
  }

  ex.anchors = place.tl;
  ex.canvas = Tensor({N, N});
  for (int i = 0; i < kDigitsPerCanvas; ++i) {
    const RotatedDigit& r = rotated[static_cast<size_t>(i)];
    const auto [tx, ty] = std::pair{place.tl[static_cast<size_t>(i)][0],
                                    place.tl[static_cast<size_t>(i)][1]};
    for (int y = 0; y < place.bh; ++y)
      for (int x = 0; x < place.bw; ++x) {
        double& dst = ex.canvas(ty + y, tx + x);
        dst = std::max(dst, r.pixels(y, x));
      }
  }

  if (trace) {
    trace->box_dims = {};
    trace->masks.assign(4, std::vector<uint8_t>(static_cast<size_t>(N * N), 0));
    for (int i = 0; i < kDigitsPerCanvas; ++i) {
      trace->box_dims[static_cast<size_t>(i)] = {place.bw, place.bh};
      const RotatedDigit& r = rotated[static_cast<size_t>(i)];
      for (int y = 0; y < place.bh; ++y)
        for (int x = 0; x < place.bw; ++x)
          if (r.mask[static_cast<size_t>(y * place.bw + x)])
            trace->masks[static_cast<size_t>(i)][static_cast<size_t>(
                (place.tl[static_cast<size_t>(i)][1] + y) * N +
                place.tl[static_cast<size_t>(i)][0] + x)] = 1;
    }
    trace->noise_at.clear();
  }

  for (int b = 0; b < kNoiseBlocks; ++b) {
    const MnistDigit& src = pool[static_cast<size_t>(rng.next_below(pool.size()))];
    const int sx = static_cast<int>(rng.next_below(kDigitSide - kNoiseSize + 1));
    const int sy = static_cast<int>(rng.next_below(kDigitSide - kNoiseSize + 1));
    const int dx = static_cast<int>(rng.next_below(N - kNoiseSize + 1));
    const int dy = static_cast<int>(rng.next_below(N - kNoiseSize + 1));
    for (int y = 0; y < kNoiseSize; ++y)
      for (int x = 0; x < kNoiseSize; ++x) {
        double& dst = ex.canvas(dy + y, dx + x);
        dst = std::max(dst, src.pixels(sy + y, sx + x));
      }
    if (trace) trace->noise_at.push_back({dx, dy});
  }
  return ex;
}

DatasetSplit generate_split(uint64_t master_seed, int64_t count,
                            const std::vector<MnistDigit>& pool, SplitRole role) {
  DatasetSplit split;
  split.role = role;
  split.examples.resize(static_cast<size_t>(count));
#pragma omp parallel for schedule(dynamic, 16)
  for (int64_t i = 0; i < count; ++i)
    split.examples[static_cast<size_t>(i)] =
        generate_canvas(Rng::derive(master_seed, static_cast<uint64_t>(i)), pool);
  return split;
}

namespace {
constexpr uint16_t kSqmnVersion = 1;
}

void write_split(const std::string& path, const DatasetSplit& split) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  bytesio::put_magic(os, "SQMN");
  bytesio::put_u16le(os, kSqmnVersion);
  bytesio::put_u16le(os, kCanvasSize);
  bytesio::put_u16le(os, kCanvasSize);
  bytesio::put_u64le(os, split.examples.size());
  std::vector<unsigned char> buf(kCanvasSize * kCanvasSize);
  for (const CanvasExample& ex : split.examples) {
    for (size_t i = 0; i < buf.size(); ++i) {
      const long q = std::lround(ex.canvas[static_cast<int64_t>(i)] * 255.0);
      buf[i] = static_cast<unsigned char>(std::clamp(q, 0l, 255l));
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    for (int l : ex.labels) os.put(static_cast<char>(l));
    bytesio::put_f64le(os, ex.angle);
    bytesio::put_u64le(os, ex.seed);
  }
  if (!os) throw FormatError("short write to " + path);
}

namespace {
struct SqmnHeader {
  int h, w;
  uint64_t count;
};

SqmnHeader read_sqmn_header(std::istream& is, const std::string& path) {
  bytesio::expect_magic(is, "SQMN", path.c_str());
  const uint16_t version = bytesio::get_u16le(is);
  if (version != kSqmnVersion)
    throw FormatError(path + ": unsupported SQMN version " + std::to_string(version));
  SqmnHeader h;
  h.h = bytesio::get_u16le(is);
  h.w = bytesio::get_u16le(is);
  h.count = bytesio::get_u64le(is);
  if (h.h < 1 || h.w < 1) throw FormatError(path + ": bad canvas dimensions");
  return h;
}
}  // namespace

DatasetSplit read_split(const std::string& path, SplitRole role) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  const SqmnHeader hdr = read_sqmn_header(is, path);
  DatasetSplit split;
  split.role = role;
  split.examples.resize(hdr.count);
  std::vector<unsigned char> buf(static_cast<size_t>(hdr.h * hdr.w));
  for (CanvasExample& ex : split.examples) {
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
      throw FormatError(path + ": truncated canvas payload");
    ex.canvas = Tensor({hdr.h, hdr.w});
    for (size_t i = 0; i < buf.size(); ++i)
      ex.canvas[static_cast<int64_t>(i)] = static_cast<double>(buf[i]) / 255.0;
    for (int l = 0; l < 4; ++l) {
      char b;
      if (!is.get(b)) throw FormatError(path + ": truncated labels");
      ex.labels[static_cast<size_t>(l)] = static_cast<unsigned char>(b);
    }
    ex.angle = bytesio::get_f64le(is);
    ex.seed = bytesio::get_u64le(is);
  }
  return split;
}

CompactSplit read_split_compact(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  const SqmnHeader hdr = read_sqmn_header(is, path);
  CompactSplit out;
  out.count = static_cast<int64_t>(hdr.count);
  out.h = hdr.h;
  out.w = hdr.w;
  out.canvases.resize(hdr.count * static_cast<size_t>(hdr.h * hdr.w));
  out.labels.resize(hdr.count);
  for (uint64_t i = 0; i < hdr.count; ++i) {
    if (!is.read(reinterpret_cast<char*>(out.canvases.data() + i * static_cast<size_t>(hdr.h * hdr.w)),
                 static_cast<std::streamsize>(hdr.h * hdr.w)))
      throw FormatError(path + ": truncated canvas payload");
    for (int l = 0; l < 4; ++l) {
      char b;
      if (!is.get(b)) throw FormatError(path + ": truncated labels");
      out.labels[i][static_cast<size_t>(l)] = static_cast<uint8_t>(b);
    }
    bytesio::get_f64le(is);  // angle and seed are not needed for training
    bytesio::get_u64le(is);
  }
  return out;
}

}  // namespace seqstn
