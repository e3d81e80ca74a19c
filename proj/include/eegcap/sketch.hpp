#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eegcap/errors.hpp"
#include "eegcap/util.hpp"

namespace eegcap {

// Grayscale image, values in [0,1].
struct GrayImage {
  MatD pix;

  GrayImage() = default;
  GrayImage(size_t h, size_t w, double fill = 0.0) : pix(h, w, fill) {}

  size_t height() const { return pix.rows; }
  size_t width() const { return pix.cols; }
  double& at(size_t r, size_t c) { return pix.at(r, c); }
  double at(size_t r, size_t c) const { return pix.at(r, c); }
};

// Interleaved RGB, values in [0,1].
struct RgbImage {
  size_t height = 0;
  size_t width = 0;
  std::vector<double> pix;  // 3 * height * width

  RgbImage() = default;
  RgbImage(size_t h, size_t w) : height(h), width(w), pix(3 * h * w, 0.0) {}

  double& at(size_t r, size_t c, int ch) { return pix[(r * width + c) * 3 + ch]; }
  double at(size_t r, size_t c, int ch) const { return pix[(r * width + c) * 3 + ch]; }
};

struct SketchParams {
  double gaussian_sigma = 1.4;
  int kernel_radius = 2;  // 2 -> 5x5 kernel
  double canny_low = 0.1;   // fraction of max gradient magnitude
  double canny_high = 0.3;
};

namespace detail {

inline void check_image(const GrayImage& img) {
  if (img.height() < 3 || img.width() < 3) raise(ErrorCode::TooSmall, "image smaller than 3x3");
  for (double v : img.pix.data)
    if (!(v >= 0.0 && v <= 1.0)) raise(ErrorCode::ShapeMismatch, "pixel outside [0,1]");
}

inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[static_cast<size_t>(i + radius)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// symmetric border: x[-1] = x[0], x[n] = x[n-1]
inline size_t reflect(long i, long n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return static_cast<size_t>(i);
}

}  // namespace detail

// Separable Gaussian convolution, reflective borders, kernel normalized to
// sum 1 (mean brightness is preserved).
inline GrayImage gaussian_blur(const GrayImage& img, const SketchParams& params = {}) {
  detail::check_image(img);
  const auto k = detail::gaussian_kernel(params.gaussian_sigma, params.kernel_radius);
  const int r = params.kernel_radius;
  const long H = static_cast<long>(img.height()), W = static_cast<long>(img.width());

  GrayImage tmp(img.height(), img.width());
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[static_cast<size_t>(i + r)] * img.at(static_cast<size_t>(y), detail::reflect(x + i, W));
      tmp.at(static_cast<size_t>(y), static_cast<size_t>(x)) = acc;
    }
  GrayImage out(img.height(), img.width());
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i)
        acc += k[static_cast<size_t>(i + r)] * tmp.at(detail::reflect(y + i, H), static_cast<size_t>(x));
      out.at(static_cast<size_t>(y), static_cast<size_t>(x)) = std::clamp(acc, 0.0, 1.0);
    }
  return out;
}

// Sobel -> 4-direction non-maximum suppression -> double threshold at
// fractions of the max magnitude -> hysteresis growth of strong edges through
// weak ones. Returns a binary {0,1} map. Border pixels carry no gradient.
inline GrayImage canny(const GrayImage& img, const SketchParams& params = {}) {
  detail::check_image(img);
  if (!(params.canny_low < params.canny_high))
    raise(ErrorCode::ShapeMismatch, "canny_low must be < canny_high");
  const long H = static_cast<long>(img.height()), W = static_cast<long>(img.width());

  MatD mag(img.height(), img.width(), 0.0);
  MatD dir(img.height(), img.width(), 0.0);
  double max_mag = 0.0;
  for (long y = 1; y + 1 < H; ++y)
    for (long x = 1; x + 1 < W; ++x) {
      auto p = [&](long dy, long dx) {
        return img.at(static_cast<size_t>(y + dy), static_cast<size_t>(x + dx));
      };
      const double gx = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
      const double gy = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
      const double m = std::hypot(gx, gy);
      mag.at(static_cast<size_t>(y), static_cast<size_t>(x)) = m;
      dir.at(static_cast<size_t>(y), static_cast<size_t>(x)) = std::atan2(gy, gx);
      max_mag = std::max(max_mag, m);
    }
  if (max_mag <= 0.0) return GrayImage(img.height(), img.width(), 0.0);

  // quantize orientation into 4 directions: 0, 45, 90, 135 degrees
  static constexpr int kDy[4] = {0, 1, 1, 1};
  static constexpr int kDx[4] = {1, 1, 0, -1};
  MatD thin(img.height(), img.width(), 0.0);
  for (long y = 1; y + 1 < H; ++y)
    for (long x = 1; x + 1 < W; ++x) {
      const double m = mag.at(static_cast<size_t>(y), static_cast<size_t>(x));
      if (m <= 0.0) continue;
      double a = dir.at(static_cast<size_t>(y), static_cast<size_t>(x));
      if (a < 0) a += std::numbers::pi;
      const int q = static_cast<int>(std::floor((a + std::numbers::pi / 8) / (std::numbers::pi / 4))) % 4;
      auto at_mag = [&](long yy, long xx) {
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
        return mag.at(static_cast<size_t>(yy), static_cast<size_t>(xx));
      };
      const double fwd = at_mag(y + kDy[q], x + kDx[q]);
      const double bwd = at_mag(y - kDy[q], x - kDx[q]);
      // >= forward and > backward keeps exactly one pixel on a plateau of two
      if (m >= fwd && m > bwd) thin.at(static_cast<size_t>(y), static_cast<size_t>(x)) = m;
    }

  const double low = params.canny_low * max_mag;
  const double high = params.canny_high * max_mag;
  GrayImage out(img.height(), img.width(), 0.0);
  std::vector<std::pair<long, long>> stack;
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      if (thin.at(static_cast<size_t>(y), static_cast<size_t>(x)) >= high) {
        out.at(static_cast<size_t>(y), static_cast<size_t>(x)) = 1.0;
        stack.emplace_back(y, x);
      }
  while (!stack.empty()) {
    auto [y, x] = stack.back();
    stack.pop_back();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const long yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
        if (out.at(static_cast<size_t>(yy), static_cast<size_t>(xx)) != 0.0) continue;
        if (thin.at(static_cast<size_t>(yy), static_cast<size_t>(xx)) >= low) {
          out.at(static_cast<size_t>(yy), static_cast<size_t>(xx)) = 1.0;
          stack.emplace_back(yy, xx);
        }
      }
  }
  return out;
}

inline GrayImage to_grayscale(const RgbImage& rgb) {
  GrayImage g(rgb.height, rgb.width);
  for (size_t y = 0; y < rgb.height; ++y)
    for (size_t x = 0; x < rgb.width; ++x)
      g.at(y, x) = std::clamp(
          0.299 * rgb.at(y, x, 0) + 0.587 * rgb.at(y, x, 1) + 0.114 * rgb.at(y, x, 2), 0.0, 1.0);
  return g;
}

// Full sketching pass: luminance grayscale -> blur -> canny.
inline GrayImage sketchify(const RgbImage& rgb, const SketchParams& params = {}) {
  if (rgb.height < 3 || rgb.width < 3) raise(ErrorCode::TooSmall, "image smaller than 3x3");
  return canny(gaussian_blur(to_grayscale(rgb), params), params);
}

// --- lossless image IO (binary PPM/PGM) -----------------------------------

inline RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::MissingBlob, "cannot open image " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") raise(ErrorCode::MalformedManifest, "expected binary PPM (P6): " + path.string());
  auto next_int = [&]() {
    int v;
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string comment;
        std::getline(in, comment);
        continue;
      }
      in >> v;
      break;
    }
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  in.get();
  if (w < 1 || h < 1 || maxval != 255)
    raise(ErrorCode::MalformedManifest, "unsupported PPM geometry in " + path.string());
  RgbImage img(static_cast<size_t>(h), static_cast<size_t>(w));
  std::vector<unsigned char> buf(static_cast<size_t>(3 * w * h));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) raise(ErrorCode::MalformedManifest, "truncated PPM " + path.string());
  for (size_t i = 0; i < buf.size(); ++i) img.pix[i] = buf[i] / 255.0;
  return img;
}

inline void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.pix)
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  if (!out) raise(ErrorCode::Internal, "failed writing " + path.string());
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  for (double v : img.pix.data)
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  if (!out) raise(ErrorCode::Internal, "failed writing " + path.string());
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::MissingBlob, "cannot open image " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") raise(ErrorCode::MalformedManifest, "expected binary PGM (P5): " + path.string());
  int w, h, maxval;
  in >> w >> h >> maxval;
  in.get();
  if (w < 1 || h < 1 || maxval != 255)
    raise(ErrorCode::MalformedManifest, "unsupported PGM geometry in " + path.string());
  GrayImage img(static_cast<size_t>(h), static_cast<size_t>(w));
  std::vector<unsigned char> buf(static_cast<size_t>(w * h));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) raise(ErrorCode::MalformedManifest, "truncated PGM " + path.string());
  for (size_t i = 0; i < buf.size(); ++i) img.pix.data[i] = buf[i] / 255.0;
  return img;
}

// Provenance sidecar written next to a batch of sketches.
inline void write_sketch_sidecar(const std::filesystem::path& path, const SketchParams& p,
                                 const std::vector<std::string>& files) {
  nlohmann::ordered_json j;
  j["gaussian_sigma"] = p.gaussian_sigma;
  j["kernel_radius"] = p.kernel_radius;
  j["canny_low"] = p.canny_low;
  j["canny_high"] = p.canny_high;
  j["files"] = files;
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace eegcap
