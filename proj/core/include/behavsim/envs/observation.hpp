#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <vector>

namespace behavsim {

/// Image with values in [0, 1], stored row-major with interleaved channels.
struct Observation {
  int height = 0;
  int width = 0;
  int channels = 1;
  Eigen::VectorXd pixels;

  Observation() = default;
  Observation(int h, int w, int c) : height(h), width(w), channels(c), pixels(Eigen::VectorXd::Zero(h * w * c)) {}

  double& at(int row, int col, int ch = 0) { return pixels[(row * width + col) * channels + ch]; }
  double at(int row, int col, int ch = 0) const { return pixels[(row * width + col) * channels + ch]; }
  bool operator==(const Observation& o) const {
    return height == o.height && width == o.width && channels == o.channels && pixels == o.pixels;
  }
};

/// 2x2 mean pooling per channel; odd trailing rows/columns are dropped.
Eigen::VectorXd downsample2x(const Observation& obs);

/// 8-bit binary PGM (P5) or PPM (P6) depending on the channel count.
void write_pnm(std::ostream& out, const Observation& obs);
void write_pnm(const std::filesystem::path& path, const Observation& obs);

/// Raw 8-bit grayscale image, row-major.
void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& gray);

}  // namespace behavsim
