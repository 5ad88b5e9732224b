#include "behavsim/envs/observation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "behavsim/error.hpp"

namespace behavsim {

Eigen::VectorXd downsample2x(const Observation& obs) {
  const int h = obs.height / 2;
  const int w = obs.width / 2;
  Eigen::VectorXd out(h * w * obs.channels);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < obs.channels; ++ch) {
        out[(r * w + c) * obs.channels + ch] =
            0.25 * (obs.at(2 * r, 2 * c, ch) + obs.at(2 * r, 2 * c + 1, ch) +
                    obs.at(2 * r + 1, 2 * c, ch) + obs.at(2 * r + 1, 2 * c + 1, ch));
      }
    }
  }
  return out;
}

void write_pnm(std::ostream& out, const Observation& obs) {
  if (obs.channels != 1 && obs.channels != 3) throw InvalidArgument("write_pnm: need 1 or 3 channels");
  out << (obs.channels == 1 ? "P5" : "P6") << '\n' << obs.width << ' ' << obs.height << "\n255\n";
  for (Eigen::Index i = 0; i < obs.pixels.size(); ++i) {
    const double v = std::clamp(obs.pixels[i], 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
}

void write_pnm(const std::filesystem::path& path, const Observation& obs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  write_pnm(out, obs);
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<std::uint8_t>& gray) {
  if (static_cast<std::size_t>(width) * static_cast<std::size_t>(height) != gray.size()) {
    throw InvalidArgument("write_pgm: pixel count does not match the dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

}  // namespace behavsim
