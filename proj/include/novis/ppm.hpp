#pragma once

// Binary P6 portable pixmap reader/writer for the dataset frames.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "novis/tensor.hpp"

namespace novis {

struct ImageU8 {
  int height = 0, width = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major

  std::uint8_t& at(int y, int x, int c) {
    return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  std::uint8_t at(int y, int x, int c) const {
    return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
};

inline void save_ppm(const std::string& path, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary);
  check_contract(out.good(), "save_ppm: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  check_contract(out.good(), "save_ppm: write failed for " + path);
}

inline ImageU8 load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_contract(in.good(), "load_ppm: cannot open " + path);
  std::string magic;
  in >> magic;
  check_contract(magic == "P6", "load_ppm: not a binary P6 file: " + path);
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  check_contract(in.good() && w > 0 && h > 0 && maxval == 255,
                 "load_ppm: malformed header in " + path);
  in.get();  // single whitespace after maxval
  ImageU8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()),
          static_cast<std::streamsize>(img.rgb.size()));
  check_contract(in.gcount() == static_cast<std::streamsize>(img.rgb.size()),
                 "load_ppm: truncated pixel data in " + path);
  return img;
}

}  // namespace novis
