#pragma once

// Mask volume run-length codec. Runs alternate background/foreground over the
// flattened volume (row-major within a frame, frames concatenated); the first
// run counts background pixels and may be zero. On disk a stream is a plain
// sequence of 32-bit little-endian run lengths.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "novis/bitvolume.hpp"
#include "novis/tensor.hpp"

namespace novis {

inline std::vector<std::uint32_t> rle_encode(const BitVolume& vol) {
  std::vector<std::uint32_t> runs;
  const long long n = vol.numel();
  bool current = false;  // first run counts background
  std::uint32_t len = 0;
  for (long long i = 0; i < n; ++i) {
    const bool v = vol.get_flat(i);
    if (v == current) {
      ++len;
    } else {
      runs.push_back(len);
      current = v;
      len = 1;
    }
  }
  runs.push_back(len);
  return runs;
}

inline BitVolume rle_decode(const std::vector<std::uint32_t>& runs, int frames, int height,
                            int width, const std::string& what = "rle stream") {
  BitVolume vol(frames, height, width);
  const long long n = vol.numel();
  long long pos = 0;
  bool current = false;
  for (std::uint32_t run : runs) {
    check_contract(pos + run <= n, "rle_decode: runs overflow volume in " + what);
    if (current)
      for (std::uint32_t i = 0; i < run; ++i) vol.set_flat(pos + i, true);
    pos += run;
    current = !current;
  }
  check_contract(pos == n, "rle_decode: runs cover " + std::to_string(pos) + " of " +
                               std::to_string(n) + " pixels in " + what);
  return vol;
}

inline void save_rle(const std::string& path, const BitVolume& vol) {
  const auto runs = rle_encode(vol);
  std::ofstream out(path, std::ios::binary);
  check_contract(out.good(), "save_rle: cannot open " + path);
  out.write(reinterpret_cast<const char*>(runs.data()),
            static_cast<std::streamsize>(runs.size() * sizeof(std::uint32_t)));
  check_contract(out.good(), "save_rle: write failed for " + path);
}

inline BitVolume load_rle(const std::string& path, int frames, int height, int width) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  check_contract(in.good(), "load_rle: cannot open " + path);
  const std::streamsize bytes = in.tellg();
  check_contract(bytes % 4 == 0, "load_rle: truncated stream in " + path);
  in.seekg(0);
  std::vector<std::uint32_t> runs(static_cast<std::size_t>(bytes / 4));
  in.read(reinterpret_cast<char*>(runs.data()), bytes);
  check_contract(in.good(), "load_rle: read failed for " + path);
  return rle_decode(runs, frames, height, width, path);
}

}  // namespace novis
