#pragma once

// Binary tensor container used for checkpoints:
//   8-byte magic "NOVISTEN" | u32 LE header length | JSON header | payload
// The header carries {"shape": [...], "dtype": "f32"}; the payload is the
// row-major f32 buffer, little-endian.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "novis/tensor.hpp"

namespace novis {

inline constexpr char kTensorMagic[8] = {'N', 'O', 'V', 'I', 'S', 'T', 'E', 'N'};

inline void save_tensor(const std::string& path, const Tensor& t) {
  nlohmann::json header;
  header["shape"] = t.shape();
  header["dtype"] = "f32";
  const std::string hs = header.dump();
  std::ofstream out(path, std::ios::binary);
  check_contract(out.good(), "save_tensor: cannot open " + path);
  out.write(kTensorMagic, 8);
  const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
  check_contract(out.good(), "save_tensor: write failed for " + path);
}

inline Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_contract(in.good(), "load_tensor: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  check_contract(in.good() && std::memcmp(magic, kTensorMagic, 8) == 0,
                 "load_tensor: bad magic in " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  check_contract(in.good(), "load_tensor: truncated header in " + path);
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  check_contract(in.good(), "load_tensor: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
  check_contract(!header.is_discarded(), "load_tensor: malformed header in " + path);
  check_contract(header.value("dtype", "") == "f32",
                 "load_tensor: unsupported dtype in " + path);
  Shape shape = header.at("shape").get<Shape>();
  Tensor t{shape};
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
  check_contract(in.good(), "load_tensor: truncated payload in " + path);
  return t;
}

}  // namespace novis
