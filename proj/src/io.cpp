#include "timr/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace timr::io {

namespace {

constexpr char kMagic[4] = {'T', 'I', 'M', 'R'};
constexpr uint16_t kVersion = 1;
constexpr uint16_t kDtypeF32 = 1;

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(char(v & 0xff));
  buf.push_back(char((v >> 8) & 0xff));
}

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xff));
}

uint16_t get_u16(const unsigned char* p) { return uint16_t(p[0] | (p[1] << 8)); }

uint32_t get_u32(const unsigned char* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
         (uint32_t(p[3]) << 24);
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const DenseTensor& t) {
  std::string header;
  header.append(kMagic, 4);
  put_u16(header, kVersion);
  put_u16(header, kDtypeF32);
  put_u16(header, uint16_t(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) put_u32(header, uint32_t(t.dim(i)));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(ErrorKind::WriteFailed, "cannot open for write: " + path.string());
  f.write(header.data(), std::streamsize(header.size()));
  // Payload is written as raw little-endian f32; this code targets
  // little-endian hosts (asserted in CMake for big-endian cross builds).
  f.write(reinterpret_cast<const char*>(t.data()),
          std::streamsize(t.numel() * 4));
  if (!f) throw IoError(ErrorKind::WriteFailed, "short write: " + path.string());
}

DenseTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(ErrorKind::MissingFile, "cannot open: " + path.string());
  unsigned char fixed[10];
  if (!f.read(reinterpret_cast<char*>(fixed), 10))
    throw IoError(ErrorKind::Truncated, "truncated header: " + path.string());
  if (std::memcmp(fixed, kMagic, 4) != 0)
    throw IoError(ErrorKind::BadMagic, "bad magic: " + path.string());
  const uint16_t version = get_u16(fixed + 4);
  const uint16_t dtype = get_u16(fixed + 6);
  const uint16_t ndim = get_u16(fixed + 8);
  if (version != kVersion)
    throw IoError(ErrorKind::BadHeader,
                  "unsupported version " + std::to_string(version) + ": " + path.string());
  if (dtype != kDtypeF32)
    throw IoError(ErrorKind::BadHeader,
                  "unsupported dtype code " + std::to_string(dtype) + ": " + path.string());
  if (ndim == 0 || ndim > 8)
    throw IoError(ErrorKind::BadHeader,
                  "implausible ndim " + std::to_string(ndim) + ": " + path.string());
  std::vector<unsigned char> ext(size_t(ndim) * 4);
  if (!f.read(reinterpret_cast<char*>(ext.data()), std::streamsize(ext.size())))
    throw IoError(ErrorKind::Truncated, "truncated extents: " + path.string());
  std::vector<int> shape(ndim);
  int64_t n = 1;
  for (int i = 0; i < ndim; ++i) {
    const uint32_t e = get_u32(ext.data() + size_t(i) * 4);
    if (e == 0 || e > (1u << 24))
      throw IoError(ErrorKind::BadHeader,
                    "implausible extent " + std::to_string(e) + ": " + path.string());
    shape[size_t(i)] = int(e);
    n *= e;
  }
  std::vector<float> data(static_cast<size_t>(n), 0.0f);
  if (!f.read(reinterpret_cast<char*>(data.data()), std::streamsize(n * 4)))
    throw IoError(ErrorKind::Truncated, "truncated payload: " + path.string());
  return DenseTensor(std::move(shape), std::move(data));
}

}  // namespace timr::io
