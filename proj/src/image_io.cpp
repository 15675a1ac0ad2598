#include "cava/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cava {

namespace {

[[noreturn]] void fail(const std::string& name, const std::string& what) {
  throw std::runtime_error(name + ": " + what);
}

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

// ---- PGM (P5) ----

// Reads the next header token, skipping whitespace and '#' comments.
std::string pnm_token(const std::vector<unsigned char>& b, std::size_t& pos,
                      const std::string& name) {
  while (pos < b.size()) {
    if (std::isspace(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos])) tok.push_back(static_cast<char>(b[pos++]));
  if (tok.empty()) fail(name, "truncated PGM header");
  return tok;
}

long parse_long(const std::string& tok, const std::string& name, const char* field) {
  try {
    std::size_t used = 0;
    const long v = std::stol(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(name, std::string("invalid PGM ") + field + " '" + tok + "'");
  }
}

// ---- zlib helpers ----

std::vector<unsigned char> zlib_inflate(const unsigned char* data, std::size_t size,
                                        std::size_t expected, const std::string& name) {
  std::vector<unsigned char> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) fail(name, "zlib init failure");
  zs.next_in = const_cast<unsigned char*>(data);
  zs.avail_in = static_cast<uInt>(size);
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.avail_out != 0) fail(name, "corrupt deflate stream");
  return out;
}

std::vector<unsigned char> zlib_deflate(const unsigned char* data, std::size_t size) {
  uLongf bound = compressBound(static_cast<uLong>(size));
  std::vector<unsigned char> out(bound);
  if (compress2(out.data(), &bound, data, static_cast<uLong>(size), 9) != Z_OK) {
    throw std::runtime_error("zlib compress failure");
  }
  out.resize(bound);
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

}  // namespace

Image decode_pgm(const std::vector<unsigned char>& bytes, const std::string& name) {
  std::size_t pos = 0;
  if (pnm_token(bytes, pos, name) != "P5") fail(name, "not a binary PGM (expected magic P5)");
  const long w = parse_long(pnm_token(bytes, pos, name), name, "width");
  const long h = parse_long(pnm_token(bytes, pos, name), name, "height");
  const long maxval = parse_long(pnm_token(bytes, pos, name), name, "maxval");
  if (w <= 0 || h <= 0 || w > 1 << 15 || h > 1 << 15) {
    fail(name, "unsupported PGM dimensions " + std::to_string(w) + "x" + std::to_string(h));
  }
  if (maxval != 255 && maxval != 65535) {
    fail(name, "unsupported PGM maxval " + std::to_string(maxval) + " (expected 255 or 65535)");
  }
  ++pos;  // single whitespace byte after maxval
  const int bytes_per = maxval == 255 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * bytes_per;
  if (bytes.size() - pos < need) fail(name, "truncated PGM pixel data");

  Image img(h, w);
  const double scale = 1.0 / static_cast<double>(maxval);
  const unsigned char* p = bytes.data() + pos;
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      if (bytes_per == 1) {
        img(r, c) = static_cast<double>(*p++) * scale;
      } else {
        const int v = (int(p[0]) << 8) | int(p[1]);  // MSB first per Netpbm
        p += 2;
        img(r, c) = static_cast<double>(v) * scale;
      }
    }
  }
  return img;
}

Image decode_png(const std::vector<unsigned char>& bytes, const std::string& name) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kPngSig, 8) != 0) {
    fail(name, "not a PNG file (bad signature)");
  }
  std::size_t pos = 8;
  bool have_ihdr = false;
  std::uint32_t width = 0, height = 0;
  int depth = 0, color = 0, interlace = 0;
  std::vector<unsigned char> idat;

  while (pos + 8 <= bytes.size()) {
    const std::uint32_t len = be32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) fail(name, "truncated PNG chunk");
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const unsigned char* data = &bytes[pos + 8];
    const std::uint32_t crc_stored = be32(&bytes[pos + 8 + len]);
    std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(crc32(0, &bytes[pos + 4], 4), data, len));
    if (crc != crc_stored) fail(name, "PNG chunk CRC mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail(name, "malformed IHDR");
      width = be32(data);
      height = be32(data + 4);
      depth = data[8];
      color = data[9];
      interlace = data[12];
      if (color != 0) {
        fail(name, "unsupported PNG color type " + std::to_string(color) +
                       " (only grayscale, type 0, is supported)");
      }
      if (depth != 8 && depth != 16) {
        fail(name, "unsupported PNG bit depth " + std::to_string(depth) +
                       " (expected 8 or 16)");
      }
      if (interlace != 0) fail(name, "unsupported PNG interlacing");
      if (width == 0 || height == 0 || width > 1u << 15 || height > 1u << 15) {
        fail(name, "unsupported PNG dimensions");
      }
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!have_ihdr) fail(name, "missing IHDR");
  if (idat.empty()) fail(name, "missing IDAT");

  const std::size_t bpp = depth / 8;
  const std::size_t stride = static_cast<std::size_t>(width) * bpp;
  const std::size_t raw_size = (stride + 1) * height;
  std::vector<unsigned char> raw = zlib_inflate(idat.data(), idat.size(), raw_size, name);

  // undo per-scanline filters in place
  std::vector<unsigned char> prev(stride, 0);
  Image img(height, width);
  const double scale = depth == 8 ? 1.0 / 255.0 : 1.0 / 65535.0;
  for (std::uint32_t r = 0; r < height; ++r) {
    const unsigned char filter = raw[r * (stride + 1)];
    unsigned char* line = &raw[r * (stride + 1) + 1];
    for (std::size_t i = 0; i < stride; ++i) {
      const int left = i >= bpp ? line[i - bpp] : 0;
      const int up = prev[i];
      const int upleft = i >= bpp ? prev[i - bpp] : 0;
      int v = line[i];
      switch (filter) {
        case 0: break;
        case 1: v += left; break;
        case 2: v += up; break;
        case 3: v += (left + up) / 2; break;
        case 4: v += paeth(left, up, upleft); break;
        default: fail(name, "invalid PNG filter type " + std::to_string(filter));
      }
      line[i] = static_cast<unsigned char>(v & 0xFF);
    }
    std::memcpy(prev.data(), line, stride);
    for (std::uint32_t c = 0; c < width; ++c) {
      const int v = depth == 8 ? line[c] : (int(line[2 * c]) << 8) | int(line[2 * c + 1]);
      img(r, c) = static_cast<double>(v) * scale;
    }
  }
  return img;
}

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string name = path.string();
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, name);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) {
    return decode_png(bytes, name);
  }
  fail(name, "unrecognized container (expected binary PGM or PNG)");
}

namespace {

std::vector<unsigned char> quantize8(const Image& img) {
  std::vector<unsigned char> out;
  out.reserve(static_cast<std::size_t>(img.size()));
  for (Index r = 0; r < img.rows(); ++r) {
    for (Index c = 0; c < img.cols(); ++c) {
      const double v = std::clamp(img(r, c), 0.0, 1.0);
      out.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  return out;
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Image& img) {
  const std::string header =
      "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n255\n";
  const auto pixels = quantize8(img);
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), pixels.begin(), pixels.end());
  write_file_atomic(path, out.data(), out.size());
}

void write_png(const std::filesystem::path& path, const Image& img) {
  const auto pixels = quantize8(img);
  const std::size_t w = static_cast<std::size_t>(img.cols());
  const std::size_t h = static_cast<std::size_t>(img.rows());
  std::vector<unsigned char> raw;
  raw.reserve((w + 1) * h);
  for (std::size_t r = 0; r < h; ++r) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), pixels.begin() + static_cast<std::ptrdiff_t>(r * w),
               pixels.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
  }
  const auto compressed = zlib_deflate(raw.data(), raw.size());

  std::vector<unsigned char> out(kPngSig, kPngSig + 8);
  auto chunk = [&out](const char* type, const std::vector<unsigned char>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc = static_cast<std::uint32_t>(
        crc32(0, out.data() + start, static_cast<uInt>(4 + data.size())));
    put_be32(out, crc);
  };

  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(0);   // grayscale
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter method
  ihdr.push_back(0);   // no interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", compressed);
  chunk("IEND", {});
  write_file_atomic(path, out.data(), out.size());
}

void write_raw_f64(const std::filesystem::path& path, const Image& img) {
  std::vector<unsigned char> out;
  out.reserve(static_cast<std::size_t>(img.size()) * 8);
  for (Index r = 0; r < img.rows(); ++r) {
    for (Index c = 0; c < img.cols(); ++c) {
      const double v = img(r, c);
      std::uint64_t u;
      std::memcpy(&u, &v, 8);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(u >> (8 * b)));
    }
  }
  write_file_atomic(path, out.data(), out.size());
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error(path.string() + ": read failure");
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const void* data,
                       std::size_t size) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw std::runtime_error(tmp.string() + ": write failure");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace cava
