#include "kiprn/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace kiprn {

namespace {

const uint8_t kSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data, size_t len) {
  put_u32(out, static_cast<uint32_t>(len));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  const uint32_t crc =
      static_cast<uint32_t>(crc32(0, out.data() + start, static_cast<uInt>(4 + len)));
  put_u32(out, crc);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<uint8_t> encode_png(const Image& img) {
  if (img.width < 1 || img.height < 1 || (img.channels != 1 && img.channels != 3))
    throw ArgumentError("encode_png: need positive dims and 1 or 3 channels");
  if (img.pixels.size() !=
      static_cast<size_t>(img.width) * img.height * img.channels)
    throw ArgumentError("encode_png: pixel buffer size mismatch");

  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  std::vector<uint8_t> raw;
  raw.reserve((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter type None
    raw.insert(raw.end(), img.pixels.begin() + y * stride, img.pixels.begin() + (y + 1) * stride);
  }

  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("encode_png: deflate failed");
  comp.resize(comp_len);

  std::vector<uint8_t> out(kSig, kSig + 8);
  uint8_t ihdr[13];
  ihdr[0] = static_cast<uint8_t>(img.width >> 24);
  ihdr[1] = static_cast<uint8_t>(img.width >> 16);
  ihdr[2] = static_cast<uint8_t>(img.width >> 8);
  ihdr[3] = static_cast<uint8_t>(img.width);
  ihdr[4] = static_cast<uint8_t>(img.height >> 24);
  ihdr[5] = static_cast<uint8_t>(img.height >> 16);
  ihdr[6] = static_cast<uint8_t>(img.height >> 8);
  ihdr[7] = static_cast<uint8_t>(img.height);
  ihdr[8] = 8;                                      // bit depth
  ihdr[9] = img.channels == 1 ? 0 : 2;              // gray / truecolor
  ihdr[10] = ihdr[11] = ihdr[12] = 0;               // deflate, adaptive, no interlace
  put_chunk(out, "IHDR", ihdr, 13);
  put_chunk(out, "IDAT", comp.data(), comp.size());
  put_chunk(out, "IEND", nullptr, 0);
  return out;
}

Image decode_png(const uint8_t* data, size_t size) {
  if (size < 8 || std::memcmp(data, kSig, 8) != 0)
    throw DecodeError("decode_png: bad signature");
  size_t pos = 8;
  int width = 0, height = 0, channels = 0;
  bool seen_ihdr = false, seen_iend = false;
  std::vector<uint8_t> idat;
  while (pos < size) {
    if (pos + 12 > size) throw DecodeError("decode_png: truncated chunk header");
    const uint32_t len = get_u32(data + pos);
    if (pos + 12 + static_cast<size_t>(len) > size)
      throw DecodeError("decode_png: truncated chunk payload");
    char type[5] = {0};
    std::memcpy(type, data + pos + 4, 4);
    const uint8_t* payload = data + pos + 8;
    if (std::strcmp(type, "IHDR") == 0) {
      if (len != 13) throw DecodeError("decode_png: bad IHDR length");
      width = static_cast<int>(get_u32(payload));
      height = static_cast<int>(get_u32(payload + 4));
      const int depth = payload[8], color = payload[9], interlace = payload[12];
      if (depth != 8) throw DecodeError("decode_png: only 8-bit depth supported");
      if (color == 0)
        channels = 1;
      else if (color == 2)
        channels = 3;
      else
        throw DecodeError("decode_png: unsupported color type " + std::to_string(color));
      if (interlace != 0) throw DecodeError("decode_png: interlaced images unsupported");
      if (width < 1 || height < 1) throw DecodeError("decode_png: bad dimensions");
      seen_ihdr = true;
    } else if (std::strcmp(type, "IDAT") == 0) {
      if (!seen_ihdr) throw DecodeError("decode_png: IDAT before IHDR");
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::strcmp(type, "IEND") == 0) {
      seen_iend = true;
      break;
    }
    pos += 12 + len;
  }
  if (!seen_ihdr || !seen_iend || idat.empty())
    throw DecodeError("decode_png: missing required chunks");

  const size_t stride = static_cast<size_t>(width) * channels;
  std::vector<uint8_t> raw((stride + 1) * height);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (zrc != Z_OK || raw_len != raw.size()) throw DecodeError("decode_png: inflate failed");

  Image img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.pixels.resize(stride * height);
  const int bpp = channels;
  for (int y = 0; y < height; ++y) {
    const uint8_t filter = raw[y * (stride + 1)];
    const uint8_t* src = raw.data() + y * (stride + 1) + 1;
    uint8_t* dst = img.pixels.data() + y * stride;
    const uint8_t* prev = y > 0 ? img.pixels.data() + (y - 1) * stride : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
      const int b = prev ? prev[i] : 0;
      const int c = (prev && i >= static_cast<size_t>(bpp)) ? prev[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw DecodeError("decode_png: unknown filter " + std::to_string(filter));
      }
      dst[i] = static_cast<uint8_t>(v & 0xff);
    }
  }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  const std::vector<uint8_t> bytes = encode_png(img);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  const size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (n != bytes.size()) throw IoError("short write: " + path);
}

Image read_png(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open: " + path);
  std::fseek(f, 0, SEEK_END);
  const long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> bytes(static_cast<size_t>(sz > 0 ? sz : 0));
  const size_t n = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (n != bytes.size()) throw IoError("short read: " + path);
  return decode_png(bytes.data(), bytes.size());
}

void save_png_tensor(const std::string& path, const TensorF& t) {
  if (t.rank() != 3 || t.dim(0) != 3)
    throw ShapeError("save_png_tensor expects [3,H,W], got " + dims_str(t.dims()));
  Image img;
  img.height = t.dim(1);
  img.width = t.dim(2);
  img.channels = 3;
  img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
  const int64_t hw = static_cast<int64_t>(img.width) * img.height;
  for (int64_t p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c) {
      const float v = std::min(1.0f, std::max(0.0f, t[c * hw + p]));
      img.pixels[static_cast<size_t>(p * 3 + c)] =
          static_cast<uint8_t>(std::lround(255.0f * v));
    }
  write_png(path, img);
}

TensorF load_png_tensor(const std::string& path) {
  const Image img = read_png(path);
  if (img.channels != 3) throw DecodeError("load_png_tensor expects an RGB file: " + path);
  TensorF t = TensorF::zeros({3, img.height, img.width});
  const int64_t hw = static_cast<int64_t>(img.width) * img.height;
  for (int64_t p = 0; p < hw; ++p)
    for (int c = 0; c < 3; ++c)
      t[c * hw + p] = static_cast<float>(img.pixels[static_cast<size_t>(p * 3 + c)]) / 255.0f;
  return t;
}

}  // namespace kiprn
