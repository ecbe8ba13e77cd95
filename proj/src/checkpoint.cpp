#include "kiprn/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

namespace kiprn {

namespace {

constexpr uint32_t kVersion = 1;
const char kMagic[4] = {'K', 'P', 'R', 'N'};

struct Writer {
  std::vector<uint8_t> buf;
  void raw(const void* p, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
};

struct Reader {
  const uint8_t* p;
  size_t left;
  void raw(void* out, size_t n) {
    if (n > left) throw CheckpointError("checkpoint truncated");
    std::memcpy(out, p, n);
    p += n;
    left -= n;
  }
  uint16_t u16() {
    uint16_t v;
    raw(&v, 2);
    return v;
  }
  uint32_t u32() {
    uint32_t v;
    raw(&v, 4);
    return v;
  }
};

template <typename T>
void write_tensor(Writer& w, const std::string& name, const TensorT<T>& t) {
  if (name.size() > 0xffff) throw CheckpointError("tensor name too long: " + name);
  w.u16(static_cast<uint16_t>(name.size()));
  w.raw(name.data(), name.size());
  w.buf.push_back(static_cast<uint8_t>(dtype_of<T>()));
  if (t.rank() > 0xff) throw CheckpointError("tensor rank too large");
  w.buf.push_back(static_cast<uint8_t>(t.rank()));
  for (int d : t.dims()) w.u32(static_cast<uint32_t>(d));
  w.raw(t.ptr(), sizeof(T) * static_cast<size_t>(t.numel()));
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(data.f32.size() + data.f64.size()));
  // Merge the two dtype maps into one name-sorted sequence.
  auto it32 = data.f32.begin();
  auto it64 = data.f64.begin();
  while (it32 != data.f32.end() || it64 != data.f64.end()) {
    const bool take32 = it64 == data.f64.end() ||
                        (it32 != data.f32.end() && it32->first < it64->first);
    if (take32) {
      write_tensor(w, it32->first, it32->second);
      ++it32;
    } else {
      write_tensor(w, it64->first, it64->second);
      ++it64;
    }
  }
  w.u32(data.step);
  for (uint64_t word : data.rng_state) {
    w.u32(static_cast<uint32_t>(word & 0xffffffffULL));
    w.u32(static_cast<uint32_t>(word >> 32));
  }
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  const size_t n = std::fwrite(w.buf.data(), 1, w.buf.size(), f);
  std::fclose(f);
  if (n != w.buf.size()) throw IoError("short checkpoint write: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::fseek(f, 0, SEEK_END);
  const long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> bytes(static_cast<size_t>(sz > 0 ? sz : 0));
  const size_t n = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (n != bytes.size()) throw IoError("short checkpoint read: " + path);

  Reader r{bytes.data(), bytes.size()};
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("bad checkpoint magic");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = r.u32();
  CheckpointData data;
  std::string prev_name;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.raw(name.data(), name_len);
    if (i > 0 && !(prev_name < name))
      throw CheckpointError("checkpoint tensors not sorted by name at " + name);
    prev_name = name;
    uint8_t dtype_b, rank;
    r.raw(&dtype_b, 1);
    r.raw(&rank, 1);
    if (rank == 0) throw CheckpointError("rank-0 tensor in " + name);
    std::vector<int> dims(rank);
    for (uint8_t d = 0; d < rank; ++d) {
      const uint32_t dim = r.u32();
      if (dim == 0 || dim > 0x7fffffffU) throw CheckpointError("bad tensor dim in " + name);
      dims[d] = static_cast<int>(dim);
    }
    if (dtype_b == static_cast<uint8_t>(Dtype::F32)) {
      TensorF t = TensorF::zeros(dims);
      r.raw(t.ptr(), sizeof(float) * static_cast<size_t>(t.numel()));
      data.f32.emplace(name, std::move(t));
    } else if (dtype_b == static_cast<uint8_t>(Dtype::F64)) {
      TensorD t = TensorD::zeros(dims);
      r.raw(t.ptr(), sizeof(double) * static_cast<size_t>(t.numel()));
      data.f64.emplace(name, std::move(t));
    } else {
      throw CheckpointError("unknown dtype byte in " + name);
    }
  }
  data.step = r.u32();
  for (uint64_t& word : data.rng_state) {
    const uint64_t lo = r.u32();
    const uint64_t hi = r.u32();
    word = lo | (hi << 32);
  }
  if (r.left != 0) throw CheckpointError("trailing bytes after checkpoint payload");
  return data;
}

TensorF bytes_to_tensor(const std::string& bytes) {
  if (bytes.empty()) throw ArgumentError("bytes_to_tensor: empty payload");
  TensorF t = TensorF::zeros({static_cast<int>(bytes.size())});
  for (size_t i = 0; i < bytes.size(); ++i)
    t[static_cast<int64_t>(i)] = static_cast<float>(static_cast<unsigned char>(bytes[i]));
  return t;
}

std::string tensor_to_bytes(const TensorF& t) {
  std::string out(static_cast<size_t>(t.numel()), '\0');
  for (int64_t i = 0; i < t.numel(); ++i) {
    const float v = t[i];
    if (v < 0 || v > 255 || v != std::floor(v))
      throw CheckpointError("meta tensor holds a non-byte value");
    out[static_cast<size_t>(i)] = static_cast<char>(static_cast<unsigned char>(v));
  }
  return out;
}

}  // namespace kiprn
