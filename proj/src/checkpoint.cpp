#include "utvc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

namespace utvc {

namespace {
void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct Reader {
  const uint8_t* p;
  size_t n, pos = 0;
  void need(size_t k, const char* what) {
    if (pos + k > n)
      throw std::runtime_error("checkpoint truncated in " + std::string(what) + " at byte " +
                               std::to_string(pos));
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return p[pos++];
  }
  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
};
}  // namespace

std::vector<uint8_t> serialize_checkpoint(const NamedTensors& records) {
  std::set<std::string> seen;
  std::vector<uint8_t> out = {'U', 'T', 'V', 'C'};
  put_u16(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(records.size()));
  for (const auto& [name, t] : records) {
    if (name.empty() || name.size() > 0xFFFF)
      throw std::invalid_argument("checkpoint: record name length out of range");
    if (!seen.insert(name).second)
      throw std::invalid_argument("checkpoint: duplicate record name " + name);
    put_u16(out, static_cast<uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<uint8_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < t.numel(); ++i) put_u32(out, std::bit_cast<uint32_t>(t[i]));
  }
  return out;
}

NamedTensors parse_checkpoint(const uint8_t* bytes, size_t n) {
  Reader r{bytes, n};
  r.need(4, "magic");
  if (std::memcmp(bytes, "UTVC", 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  r.pos = 4;
  const uint16_t ver = r.u16("version");
  if (ver != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ver));
  const uint32_t count = r.u32("record count");
  NamedTensors records;
  std::set<std::string> seen;
  for (uint32_t k = 0; k < count; ++k) {
    const uint16_t len = r.u16("name length");
    r.need(len, "name");
    std::string name(reinterpret_cast<const char*>(bytes + r.pos), len);
    r.pos += len;
    if (!seen.insert(name).second)
      throw std::runtime_error("checkpoint: duplicate record name " + name);
    const int rank = r.u8("rank");
    if (rank < 1 || rank > 4)
      throw std::runtime_error("checkpoint: record " + name + " has rank " + std::to_string(rank));
    std::vector<int> shape(static_cast<size_t>(rank));
    int64_t numel = 1;
    for (int& d : shape) {
      const uint32_t e = r.u32("extent");
      if (e == 0 || e > (1u << 24))
        throw std::runtime_error("checkpoint: record " + name + " has extent " + std::to_string(e));
      d = static_cast<int>(e);
      numel *= d;
    }
    std::vector<float> data(static_cast<size_t>(numel));
    r.need(4 * static_cast<size_t>(numel), ("payload of " + name).c_str());
    for (int64_t i = 0; i < numel; ++i) data[static_cast<size_t>(i)] = std::bit_cast<float>(r.u32("payload"));
    records.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.pos != n)
    throw std::runtime_error("checkpoint: " + std::to_string(n - r.pos) + " trailing bytes");
  return records;
}

void save_checkpoint(const std::string& path, const NamedTensors& records) {
  write_file(path, serialize_checkpoint(records));
}

NamedTensors load_checkpoint(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file(path);
  return parse_checkpoint(bytes.data(), bytes.size());
}

uint64_t fnv1a64(const uint8_t* bytes, size_t n) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t checkpoint_hash(const NamedTensors& records) {
  const std::vector<uint8_t> bytes = serialize_checkpoint(records);
  return fnv1a64(bytes.data(), bytes.size());
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  f.seekg(0, std::ios::end);
  const std::streamoff len = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(len));
  if (len > 0) f.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!f) throw std::runtime_error("short read on " + path);
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write on " + path);
}

}  // namespace utvc
