#include "famed/weight_io.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

namespace famed {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail("truncated header");
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("weights '" + origin_ + "': " + what);
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_weights(const NetConfig& config, const WeightStore& store) {
  std::string out(kWeightMagic, 4);
  put_u32(out, kWeightFormatVersion);
  const std::string cfg = config.serialize();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put_u32(out, static_cast<std::uint32_t>(store.size()));

  std::size_t header = out.size();
  for (const auto& p : store.params()) header += 4 + p.name.size() + 1 + 16 + 8;
  std::uint64_t offset = header;
  for (const auto& p : store.params()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    out.push_back(static_cast<char>(p.kind));
    const Shape& s = p.value.shape();
    for (int d : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(d));
    put_u64(out, offset);
    offset += 4 * p.value.numel();
  }
  for (const auto& p : store.params()) {
    for (Scalar v : p.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

WeightFile decode_weights(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightMagic, 4) != 0) {
    r.fail("bad magic (not a weight file)");
  }
  r.str(4);
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    r.fail("format version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kWeightFormatVersion) + ")");
  }
  WeightFile file;
  try {
    file.config = NetConfig::parse(r.str(r.u32()));
  } catch (const std::invalid_argument& e) {
    r.fail(std::string("bad network config: ") + e.what());
  }
  const std::uint32_t count = r.u32();

  struct Entry {
    std::string name;
    ParamKind kind;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.str(r.u32());
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(ParamKind::BnRunningVar)) {
      r.fail("tensor '" + e.name + "' has unknown kind " + std::to_string(kind));
    }
    e.kind = static_cast<ParamKind>(kind);
    std::uint32_t dims[4];
    for (auto& d : dims) {
      d = r.u32();
      if (d > (1u << 24)) r.fail("tensor '" + e.name + "' has an implausible dimension");
    }
    e.shape = Shape{static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                    static_cast<int>(dims[2]), static_cast<int>(dims[3])};
    e.offset = r.u64();
    entries.push_back(std::move(e));
  }
  std::uint64_t expected = r.pos();
  for (const auto& e : entries) {
    if (e.offset != expected) {
      r.fail("tensor '" + e.name + "' offset " + std::to_string(e.offset) +
             " inconsistent with directory (expected " + std::to_string(expected) + ")");
    }
    const std::uint64_t len = 4ull * e.shape.numel();
    if (e.offset + len > bytes.size()) {
      r.fail("tensor '" + e.name + "' extends past the end of the file");
    }
    expected += len;
  }
  if (expected != bytes.size()) {
    r.fail("trailing bytes after the data section");
  }
  for (const auto& e : entries) {
    std::vector<Scalar> values(e.shape.numel());
    const std::uint8_t* p = bytes.data() + e.offset;
    for (std::size_t k = 0; k < values.size(); ++k, p += 4) {
      const std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                              (static_cast<std::uint32_t>(p[1]) << 8) |
                              (static_cast<std::uint32_t>(p[2]) << 16) |
                              (static_cast<std::uint32_t>(p[3]) << 24);
      values[k] = std::bit_cast<float>(u);
    }
    if (file.store.index_of(e.name) != WeightStore::npos) r.fail("duplicate tensor '" + e.name + "'");
    const std::size_t idx = file.store.add(e.name, e.kind, e.shape);
    file.store[idx].value = Tensor::from(e.shape, std::move(values));
  }
  return file;
}

void save_weights(const NetConfig& config, const WeightStore& store, const std::string& path) {
  write_file_atomic(path, encode_weights(config, store));
}

WeightFile load_weights(const std::string& path) {
  return decode_weights(read_file(path), path);
}

Network load_network(const std::string& path) {
  WeightFile file = load_weights(path);
  Network net = Network::architecture(file.config);
  net.load_weights(file.store);
  return net;
}

}  // namespace famed
