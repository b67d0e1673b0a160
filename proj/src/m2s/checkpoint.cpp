#include "m2s/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace m2s {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

namespace {

enum : std::uint8_t { kF32 = 0, kF64 = 1, kU8 = 2 };

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void name(const std::string& s) {
    M2S_CHECK(s.size() <= 0xFFFF, Format, "tensor name too long: ", s.size(), " bytes");
    put(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    M2S_CHECK(pos_ + n <= in_.size(), Format, "checkpoint truncated at byte ", pos_, " (need ", n,
              " more, have ", in_.size() - pos_, ")");
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

// Trailing unit dims are dropped, so a bias {C,1,1,1} is stored as rank 1.
std::vector<std::uint32_t> stored_dims(const Shape& s) {
  std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                  static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  while (dims.size() > 1 && dims.back() == 1) dims.pop_back();
  return dims;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes("M2SN", 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(ckpt.metadata.size() + ckpt.tensors.size()));
  for (const auto& [key, value] : ckpt.metadata) {
    w.name(key);
    w.put(kU8);
    w.put(std::uint8_t{1});
    w.put(static_cast<std::uint32_t>(value.size()));
    w.bytes(value.data(), value.size());
  }
  for (const auto& [name, t] : ckpt.tensors) {
    w.name(name);
    w.put(sizeof(Real) == 8 ? kF64 : kF32);
    const auto dims = stored_dims(t.shape());
    w.put(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) w.put(d);
    w.bytes(t.ptr(), static_cast<std::size_t>(t.numel()) * sizeof(Real));
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  M2S_CHECK(std::memcmp(magic, "M2SN", 4) == 0, Format, "bad checkpoint magic at byte 0");
  const auto version = r.get<std::uint32_t>();
  M2S_CHECK(version == kCheckpointVersion, Format, "unsupported checkpoint version ", version);
  const auto count = r.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t entry_at = r.pos();
    const auto name_len = r.get<std::uint16_t>();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const auto dtype = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint8_t>();
    M2S_CHECK(rank >= 1 && rank <= 4, Format, "entry '", name, "' at byte ", entry_at, " has rank ",
              int(rank));
    std::int64_t dims[4] = {1, 1, 1, 1};
    std::int64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      dims[i] = r.get<std::uint32_t>();
      numel *= dims[i];
    }
    if (dtype == kU8) {
      std::string payload(static_cast<std::size_t>(numel), '\0');
      r.bytes(payload.data(), payload.size());
      ckpt.metadata[name] = std::move(payload);
      continue;
    }
    M2S_CHECK(dtype == kF32 || dtype == kF64, Format, "entry '", name, "' at byte ", entry_at,
              " has unknown dtype ", int(dtype));
    M2S_CHECK(numel >= 1, Format, "entry '", name, "' has a zero dimension");
    std::vector<Real> values(static_cast<std::size_t>(numel));
    if (dtype == kF64) {
      for (auto& v : values) v = static_cast<Real>(r.get<double>());
    } else {
      for (auto& v : values) v = static_cast<Real>(r.get<float>());
    }
    ckpt.tensors.emplace_back(name, Tensor(Shape{dims[0], dims[1], dims[2], dims[3]}, std::move(values)));
  }
  M2S_CHECK(r.done(), Format, "trailing bytes after checkpoint entries at byte ", r.pos());
  return ckpt;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  M2S_CHECK(out.good(), Io, "cannot open '", path.string(), "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  M2S_CHECK(out.good(), Io, "failed writing '", path.string(), "'");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  M2S_CHECK(in.good(), Io, "cannot open checkpoint '", path.string(), "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace m2s
