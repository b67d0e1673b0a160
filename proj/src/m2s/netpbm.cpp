#include "m2s/netpbm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "m2s/error.hpp"

namespace m2s {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    long long v = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      v = v * 10 + (b_[pos_] - '0');
      M2S_CHECK(v <= 1 << 20, Format, "netpbm: ", what, " too large at byte ", start);
      ++pos_;
    }
    M2S_CHECK(pos_ > start, Format, "netpbm: expected ", what, " at byte ", start);
    return static_cast<int>(v);
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

Image8 parse_netpbm(const std::vector<std::uint8_t>& bytes) {
  M2S_CHECK(bytes.size() >= 2 && bytes[0] == 'P', Format, "netpbm: bad magic at byte 0");
  const char kind = static_cast<char>(bytes[1]);
  M2S_CHECK(kind == '2' || kind == '3' || kind == '5' || kind == '6', Format, "netpbm: unsupported type P",
            kind, " at byte 1");
  HeaderReader r(bytes);
  r.advance();
  r.advance();
  Image8 img;
  img.channels = (kind == '3' || kind == '6') ? 3 : 1;
  img.width = r.number("width");
  img.height = r.number("height");
  const int maxval = r.number("maxval");
  M2S_CHECK(img.width >= 1 && img.height >= 1, Format, "netpbm: zero image dimension");
  M2S_CHECK(maxval >= 1 && maxval <= 255, Format, "netpbm: maxval ", maxval,
            " unsupported (8-bit only) before byte ", r.pos());
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(count);
  if (kind == '5' || kind == '6') {
    M2S_CHECK(r.pos() < bytes.size() && std::isspace(bytes[r.pos()]), Format,
              "netpbm: missing whitespace after header at byte ", r.pos());
    const std::size_t start = r.pos() + 1;
    M2S_CHECK(bytes.size() >= start + count, Format, "netpbm: raster truncated at byte ", bytes.size(),
              " (expected ", start + count, ")");
    for (std::size_t i = 0; i < count; ++i) img.pixels[i] = bytes[start + i];
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const int v = r.number("sample");
      M2S_CHECK(v <= maxval, Format, "netpbm: sample ", v, " exceeds maxval before byte ", r.pos());
      img.pixels[i] = static_cast<std::uint8_t>(v);
    }
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>((p * 255 + maxval / 2) / maxval);
  }
  return img;
}

Image8 read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  M2S_CHECK(in.good(), Io, "cannot open image '", path.string(), "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_netpbm(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_netpbm(const Image8& img) {
  M2S_CHECK(img.channels == 1 || img.channels == 3, Format, "netpbm: channels must be 1 or 3");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) +
                             " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

void write_netpbm(const std::filesystem::path& path, const Image8& img) {
  const auto bytes = encode_netpbm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  M2S_CHECK(out.good(), Io, "cannot open '", path.string(), "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace m2s
