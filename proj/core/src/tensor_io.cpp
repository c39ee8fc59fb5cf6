#include "delnet/tensor_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "delnet/error.hpp"

namespace delnet {

namespace {

constexpr char kMagic[4] = {'D', 'L', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("dlt: truncated tensor blob");
    }
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_dlt(const Tensor& tensor) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(8 + 4 * tensor.rank() + 8 * tensor.numel());
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto extent : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(extent));
  for (double v : tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Tensor decode_dlt(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("dlt: bad magic");
  }
  Reader in(bytes);
  in.u32();  // magic, already checked
  const std::uint32_t rank = in.u32();
  if (rank == 0) {
    throw FormatError("dlt: rank must be positive");
  }
  in.need(4ull * rank);
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& extent : shape) {
    extent = in.u32();
    if (extent == 0) throw FormatError("dlt: zero extent");
    count *= extent;
  }
  if (in.remaining() != count * 8) {
    throw FormatError(in.remaining() < count * 8 ? "dlt: truncated tensor blob"
                                                  : "dlt: trailing bytes after payload");
  }
  std::vector<double> data(count);
  for (auto& v : data) v = std::bit_cast<double>(in.u64());
  try {
    return Tensor::from_data(std::move(shape), std::move(data));
  } catch (const NumericError&) {
    throw FormatError("dlt: payload contains non-finite values");
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw FormatError("short write to " + path.string());
  }
}

void write_dlt(const std::filesystem::path& path, const Tensor& tensor) {
  write_file_bytes(path, encode_dlt(tensor));
}

Tensor read_dlt(const std::filesystem::path& path) { return decode_dlt(read_file_bytes(path)); }

std::uint64_t tensor_digest(const std::vector<Tensor>& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& t : tensors) {
    mix(t.rank());
    for (auto extent : t.shape()) mix(extent);
    for (double v : t.data()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

}  // namespace delnet
