#include "cadsketch/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "cadsketch/error.hpp"
#include "cadsketch/fileio.hpp"

namespace cadsketch::nets {

namespace {

constexpr char kMagic[4] = {'P', 'C', 'S', 'O'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::IoError, "checkpoint truncated");
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ad::ParameterStore& store) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store.entries()) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (int d : e.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float f : e.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not a checkpoint (bad magic)");
  }
  Reader r(bytes.substr(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(r.take(r.u32()));
    const std::uint32_t rank = r.u32();
    if (rank > 4) throw Error(ErrorCode::IoError, "checkpoint tensor '" + t.name + "' has rank > 4");
    ad::Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
    std::vector<float> values(ad::shape_size(shape));
    for (float& f : values) f = std::bit_cast<float>(r.u32());
    t.value = ad::Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(t));
  }
  if (!r.done()) throw Error(ErrorCode::IoError, "trailing bytes after checkpoint payload");
  return out;
}

void save_checkpoint(const ad::ParameterStore& store, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(store));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void load_into(ad::ParameterStore& store, const std::vector<NamedTensor>& tensors) {
  auto& entries = store.entries();
  if (tensors.size() != entries.size()) {
    throw Error(ErrorCode::CheckpointMismatch, "checkpoint has " + std::to_string(tensors.size()) +
                                                   " parameters, model has " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name != entries[i].name) {
      throw Error(ErrorCode::CheckpointMismatch,
                  "checkpoint parameter '" + tensors[i].name + "' where model expects '" + entries[i].name + "'");
    }
    if (tensors[i].value.shape() != entries[i].value.shape()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter '" + entries[i].name + "': checkpoint " +
                                                ad::shape_string(tensors[i].value.shape()) + " vs model " +
                                                ad::shape_string(entries[i].value.shape()));
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto src = tensors[i].value.data();
    std::copy(src.begin(), src.end(), entries[i].value.data().begin());
  }
}

void load_into(ad::ParameterStore& store, const std::filesystem::path& path) {
  load_into(store, load_checkpoint(path));
}

}  // namespace cadsketch::nets
