#include <bit>
#include <cstring>

#include "mpipn/error.hpp"
#include "mpipn/io.hpp"
#include "mpipn/network.hpp"

namespace mpipn::net {

namespace {

constexpr char kMagic[8] = {'M', 'P', 'I', 'P', 'N', 'C', 'K', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint64_t u64() {
    if (pos_ + 8 > bytes_.size()) throw IoError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const ModelParams& model) {
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, kFormatVersion);
  const auto desc = model.arch.descriptor();
  put_u64(out, desc.size());
  for (auto d : desc) put_u64(out, d);
  put_u64(out, model.tensors.size());
  for (const auto& t : model.tensors) {
    put_u64(out, t.value.rows());
    put_u64(out, t.value.cols());
    for (double v : t.value.data()) put_f64(out, v);
  }
  put_u64(out, io::fnv1a64(out));
  return out;
}

ModelParams deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError("not a checkpoint (bad magic)");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != io::fnv1a64(body)) throw IoError("checkpoint checksum mismatch");

  Reader r(body);
  r.take(sizeof kMagic);
  const auto version = r.u64();
  if (version != kFormatVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  std::vector<std::uint64_t> desc(r.u64());
  for (auto& d : desc) d = r.u64();
  ModelParams model = init_params(0, ArchConfig::from_descriptor(desc));
  if (r.u64() != model.tensors.size()) throw IoError("checkpoint tensor count does not match its architecture");
  for (auto& t : model.tensors) {
    const auto rows = r.u64(), cols = r.u64();
    if (rows != t.value.rows() || cols != t.value.cols()) {
      throw IoError("checkpoint tensor " + t.name + " has shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                    ", expected " + t.value.shape_string());
    }
    for (auto& v : t.value.storage()) v = r.f64();
  }
  if (r.pos() != body.size()) throw IoError("checkpoint has trailing bytes");
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model) {
  io::write_file(path, serialize(model));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing checkpoint " + path.string());
  try {
    return deserialize(io::read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace mpipn::net
