#include "pttr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include <zlib.h>

namespace pttr {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw std::runtime_error("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParameterList<T>& params) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out.insert(out.end(), p->name.begin(), p->name.end());
    put_u32(out, static_cast<std::uint32_t>(p->value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p->value.cols()));
  }
  for (const auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) put_f32(out, static_cast<float>(p->value.data()[i]));
  }
  put_u32(out, crc32_of(out.data(), out.size()));
  return out;
}

CheckpointData decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) + 12) throw std::runtime_error("checkpoint truncated");
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic)");
  }
  const std::size_t body = bytes.size() - 4;
  {
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
    if (stored != crc32_of(bytes.data(), body)) throw std::runtime_error("checkpoint CRC mismatch");
  }
  Reader in(bytes, body);
  in.str(sizeof(kCheckpointMagic));
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointData data;
  const std::uint32_t count = in.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    ManifestEntry e;
    e.name = in.str(in.u32());
    e.rows = in.u32();
    e.cols = in.u32();
    data.manifest.push_back(std::move(e));
  }
  for (const auto& e : data.manifest) {
    std::vector<float> v(static_cast<std::size_t>(e.rows) * e.cols);
    for (float& f : v) f = in.f32();
    data.values.push_back(std::move(v));
  }
  if (in.pos() != body) throw std::runtime_error("checkpoint has trailing bytes");
  return data;
}

template <typename T>
void apply_checkpoint(const CheckpointData& data, const ParameterList<T>& params) {
  if (data.manifest.size() != params.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(data.manifest.size()) +
                             " entries, model expects " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& e = data.manifest[k];
    auto* p = params[k];
    if (e.name != p->name || e.rows != p->value.rows() || e.cols != p->value.cols()) {
      throw std::runtime_error("checkpoint entry " + e.name + " (" + std::to_string(e.rows) + "x" +
                               std::to_string(e.cols) + ") does not match model parameter " +
                               p->name);
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      p->value.data()[i] = static_cast<T>(data.values[k][static_cast<std::size_t>(i)]);
    }
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

template <typename T>
void save_checkpoint(const std::string& path, const ParameterList<T>& params) {
  write_file_bytes(path, encode_checkpoint(params));
}

template <typename T>
void load_checkpoint(const std::string& path, const ParameterList<T>& params) {
  apply_checkpoint(decode_checkpoint(read_file_bytes(path)), params);
}

template std::vector<std::uint8_t> encode_checkpoint(const ParameterList<float>&);
template std::vector<std::uint8_t> encode_checkpoint(const ParameterList<double>&);
template void apply_checkpoint(const CheckpointData&, const ParameterList<float>&);
template void apply_checkpoint(const CheckpointData&, const ParameterList<double>&);
template void save_checkpoint(const std::string&, const ParameterList<float>&);
template void save_checkpoint(const std::string&, const ParameterList<double>&);
template void load_checkpoint(const std::string&, const ParameterList<float>&);
template void load_checkpoint(const std::string&, const ParameterList<double>&);

}  // namespace pttr
