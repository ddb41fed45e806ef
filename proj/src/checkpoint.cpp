#include "negmine/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include <fmt/core.h>
#include <fmt/ranges.h>

#include "negmine/hashing.hpp"

namespace negmine {
namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void text(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> bytes;

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : bytes_(b), end_(end) {}

  std::size_t pos() const { return pos_; }
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(get(4))); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string text(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) {
      throw CheckpointError(pos_, fmt::format("truncated: need {} more bytes", n));
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

void write_payload(Writer& w, const ParameterSet& p) {
  for (const auto& [_, layer] : p.layers) {
    for (double v : layer.weights.values()) w.f64(v);
    for (double v : layer.bias) w.f64(v);
  }
}

void read_payload(Reader& r, ParameterSet& p) {
  for (auto& [_, layer] : p.layers) {
    for (double& v : layer.weights.values()) v = r.f64();
    for (double& v : layer.bias) v = r.f64();
  }
}

}  // namespace

CheckpointError::CheckpointError(std::size_t offset, const std::string& detail)
    : std::runtime_error(fmt::format("checkpoint error at byte {}: {}", offset, detail)),
      offset_(offset) {}

void require_layers_match(const ParameterSet& params, const NetworkSpec& spec) {
  std::set<std::string> expected;
  for (const LayerDef& d : layer_plan(spec)) expected.insert(d.id);
  const auto actual = params.layer_ids();
  if (actual != expected) {
    throw SpecError(fmt::format("layer ids do not match the network spec\n  checkpoint: {}\n  spec:       {}",
                                actual, expected));
  }
}

std::vector<std::uint8_t> encode_checkpoint(const ParameterSet& params,
                                            const AdamState* optimizer) {
  Writer w;
  w.text("NMCK");
  w.u8(kCheckpointVersion);
  w.u8(optimizer != nullptr ? 1 : 0);
  const NetworkSpec& s = params.spec;
  w.i32(s.input_size);
  w.i32(s.depth);
  w.i32(s.base_channels);
  w.u32(static_cast<std::uint32_t>(s.inception_levels.size()));
  for (int level : s.inception_levels) w.i32(level);
  w.u32(static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& [id, layer] : params.layers) {
    w.u16(static_cast<std::uint16_t>(id.size()));
    w.text(id);
    const Shape& sh = layer.weights.shape();
    w.i32(sh.n);
    w.i32(sh.c);
    w.i32(sh.h);
    w.i32(sh.w);
    w.u32(static_cast<std::uint32_t>(layer.bias.size()));
  }
  write_payload(w, params);
  if (optimizer != nullptr) {
    w.u64(optimizer->t);
    w.f64(optimizer->hyper.lr);
    w.f64(optimizer->hyper.beta1);
    w.f64(optimizer->hyper.beta2);
    w.f64(optimizer->hyper.eps);
    write_payload(w, optimizer->m);
    write_payload(w, optimizer->v);
  }
  w.u32(crc32(w.bytes));
  return std::move(w.bytes);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 10) throw CheckpointError(0, "file too short");
  const std::size_t body = bytes.size() - 4;
  Reader r(bytes, body);
  if (r.text(4) != "NMCK") throw CheckpointError(0, "bad magic");
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) {
    throw CheckpointError(4, fmt::format("unsupported version {}", version));
  }
  {
    Reader tail(bytes, bytes.size());
    for (std::size_t i = 0; i < body; ++i) tail.u8();
    const std::uint32_t stored = tail.u32();
    const std::uint32_t actual =
        crc32(std::span<const std::uint8_t>(bytes.data(), body));
    if (stored != actual) {
      throw CheckpointError(body, fmt::format("checksum mismatch (stored {:08x}, computed {:08x})",
                                              stored, actual));
    }
  }
  const std::uint8_t flags = r.u8();

  Checkpoint ck;
  NetworkSpec& s = ck.params.spec;
  s.input_size = r.i32();
  s.depth = r.i32();
  s.base_channels = r.i32();
  s.inception_levels.clear();
  const std::uint32_t n_levels = r.u32();
  for (std::uint32_t i = 0; i < n_levels; ++i) s.inception_levels.insert(r.i32());
  try {
    s.validate();
  } catch (const SpecError& e) {
    throw CheckpointError(5, std::string("invalid network spec: ") + e.what());
  }

  const std::uint32_t n_layers = r.u32();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    const std::size_t at = r.pos();
    const std::string id = r.text(r.u16());
    Shape sh;
    sh.n = r.i32();
    sh.c = r.i32();
    sh.h = r.i32();
    sh.w = r.i32();
    const std::uint32_t n_bias = r.u32();
    if (sh.n <= 0 || sh.c <= 0 || sh.h <= 0 || sh.w <= 0 || sh.numel() > (1u << 28) ||
        n_bias != static_cast<std::uint32_t>(sh.n)) {
      throw CheckpointError(at, fmt::format("layer '{}' has invalid shape {}", id, to_string(sh)));
    }
    if (!ck.params.layers.emplace(id, Layer{Tensor(sh), std::vector<double>(n_bias)}).second) {
      throw CheckpointError(at, fmt::format("duplicate layer '{}'", id));
    }
  }
  const std::size_t payload_at = r.pos();
  try {
    require_layers_match(ck.params, s);
  } catch (const SpecError& e) {
    throw CheckpointError(payload_at, e.what());
  }
  for (const LayerDef& d : layer_plan(s)) {
    const Shape want{d.out_channels, d.in_channels, d.kernel, d.kernel};
    if (ck.params.layer(d.id).weights.shape() != want) {
      throw CheckpointError(payload_at, fmt::format("layer '{}' shape {} expected {}", d.id,
                                                    to_string(ck.params.layer(d.id).weights.shape()),
                                                    to_string(want)));
    }
  }
  read_payload(r, ck.params);
  if (flags & 1) {
    AdamState st;
    st.t = r.u64();
    st.hyper.lr = r.f64();
    st.hyper.beta1 = r.f64();
    st.hyper.beta2 = r.f64();
    st.hyper.eps = r.f64();
    st.m = zeros_like(ck.params);
    st.v = zeros_like(ck.params);
    read_payload(r, st.m);
    read_payload(r, st.v);
    ck.optimizer = std::move(st);
  }
  if (r.pos() != body) {
    throw CheckpointError(r.pos(), fmt::format("{} trailing bytes", body - r.pos()));
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params,
                     const AdamState* optimizer) {
  const auto bytes = encode_checkpoint(params, optimizer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace negmine
