#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "colab/classifier.hpp"

namespace colab {

void validate_layers(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw std::invalid_argument("classifier: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in == 0 || layers[l].out == 0) {
      throw std::invalid_argument("classifier: layer " + std::to_string(l) + " has a zero dim");
    }
    if (l > 0 && layers[l].in != layers[l - 1].out) {
      throw std::invalid_argument("classifier: layer " + std::to_string(l) + " input " +
                                  std::to_string(layers[l].in) + " does not chain from " +
                                  std::to_string(layers[l - 1].out));
    }
  }
  if (layers.back().out < 2) throw std::invalid_argument("classifier: need at least 2 classes");
}

std::vector<LayerSpec> mlp_layers(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                  std::size_t num_classes) {
  std::vector<LayerSpec> layers;
  std::size_t prev = input_dim;
  for (std::size_t width : hidden) {
    layers.push_back({prev, width, Activation::relu});
    prev = width;
  }
  layers.push_back({prev, num_classes, Activation::none});
  validate_layers(layers);
  return layers;
}

namespace {

constexpr char kMagic[4] = {'C', 'O', 'L', 'B'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void le(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::make_unsigned_t<U>>(v) >> (8 * i)));
    }
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::span<const std::uint8_t> raw(std::size_t n) {
    if (pos_ + n > in_.size()) throw std::runtime_error("snapshot: truncated data");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U le() {
    auto b = raw(sizeof(U));
    std::make_unsigned_t<U> v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::make_unsigned_t<U>>(static_cast<std::make_unsigned_t<U>>(b[i]) << (8 * i));
    }
    return static_cast<U>(v);
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_snapshot(const ModelSnapshot& snapshot) {
  Writer w;
  w.raw(kMagic, 4);
  w.le<std::uint32_t>(kSnapshotVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(snapshot.layers.size()));
  for (const auto& l : snapshot.layers) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(l.in));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(l.out));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(l.activation));
  }
  w.le<std::int64_t>(snapshot.epoch);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(snapshot.tag.size()));
  w.raw(snapshot.tag.data(), snapshot.tag.size());
  for (const auto& p : snapshot.params) {
    for (double v : p.values()) w.f64(v);
  }
  return w.take();
}

ModelSnapshot decode_snapshot(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.raw(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw std::runtime_error("snapshot: bad magic");
  const auto version = r.le<std::uint32_t>();
  if (version != kSnapshotVersion) {
    throw std::runtime_error("snapshot: unsupported version " + std::to_string(version));
  }
  ModelSnapshot s;
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec l;
    l.in = r.le<std::uint32_t>();
    l.out = r.le<std::uint32_t>();
    const auto act = r.le<std::uint32_t>();
    if (act > 1) throw std::runtime_error("snapshot: unknown activation " + std::to_string(act));
    l.activation = static_cast<Activation>(act);
    s.layers.push_back(l);
  }
  validate_layers(s.layers);
  s.epoch = r.le<std::int64_t>();
  const auto tag_len = r.le<std::uint32_t>();
  auto tag = r.raw(tag_len);
  s.tag.assign(tag.begin(), tag.end());
  for (const auto& l : s.layers) {
    Tensor w({l.out, l.in});
    for (double& v : w.values()) v = r.f64();
    Tensor b({l.out});
    for (double& v : b.values()) v = r.f64();
    s.params.push_back(std::move(w));
    s.params.push_back(std::move(b));
  }
  if (!r.done()) throw std::runtime_error("snapshot: trailing bytes after parameters");
  return s;
}

void save_snapshot(const ModelSnapshot& snapshot, const std::filesystem::path& path) {
  const auto bytes = encode_snapshot(snapshot);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("snapshot: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("snapshot: write failed for " + path.string());
}

ModelSnapshot load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("snapshot: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_snapshot(bytes);
}

}  // namespace colab
