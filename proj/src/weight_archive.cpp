#include "llem/weight_archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include "llem/errors.hpp"

namespace llem {
namespace {

constexpr char kMagic[4] = {'L', 'L', 'E', 'W'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
    }
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float f32(const char* what) { return std::bit_cast<float>(le<std::uint32_t>(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw FormatError(std::string("weight archive truncated while reading ") + what +
                        " at byte " + std::to_string(pos_));
    }
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::size_t dims_product(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::size_t NamedTensor::element_count() const { return dims_product(dims); }

void WeightArchive::set(const std::string& name, std::vector<std::uint32_t> dims,
                        std::vector<float> data) {
  if (dims_product(dims) != data.size()) {
    throw DimensionError("weight '" + name + "': dims product " + std::to_string(dims_product(dims)) +
                         " != data length " + std::to_string(data.size()));
  }
  if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw DimensionError("weight name longer than 65535 bytes");
  }
  if (dims.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw DimensionError("weight '" + name + "': rank above 255");
  }
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    order_.push_back(name);
    entries_.emplace(name, NamedTensor{std::move(dims), std::move(data)});
  } else {
    it->second = NamedTensor{std::move(dims), std::move(data)};
  }
}

void WeightArchive::add(const std::string& name, std::vector<std::uint32_t> dims,
                        std::vector<float> data) {
  if (contains(name)) throw FormatError("duplicate weight name '" + name + "'");
  set(name, std::move(dims), std::move(data));
}

bool WeightArchive::contains(const std::string& name) const { return entries_.count(name) != 0; }

const NamedTensor& WeightArchive::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw MissingWeightsError("missing weight '" + name + "'");
  return it->second;
}

NamedTensor& WeightArchive::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw MissingWeightsError("missing weight '" + name + "'");
  return it->second;
}

const NamedTensor* WeightArchive::find(const std::string& name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> WeightArchive::missing(std::span<const std::string> required) const {
  std::vector<std::string> out;
  for (const auto& n : required)
    if (!contains(n)) out.push_back(n);
  return out;
}

std::vector<std::uint8_t> WeightArchive::serialize() const {
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint32_t>(kVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    const auto& t = entries_.at(name);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.le<std::uint32_t>(d);
    for (float v : t.data) w.f32(v);
  }
  return w.take();
}

WeightArchive WeightArchive::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a weight archive: bad magic (expected \"LLEW\")");
  }
  Reader r(bytes.subspan(4));
  const auto version = r.le<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError("unsupported weight archive version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>("entry count");
  WeightArchive archive;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.le<std::uint16_t>("name length");
    std::string name = r.str(name_len, "name");
    const auto rank = r.le<std::uint8_t>("rank");
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.le<std::uint32_t>("dims");
    const std::size_t n = dims_product(dims);
    if (n > r.remaining() / 4) {
      throw FormatError("weight archive truncated in payload of '" + name + "'");
    }
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32("payload");
    archive.add(name, std::move(dims), std::move(data));
  }
  if (r.remaining() != 0) {
    throw FormatError("weight archive has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  return archive;
}

void require_weights(const WeightArchive& archive, std::span<const WeightSpec> specs) {
  std::string missing;
  std::size_t count = 0;
  for (const auto& spec : specs) {
    if (!archive.contains(spec.name)) {
      missing += (count++ ? ", " : "") + spec.name;
    }
  }
  if (count != 0) {
    throw MissingWeightsError("weight archive is missing " + std::to_string(count) +
                              " tensor(s): " + missing);
  }
  for (const auto& spec : specs) {
    const auto& t = archive.at(spec.name);
    if (t.dims != spec.dims) {
      auto fmt = [](const std::vector<std::uint32_t>& d) {
        std::string s = "[";
        for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
        return s + "]";
      };
      throw DimensionError("weight '" + spec.name + "' has shape " + fmt(t.dims) + ", expected " +
                           fmt(spec.dims));
    }
  }
}

WeightArchive zero_weights(std::span<const WeightSpec> specs) {
  WeightArchive archive;
  for (const auto& spec : specs) {
    archive.add(spec.name, spec.dims, std::vector<float>(dims_product(spec.dims), 0.0f));
  }
  return archive;
}

WeightArchive random_weights(std::span<const WeightSpec> specs, std::uint64_t seed, float stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, stddev);
  WeightArchive archive;
  for (const auto& spec : specs) {
    std::vector<float> data(dims_product(spec.dims));
    for (auto& v : data) v = normal(rng);
    archive.add(spec.name, spec.dims, std::move(data));
  }
  return archive;
}

WeightArchive load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open weight archive " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return WeightArchive::deserialize(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_weights(const WeightArchive& archive, const std::filesystem::path& path) {
  const auto bytes = archive.serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write weight archive " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing weight archive " + path.string());
}

}  // namespace llem
