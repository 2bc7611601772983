#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace llem {

/// A named f32 tensor as stored in a weight archive.
struct NamedTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
};

/// Ordered name -> tensor map backing every learned component. Entries keep
/// insertion order so that a load/save cycle reproduces the file byte for byte.
///
/// File layout (all integers little-endian):
///   "LLEW" | u32 version = 1 | u32 entry count
///   per entry: u16 name length | name bytes | u8 rank | rank x u32 dims | f32 payload
class WeightArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  /// Adds or replaces an entry. Throws DimensionError if dims and data disagree.
  void set(const std::string& name, std::vector<std::uint32_t> dims, std::vector<float> data);
  /// Adds an entry; throws FormatError if the name already exists.
  void add(const std::string& name, std::vector<std::uint32_t> dims, std::vector<float> data);

  bool contains(const std::string& name) const;
  const NamedTensor& at(const std::string& name) const;
  NamedTensor& at(const std::string& name);
  const NamedTensor* find(const std::string& name) const;

  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }
  const std::vector<std::string>& names() const { return order_; }

  /// Names from `required` that are absent, in the given order.
  std::vector<std::string> missing(std::span<const std::string> required) const;

  std::vector<std::uint8_t> serialize() const;
  static WeightArchive deserialize(std::span<const std::uint8_t> bytes);

 private:
  std::vector<std::string> order_;
  std::map<std::string, NamedTensor> entries_;
};

/// Expected name and shape of one tensor.
struct WeightSpec {
  std::string name;
  std::vector<std::uint32_t> dims;
};

/// Throws MissingWeightsError listing every absent name, or DimensionError on
/// the first shape mismatch.
void require_weights(const WeightArchive& archive, std::span<const WeightSpec> specs);

/// Archive holding every spec'd tensor filled with zeros.
WeightArchive zero_weights(std::span<const WeightSpec> specs);

/// Archive holding every spec'd tensor drawn i.i.d. from N(0, stddev^2).
WeightArchive random_weights(std::span<const WeightSpec> specs, std::uint64_t seed,
                             float stddev = 0.02f);

WeightArchive load_weights(const std::filesystem::path& path);
void save_weights(const WeightArchive& archive, const std::filesystem::path& path);

}  // namespace llem
