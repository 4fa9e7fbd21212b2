#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace canids {

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

// One named tensor. Values live as doubles in memory; f32 entries are
// quantized on insert so a save/load cycle is an exact identity for both
// dtypes.
struct TensorEntry {
    std::string name;
    Dtype dtype = Dtype::f64;
    std::vector<long> shape;
    std::vector<double> values; // row-major
};

// Flat container of named tensors with a small binary on-disk format:
// magic, version, entry count, then per entry name, dtype, shape, payload.
// Names are unique. Numeric little-endian layout, no alignment padding.
class NamedTensorArchive {
  public:
    void add(const std::string& name, std::vector<long> shape,
             std::span<const double> values, Dtype dtype = Dtype::f64);

    bool contains(const std::string& name) const;
    const TensorEntry& at(const std::string& name) const;
    const std::vector<TensorEntry>& entries() const { return entries_; }

    void save(const std::filesystem::path& path) const;
    static NamedTensorArchive load(const std::filesystem::path& path);

  private:
    std::vector<TensorEntry> entries_;
};

} // namespace canids
