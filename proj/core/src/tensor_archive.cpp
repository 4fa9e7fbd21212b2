#include "canids/tensor_archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace canids {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'A', 'R'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("tensor archive: truncated file");
    return v;
}

} // namespace

void NamedTensorArchive::add(const std::string& name, std::vector<long> shape,
                             std::span<const double> values, Dtype dtype) {
    if (contains(name))
        throw std::runtime_error("tensor archive: duplicate name '" + name + "'");
    size_t expect = 1;
    for (long s : shape) {
        if (s < 0) throw std::runtime_error("tensor archive: negative dimension");
        expect *= static_cast<size_t>(s);
    }
    if (expect != values.size())
        throw std::runtime_error("tensor archive: shape does not match value count for '" + name + "'");

    TensorEntry e;
    e.name = name;
    e.dtype = dtype;
    e.shape = std::move(shape);
    e.values.assign(values.begin(), values.end());
    if (dtype == Dtype::f32)
        for (auto& v : e.values) v = static_cast<double>(static_cast<float>(v));
    entries_.push_back(std::move(e));
}

bool NamedTensorArchive::contains(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return true;
    return false;
}

const TensorEntry& NamedTensorArchive::at(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw std::runtime_error("tensor archive: no tensor named '" + name + "'");
}

void NamedTensorArchive::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write tensor archive: " + path.string());
    out.write(kMagic, 4);
    put<uint32_t>(out, kVersion);
    put<uint32_t>(out, static_cast<uint32_t>(entries_.size()));
    for (const auto& e : entries_) {
        put<uint32_t>(out, static_cast<uint32_t>(e.name.size()));
        out.write(e.name.data(), static_cast<long>(e.name.size()));
        put<uint8_t>(out, static_cast<uint8_t>(e.dtype));
        put<uint32_t>(out, static_cast<uint32_t>(e.shape.size()));
        for (long s : e.shape) put<int64_t>(out, s);
        if (e.dtype == Dtype::f64) {
            out.write(reinterpret_cast<const char*>(e.values.data()),
                      static_cast<long>(e.values.size() * sizeof(double)));
        } else {
            for (double v : e.values) put<float>(out, static_cast<float>(v));
        }
    }
    if (!out) throw std::runtime_error("tensor archive: write failed: " + path.string());
}

NamedTensorArchive NamedTensorArchive::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open tensor archive: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("tensor archive: bad magic in " + path.string());
    auto version = get<uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error("tensor archive: unsupported version " + std::to_string(version));

    NamedTensorArchive ar;
    auto count = get<uint32_t>(in);
    for (uint32_t i = 0; i < count; ++i) {
        auto name_len = get<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw std::runtime_error("tensor archive: truncated name");
        auto dtype = static_cast<Dtype>(get<uint8_t>(in));
        if (dtype != Dtype::f32 && dtype != Dtype::f64)
            throw std::runtime_error("tensor archive: unknown dtype");
        auto ndim = get<uint32_t>(in);
        std::vector<long> shape;
        size_t total = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            auto s = get<int64_t>(in);
            if (s < 0) throw std::runtime_error("tensor archive: negative dimension");
            shape.push_back(static_cast<long>(s));
            total *= static_cast<size_t>(s);
        }
        std::vector<double> values(total);
        if (dtype == Dtype::f64) {
            in.read(reinterpret_cast<char*>(values.data()),
                    static_cast<long>(total * sizeof(double)));
            if (!in) throw std::runtime_error("tensor archive: truncated payload");
        } else {
            for (size_t k = 0; k < total; ++k) values[k] = static_cast<double>(get<float>(in));
        }
        ar.add(name, std::move(shape), values, dtype);
    }
    return ar;
}

} // namespace canids
