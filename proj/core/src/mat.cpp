#include "canids/mat.hpp"

#include <cstring>

namespace canids {

uint64_t fnv1a(const void* data, size_t bytes, uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t checksum(const std::vector<TensorRef>& ts) {
    uint64_t h = 1469598103934665603ull;
    for (const auto& t : ts) {
        h = fnv1a(t.name.data(), t.name.size(), h);
        h = fnv1a(t.data, t.count * sizeof(double), h);
    }
    return h;
}

void init_gaussian(Mat& m, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    for (auto& v : m.d) v = dist(rng);
}

void init_gaussian(Vec& v, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    for (auto& x : v) x = dist(rng);
}

} // namespace canids
