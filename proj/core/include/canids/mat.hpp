#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace canids {

// Dense row-major matrix of doubles. All model math runs in double so that
// training is reproducible bit for bit on a given build.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return d[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return d[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return d.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return d.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return d.size(); }
    void fill(double v) { std::fill(d.begin(), d.end(), v); }
    void zero() { fill(0.0); }

    void resize(int r, int c) {
        rows = r;
        cols = c;
        d.assign(static_cast<size_t>(r) * c, 0.0);
    }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

using Vec = std::vector<double>;

// Named view over one parameter tensor. Model parameter structs hand these out
// so the optimizer, the archiver and the gradient checker can treat every
// model the same way.
struct TensorRef {
    std::string name;
    double* data = nullptr;
    size_t count = 0;
    std::vector<long> shape;
};

inline TensorRef ref(const std::string& name, Mat& m) {
    return TensorRef{name, m.d.data(), m.d.size(), {m.rows, m.cols}};
}

inline TensorRef ref(const std::string& name, Vec& v) {
    return TensorRef{name, v.data(), v.size(), {static_cast<long>(v.size())}};
}

inline size_t total_count(const std::vector<TensorRef>& ts) {
    size_t n = 0;
    for (const auto& t : ts) n += t.count;
    return n;
}

// FNV-1a over the raw bytes of every tensor, in declaration order. Used to
// prove a parameter set did not change (frozen teacher) and to hash artifacts.
uint64_t fnv1a(const void* data, size_t bytes, uint64_t seed = 1469598103934665603ull);
uint64_t checksum(const std::vector<TensorRef>& ts);

// Gaussian init scaled by 1/sqrt(fan_in). Plain mt19937_64 keeps every
// initialization reproducible from the trainer seed.
void init_gaussian(Mat& m, std::mt19937_64& rng, double scale);
void init_gaussian(Vec& v, std::mt19937_64& rng, double scale);

} // namespace canids
