#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"

#include "canids/tensor_archive.hpp"

using namespace canids;
namespace fs = std::filesystem;

TEST_CASE("archive save and load is an identity") {
    NamedTensorArchive a;
    std::vector<double> w{1.0, -2.5, 3.25, 0.0, 1e-300, -1e300};
    a.add("model.w", {2, 3}, w);
    std::vector<double> b{0.125};
    a.add("model.b", {1}, b);

    const auto path = fs::temp_directory_path() / "canids_archive_test.ntar";
    a.save(path);
    auto back = NamedTensorArchive::load(path);

    REQUIRE(back.entries().size() == 2);
    const auto& e = back.at("model.w");
    CHECK(e.shape == std::vector<long>{2, 3});
    CHECK(e.values == w); // bit exact for f64
    CHECK(back.at("model.b").values[0] == 0.125);
    fs::remove(path);
}

TEST_CASE("f32 tensors quantize on insert so round trips are exact") {
    NamedTensorArchive a;
    std::vector<double> v{0.1, 0.2, 1.0 / 3.0};
    a.add("q", {3}, v, Dtype::f32);

    // values are already float-rounded in memory
    const auto& e = a.at("q");
    for (size_t i = 0; i < v.size(); ++i)
        CHECK(e.values[i] == static_cast<double>(static_cast<float>(v[i])));

    const auto path = fs::temp_directory_path() / "canids_archive_f32.ntar";
    a.save(path);
    auto back = NamedTensorArchive::load(path);
    CHECK(back.at("q").values == e.values);
    CHECK(back.at("q").dtype == Dtype::f32);
    fs::remove(path);
}

TEST_CASE("names are unique and shapes must match the payload") {
    NamedTensorArchive a;
    std::vector<double> v{1, 2, 3, 4};
    a.add("x", {2, 2}, v);
    CHECK_THROWS(a.add("x", {4}, v));
    CHECK_THROWS(a.add("y", {3}, v)); // 3 != 4 values
    CHECK_THROWS(a.at("missing"));
    CHECK(a.contains("x"));
    CHECK_FALSE(a.contains("y"));
}

TEST_CASE("load rejects corrupted files") {
    const auto path = fs::temp_directory_path() / "canids_archive_bad.ntar";
    {
        std::FILE* f = std::fopen(path.string().c_str(), "wb");
        std::fputs("not an archive at all", f);
        std::fclose(f);
    }
    CHECK_THROWS(NamedTensorArchive::load(path));

    // truncated: valid header, cut payload
    NamedTensorArchive a;
    std::vector<double> v(64, 1.5);
    a.add("big", {64}, v);
    a.save(path);
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 16);
    CHECK_THROWS(NamedTensorArchive::load(path));
    fs::remove(path);
}

TEST_CASE("many tensors survive a round trip in declaration order") {
    NamedTensorArchive a;
    std::mt19937_64 rng(42);
    std::normal_distribution<double> dist;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> v(static_cast<size_t>(10 + i));
        for (auto& x : v) x = dist(rng);
        a.add("t" + std::to_string(i), {static_cast<long>(v.size())}, v);
    }
    const auto path = fs::temp_directory_path() / "canids_archive_many.ntar";
    a.save(path);
    auto back = NamedTensorArchive::load(path);
    REQUIRE(back.entries().size() == 20);
    for (size_t i = 0; i < 20; ++i) {
        CHECK(back.entries()[i].name == a.entries()[i].name);
        CHECK(back.entries()[i].values == a.entries()[i].values);
    }
    fs::remove(path);
}
