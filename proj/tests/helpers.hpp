// Small conveniences shared by the test binaries.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cloudbench/core.hpp"

namespace testutil {

// Fresh directory under the system temp root; removed on destruction.
class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        std::mt19937_64 eng(std::random_device{}());
        for (int attempt = 0; attempt < 64; ++attempt) {
            auto p = base / ("cbtest-" + std::to_string(eng()));
            std::error_code ec;
            if (std::filesystem::create_directory(p, ec)) {
                path_ = p;
                return;
            }
        }
        throw std::runtime_error("cannot create temp directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string str() const { return path_.string(); }

private:
    std::filesystem::path path_;
};

inline cloudbench::Catalog tiny_catalog() {
    return cloudbench::Catalog({
        {"alpha", cloudbench::Csp::C1, cloudbench::Area::EastUS, "Alpha"},
        {"bravo", cloudbench::Csp::C2, cloudbench::Area::WestUS, "Bravo"},
        {"charlie", cloudbench::Csp::C3, cloudbench::Area::NorthEurope, "Charlie"},
    });
}

inline cloudbench::BandwidthSeries make_series(const cloudbench::Path& p,
                                               const std::vector<double>& values,
                                               std::int64_t start = 1425254400,
                                               std::int64_t step = 3600) {
    cloudbench::BandwidthSeries s;
    s.path = p;
    for (size_t i = 0; i < values.size(); ++i) {
        cloudbench::BandwidthSample b;
        b.path = p;
        b.start_utc = start + static_cast<std::int64_t>(i) * step;
        b.duration_s = 300;
        b.mean_mbps = values[i];
        s.samples.push_back(b);
    }
    return s;
}

inline std::vector<double> gaussian_values(size_t n, double mu, double sigma,
                                           std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal(mu, sigma);
    std::vector<double> out(n);
    for (auto& v : out) v = normal(eng);
    return out;
}

}  // namespace testutil
