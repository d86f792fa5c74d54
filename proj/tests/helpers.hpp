#pragma once

#include "troch/rng.hpp"
#include "troch/volume.hpp"

#include <filesystem>
#include <string>

namespace troch::testing {

inline Volume random_volume(Dims dims, Spacing sp, Rng& rng, float lo = 0.0f,
                            float hi = 1.0f) {
    Volume v(dims, sp);
    for (auto& x : v.data) x = lo + (hi - lo) * static_cast<float>(rng.uniform());
    return v;
}

inline BinaryMask random_mask(Dims dims, Spacing sp, Rng& rng, double density = 0.5) {
    BinaryMask m(dims, sp);
    for (auto& x : m.data) x = rng.uniform() < density ? 1 : 0;
    return m;
}

// Fresh scratch directory under the system temp dir.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("troch_test_" + tag + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace troch::testing
