#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace rpf::core {

/// Seeded RNG with a serializable state, so training runs can resume
/// bit-compatibly from a checkpoint.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    std::mt19937_64& engine() { return engine_; }

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    std::string save_state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }
    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace rpf::core
