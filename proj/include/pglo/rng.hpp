#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pglo {

// One root seed spawns independent named streams so that runs with q > 1
// stay reproducible per stream no matter how evaluation waves interleave.
class RngStream {
public:
    RngStream() : engine_(0xB5297A4D) {}

    RngStream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0) {
        std::seed_seq seq{root_seed, hash_name(name), index};
        engine_.seed(seq);
    }

    std::mt19937_64& engine() { return engine_; }

    double uniform() {
        return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
    }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    // Fresh distribution per call: no hidden spare-value state, so a stream's
    // output depends only on how many draws were made before it.
    double normal() {
        return std::normal_distribution<double>(0.0, 1.0)(engine_);
    }

    std::uint64_t integer(std::uint64_t bound) {
        return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
    }

    RngStream substream(std::string_view name, std::uint64_t index = 0) {
        std::seed_seq seq{engine_(), hash_name(name), index};
        RngStream s;
        s.engine_.seed(seq);
        return s;
    }

private:
    static std::uint64_t hash_name(std::string_view name) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return h;
    }

    std::mt19937_64 engine_;
};

}  // namespace pglo
