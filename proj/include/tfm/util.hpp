#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace tfm {

std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::string to_lower_ascii(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::uint64_t fnv1a64(std::string_view data);
/// SplitMix64 finalizer; turns a weak 64-bit key into a well mixed seed.
std::uint64_t mix64(std::uint64_t x);

/// Seeded random source. Draws are derived from mt19937_64 output with
/// explicit bit manipulation so sequences do not depend on the standard
/// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    bool bernoulli(double p) { return uniform() < p; }
    /// Index sampled proportionally to the nonnegative weights (need not sum to 1).
    std::size_t categorical(std::span<const double> weights);
    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// Half-up rounding to one decimal, formatted ("42.9").
std::string format_one_decimal(double value);

}  // namespace tfm
