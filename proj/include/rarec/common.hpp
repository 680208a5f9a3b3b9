#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rarec {

// Error classes surfaced by the CLI as `error class=<name> ...` lines.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FrozenViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline const char* error_class(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const DataError*>(&e)) return "data";
    if (dynamic_cast<const ShapeError*>(&e)) return "shape";
    if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
    if (dynamic_cast<const FrozenViolation*>(&e)) return "frozen";
    if (dynamic_cast<const NumericError*>(&e)) return "numeric";
    return "internal";
}

// FNV-1a, 64-bit. Used for content checksums and for deriving stage seeds
// and tokenizer bucket ids. Stable across platforms.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), h);
}

// One global seed drives per-stage seeds: stage_seed = fnv1a64(stage_name)
// folded with the global seed. Stages can be rerun independently yet
// reproducibly.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage) {
    std::uint64_t h = fnv1a64(stage);
    h ^= global_seed + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

std::string to_hex(std::uint64_t v);
std::uint64_t from_hex(const std::string& s);

}  // namespace rarec
