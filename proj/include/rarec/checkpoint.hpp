#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rarec/tensor.hpp"

namespace rarec {

// Checkpoint = plain-text manifest (<stem>.manifest) plus a binary blob
// (<stem>.tensors) of little-endian float32 values, row-major, one block per
// tensor at the byte offset named in the manifest. The manifest also carries
// free-form `meta key value...` lines, the blob checksum, and per-component
// checksums over the tensors sharing a `component.` name prefix.
struct Checkpoint {
    std::map<std::string, std::string> meta;   // key -> value (single line)
    ParameterSet tensors;

    void set_meta(const std::string& key, const std::string& value) { meta[key] = value; }
    std::string meta_or(const std::string& key, const std::string& fallback) const {
        auto it = meta.find(key);
        return it == meta.end() ? fallback : it->second;
    }
};

// Component prefix = tensor name up to the first '.'.
std::map<std::string, std::uint64_t> component_checksums(const ParameterSet& tensors);

void save_checkpoint(const Checkpoint& ckpt, const std::string& stem);

// Verifies the blob checksum and every component checksum; throws
// CheckpointError on corruption or format problems.
Checkpoint load_checkpoint(const std::string& stem);

// Rounds a tensor's values to float32 precision in place. Frozen components
// are snapped to checkpoint precision before their checksum is taken so the
// in-memory content and any save/load round trip agree bitwise.
void snap_to_f32(ParameterSet& params);

}  // namespace rarec
