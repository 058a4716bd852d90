#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace imsat {

// One entry of the flat binary container shared by model checkpoints and the
// native dataset format: little-endian u64 name length, UTF-8 name, u64 rank,
// u64 dims, then the values as raw little-endian 64-bit floats.
struct NamedTensor {
    std::string name;
    std::vector<std::size_t> dims;
    std::vector<double> values;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (std::size_t d : dims) n *= d;
        return n;
    }
};

// File layout: 12-byte magic, little-endian u32 version (16-byte header), then
// the tensors back to back until end of file.
void write_container(const std::string& path, const char magic[12], std::uint32_t version,
                     const std::vector<NamedTensor>& tensors);

std::vector<NamedTensor> read_container(const std::string& path, const char magic[12],
                                        std::uint32_t expected_version);

}  // namespace imsat
