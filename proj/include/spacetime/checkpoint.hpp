#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spacetime/tensor.hpp"

namespace spacetime {

struct NamedArray {
    std::string name;
    Tensor tensor;
};

// Self-describing container of named f64 arrays plus an optional UTF-8
// metadata blob (the model configuration as JSON).
//
// Layout, all integers little-endian:
//   "SETT" | version u32 | count u64 |
//   count x { name_len u64 | name | rank u64 | extents u64[rank] | f64[numel] } |
//   meta_len u64 | meta
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::vector<NamedArray> arrays;
    std::string metadata;

    const Tensor* find(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace spacetime
