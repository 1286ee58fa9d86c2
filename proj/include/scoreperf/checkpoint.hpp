#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scoreperf/nn.hpp"

namespace scoreperf {

// Flat binary container: magic "SCPK0001", a length-prefixed text index of
// (name, rows, cols, byte offset), a length-prefixed metadata JSON block,
// then the raw little-endian float64 arrays.
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> entries;
    std::string meta_json;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const std::string& meta_json);
Checkpoint load_checkpoint(const std::string& path);

// Replaces (or creates) every named tensor in `params`.
void load_into(ParamStore& params, const Checkpoint& ck);

} // namespace scoreperf
