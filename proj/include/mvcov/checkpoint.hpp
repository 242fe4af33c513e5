#pragma once

#include <cstdint>
#include <string>

#include "mvcov/estimation.hpp"

namespace mvcov {

// Versioned binary snapshot of a fitted model: constrained parameters, the
// end-of-validation carry, and provenance hashes. Doubles are stored as
// little-endian IEEE-754; load(save(x)) round-trips bit-exactly.
struct Checkpoint {
    static constexpr std::uint32_t current_version = 1;

    FitResult fit;
    std::uint64_t config_hash = 0;
    std::uint64_t panel_hash = 0;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mvcov
