#pragma once

#include <cstdint>
#include <vector>

#include "resmt/loader.hpp"
#include "resmt/x86.hpp"

namespace resmt::obf {

enum class Technique : uint8_t {
    JumpInsertion,
    OpcodeMutation,
    DeadCode,
    OppositeJumpPair,
    JunkInsertion,
};

const char* technique_name(Technique t);

struct ObfConfig {
    uint32_t iterations = 1;
    std::vector<Technique> techniques; // non-empty
    uint64_t seed = 0;

    static std::vector<Technique> all()
    {
        return {Technique::JumpInsertion, Technique::OpcodeMutation,
                Technique::DeadCode, Technique::OppositeJumpPair,
                Technique::JunkInsertion};
    }
};

struct ObfResult {
    FunctionImage image;
    uint32_t entry = 0;
};

/// Applies `iterations` rounds of the selected semantics-preserving
/// transformations. Deterministic for a given (image, config).
ObfResult obfuscate(const FunctionImage& image, uint32_t entry, const ObfConfig& config);

/// Instruction count by linear decode; for measuring obfuscation tiers.
size_t linear_instruction_count(const FunctionImage& image);

} // namespace resmt::obf
