#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "resmt/il.hpp"
#include "resmt/loader.hpp"
#include "resmt/query.hpp"
#include "resmt/symex.hpp"

namespace resmt::emu {

/// Concrete machine state over the same decode->lift pipeline; the
/// ground-truth oracle for differential tests and brute-force baselines.
struct ConcreteState {
    std::array<uint32_t, il::kRegCount> regs{};
    std::unordered_map<uint32_t, uint8_t> mem;
    std::unordered_map<uint8_t, uint32_t> temps;
    uint64_t steps = 0;
    uint64_t uninit_reads = 0;              // total count
    std::vector<uint32_t> uninit_read_log;  // first few addresses

    uint32_t reg(il::Reg r) const { return regs[size_t(r)]; }
    void set_reg(il::Reg r, uint32_t v)
    {
        regs[size_t(r)] = il::is_flag(r) ? (v & 1) : v;
    }
    uint8_t load_byte(uint32_t addr);
    void store_byte(uint32_t addr, uint8_t v) { mem[addr] = v; }
};

enum class RunStatus : uint8_t {
    Returned,
    StepLimit,
    DecodeFailure,
    UnliftableFailure,
    DivideByZero,
};
const char* run_status_name(RunStatus s);

struct RunResult {
    uint32_t eax = 0;
    RunStatus status = RunStatus::Returned;
    uint64_t steps = 0;
    ConcreteState state;
    std::string note;
};

/// Executes one IL instruction with machine-integer semantics. Returns
/// the jump target when a JCC fires. Throws DivideByZero.
std::optional<uint32_t> step_il_concrete(ConcreteState& s, const il::Instruction& ins);

/// Runs the function concretely with the same stack/sentinel layout as
/// the symbolic engine.
RunResult run_concrete(const FunctionImage& image, uint32_t entry,
                       std::span<const uint32_t> args, const Abi& abi,
                       const ExecLimits& limits,
                       const symex::Engine::Options& layout = {});

bool satisfies(const REQuery& q, uint32_t reg_value);

/// Ascending scan of 0..2^key_bits-1 for the first argument meeting the
/// goal; the query must name exactly one input.
std::optional<uint32_t> brute_force(const FunctionImage& image, uint32_t entry,
                                    const Abi& abi, const REQuery& goal,
                                    unsigned key_bits);

} // namespace resmt::emu
