#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "resmt/il.hpp"
#include "resmt/lifter.hpp"
#include "resmt/loader.hpp"
#include "resmt/query.hpp"
#include "resmt/term.hpp"

namespace resmt {

struct ExecLimits {
    uint64_t max_steps = 100000;
    uint32_t max_paths = 64;
    bool fork_feasibility_check = false;
};

struct Abi {
    enum class Kind { StackArgs, RegisterArgs };
    Kind kind = Kind::StackArgs;
    std::vector<il::Reg> regs; // argument registers, in order

    static Abi stack() { return {}; }
    static Abi registers(std::vector<il::Reg> rs)
    {
        return Abi{Kind::RegisterArgs, std::move(rs)};
    }
};

namespace symex {

/// A named solver variable bound equal to a value term.
struct Binding {
    smt::TermId var = 0;
    smt::TermId value = 0;
};

/// Symbolic CPU snapshot. Registers and temps map to value terms; every
/// write also allocates a step-indexed solver variable recorded in the
/// trace, so the emitted formula mirrors the execution.
struct MachineState {
    std::array<smt::TermId, il::kRegCount> regs{};
    std::unordered_map<uint8_t, smt::TermId> temps;
    smt::TermId mem = 0;
    std::vector<smt::TermId> path_condition;
    uint64_t step = 0;

    std::array<uint32_t, il::kRegCount> reg_writes{}; // step-variable counters
    uint32_t mem_writes = 0;
    std::vector<Binding> trace;       // definitional equalities, in order
    std::vector<smt::TermId> decls;   // vars created on this path, in order
    std::vector<std::shared_ptr<const LiftedBlock>> executed;

    smt::TermId eip() const { return regs[size_t(il::Reg::Eip)]; }
};

enum class PathStatus {
    Returned,
    StepLimit,
    PathLimitDropped,
    DecodeFailure,
    UnliftableFailure,
    SymbolicJump,
};

const char* path_status_name(PathStatus s);

struct Path {
    MachineState final_state;
    PathStatus status = PathStatus::Returned;
    smt::TermId return_value = 0; // R_EAX term at return
    std::string note;             // failure detail, when any
    uint64_t il_executed = 0;
};

struct StepEffect {
    enum class Kind { Continue, Branch, Halt };
    Kind kind = Kind::Continue;
    bool jumped = false; // Continue: a concrete JCC assigned eip
    MachineState state;  // Continue/Halt result; Branch: the taken side
    std::optional<MachineState> fallthrough;
};

/// Wall-clock phase accumulators filled by run().
struct RunStats {
    double decode_seconds = 0;
    double lift_seconds = 0;
    double exec_seconds = 0;
    uint64_t blocks_lifted = 0;
};

class Engine {
  public:
    struct Options {
        uint32_t stack_base = 0x7FFF0000;
        uint32_t return_sentinel = 0xDEADBEE0;
        // Optional per-fork pruning: return false to drop a forked state.
        std::function<bool(const MachineState&)> feasible;
    };

    explicit Engine(smt::TermStore& store);
    Engine(smt::TermStore& store, Options opts);

    /// Fresh state per the calling convention: sentinel return address at
    /// [ESP], stack args at [ESP+4+4i] or bound registers, everything else
    /// unconstrained.
    MachineState init_state(const REQuery& query, const Abi& abi, uint32_t entry = 0);

    /// Executes one validated IL instruction.
    StepEffect step_il(MachineState state, const il::Instruction& ins) const;

    /// Depth-first exploration from `entry` until every path returns or a
    /// limit cuts it off. Decoder and lifter failures terminate only the
    /// affected path.
    std::vector<Path> run(const FunctionImage& image, uint32_t entry,
                          const REQuery& query, const Abi& abi,
                          const ExecLimits& limits, RunStats* stats = nullptr);

    const std::vector<smt::TermId>& initial_decls() const { return m_init_decls; }
    smt::TermStore& store() const { return m_store; }
    const Options& options() const { return m_opts; }

    /// Installs the per-fork pruning predicate used when
    /// ExecLimits::fork_feasibility_check is on.
    void set_feasibility_hook(std::function<bool(const MachineState&)> fn)
    {
        m_opts.feasible = std::move(fn);
    }

  private:
    smt::TermId read_operand(const MachineState& s, const il::Operand& op) const;
    void bind_dest(MachineState& s, const il::Instruction& ins, smt::TermId value) const;

    smt::TermStore& m_store;
    Options m_opts;
    std::vector<smt::TermId> m_init_decls;
};

} // namespace symex
} // namespace resmt
