#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resmt/loader.hpp"
#include "resmt/query.hpp"
#include "resmt/smtlib.hpp"
#include "resmt/symex.hpp"

namespace resmt {

struct PhaseTimings {
    double extraction = 0;
    double translation_emulation = 0;
    double solving = 0;
    double total = 0;
};

struct PipelineOptions {
    Abi abi;
    ExecLimits limits;
    smt::SolverConfig solver;   // empty command resolves to the default
    std::string emit_smt_dir;   // write path_<i>.smt2 per solved path
    std::string emit_il_dir;    // write path_<i>.il per explored path
    bool verbose = false;
    unsigned parallel_solves = 1;
    symex::Engine::Options layout;
    double load_seconds = 0;    // caller-measured file read time
};

struct PathReport {
    symex::PathStatus status;
    uint64_t il_executed = 0;
    uint64_t assertion_count = 0;
    std::optional<smt::Verdict> verdict; // present when solved
    double solver_time = 0;
    std::string note;
};

/// The user-visible outcome: verdict, recovered inputs, path counters and
/// the per-phase timing breakdown.
struct RunReport {
    smt::Verdict verdict = smt::Verdict::Unknown;
    std::map<std::string, uint32_t> recovered_inputs; // present iff SAT
    uint32_t paths_explored = 0;
    uint32_t paths_returned = 0;
    PhaseTimings timings;
    std::vector<PathReport> paths;
};

/// Full pipeline over a loaded image: explore, assemble one formula per
/// returned path, solve in exploration order, stop at the first SAT.
RunReport analyze(const FunctionImage& image, uint32_t entry, const REQuery& query,
                  const PipelineOptions& options);

std::string report_to_json(const RunReport& report);
std::string render_report(const RunReport& report); // human-readable

} // namespace resmt
