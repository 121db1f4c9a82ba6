#pragma once

#include <map>
#include <string>
#include <vector>

#include "resmt/query.hpp"
#include "resmt/symex.hpp"
#include "resmt/term.hpp"

namespace resmt::smt {

/// The assembled per-path formula: declarations, definitional and path
/// assertions in execution order, and the RE goal.
struct Formula {
    std::string logic = "QF_ABV";
    std::vector<TermId> decls;      // Var / ArrayVar terms, in order
    std::vector<TermId> assertions; // 1-bit terms, in order
    TermId goal = kNoTerm;
};

/// Declares <REG>_output variables and asserts them equal to the path's
/// final register terms. Returns the output variable per register.
std::map<il::Reg, TermId> bind_outputs(TermStore& store, const symex::Path& path,
                                       std::vector<TermId>& decls,
                                       std::vector<TermId>& assertions);

/// Builds the complete formula for one returned path: initial and trace
/// declarations, definitional equalities, path condition, output bindings,
/// and the query goal.
struct PathFormula {
    Formula formula;
    std::map<il::Reg, TermId> outputs;
};
PathFormula assemble_formula(const symex::Engine& engine, const symex::Path& path,
                             const REQuery& query);

/// Renders SMT-LIB2 text: set-logic, declare-funs, asserts in order, the
/// goal, check-sat, get-model. Literals are fixed-width #x hex (#b for
/// 1-bit); defined names substitute for their terms in later assertions.
std::string emit_smtlib(const TermStore& store, const Formula& formula);

enum class Verdict { Sat, Unsat, Unknown, Timeout };
const char* verdict_name(Verdict v);

struct SolveResult {
    Verdict verdict = Verdict::Unknown;
    std::map<std::string, uint64_t> model; // present iff Sat
    double solver_time = 0.0;
};

struct SolverConfig {
    std::string command;       // command template; {file} substituted or appended
    double timeout_sec = 60.0;
};

/// Resolves the solver command: RESMT_SOLVER_CMD, then z3 on PATH, then
/// the bundled node wrapper.
SolverConfig default_solver_config();

/// Writes the script to a temp file and runs the external solver; the
/// first sat/unsat/unknown token is the verdict, and the process is
/// killed at the timeout.
SolveResult solve(const std::string& script, const SolverConfig& config);

/// Extracts bit-vector constants from (get-model) output. Accepts #x, #b
/// and (_ bvN w) literal forms; non-bit-vector entries are ignored.
std::map<std::string, uint64_t> parse_model(const std::string& solver_output);

} // namespace resmt::smt
