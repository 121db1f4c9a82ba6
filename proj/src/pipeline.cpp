#include "resmt/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "resmt/errors.hpp"

namespace resmt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& contents)
{
    std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(Err::FileNotFound, "cannot write " + path);
    out << contents;
}

std::string hex32(uint32_t v)
{
    char buf[16];
    snprintf(buf, sizeof buf, "0x%08X", v);
    return buf;
}

} // namespace

RunReport analyze(const FunctionImage& image, uint32_t entry, const REQuery& query,
                  const PipelineOptions& options)
{
    auto t_total = Clock::now();
    RunReport report;

    smt::SolverConfig solver = options.solver;
    if (solver.command.empty()) {
        smt::SolverConfig def = smt::default_solver_config();
        solver.command = def.command;
    }

    smt::TermStore store;
    symex::Engine engine(store, options.layout);

    if (options.limits.fork_feasibility_check) {
        // Ask the solver whether the forked path condition is satisfiable
        // at all; UNSAT forks are dropped before exploration.
        smt::SolverConfig quick = solver;
        quick.timeout_sec = std::min(solver.timeout_sec, 5.0);
        engine.set_feasibility_hook([&store, &engine, quick](
                                        const symex::MachineState& state) {
            if (state.path_condition.empty())
                return true;
            smt::Formula f;
            f.decls = engine.initial_decls();
            f.decls.insert(f.decls.end(), state.decls.begin(), state.decls.end());
            for (const symex::Binding& b : state.trace)
                f.assertions.push_back(store.eq(b.var, b.value));
            for (smt::TermId cond : state.path_condition)
                f.assertions.push_back(cond);
            try {
                return smt::solve(smt::emit_smtlib(store, f), quick).verdict !=
                       smt::Verdict::Unsat;
            } catch (const Error&) {
                return true; // keep the path when the check itself fails
            }
        });
    }

    symex::RunStats stats;
    std::vector<symex::Path> paths =
        engine.run(image, entry, query, options.abi, options.limits, &stats);

    if (options.verbose) {
        for (size_t i = 0; i < paths.size(); ++i)
            fprintf(stderr, "path %zu: %s, %llu IL steps\n", i,
                    symex::path_status_name(paths[i].status),
                    static_cast<unsigned long long>(paths[i].il_executed));
    }

    report.paths_explored = uint32_t(paths.size());
    for (const symex::Path& p : paths)
        if (p.status == symex::PathStatus::Returned)
            ++report.paths_returned;

    if (!options.emit_il_dir.empty()) {
        for (size_t i = 0; i < paths.size(); ++i) {
            std::string text;
            for (const auto& block : paths[i].final_state.executed) {
                text += "; " + x86::to_string(block->source) + "\n";
                text += il::format_il(block->il);
            }
            write_file(options.emit_il_dir, "path_" + std::to_string(i) + ".il", text);
        }
    }

    // Emit and solve returned paths in exploration order; first SAT wins.
    // Chunked parallel solving keeps the ordering deterministic.
    double solving_seconds = 0;
    auto t_emit = Clock::now();

    struct Prepared {
        size_t path_index;
        std::string script;
        uint64_t assertion_count;
    };
    std::vector<Prepared> prepared;
    for (size_t i = 0; i < paths.size(); ++i) {
        PathReport pr;
        pr.status = paths[i].status;
        pr.il_executed = paths[i].il_executed;
        pr.note = paths[i].note;
        report.paths.push_back(std::move(pr));
        if (paths[i].status != symex::PathStatus::Returned)
            continue;
        smt::PathFormula pf = smt::assemble_formula(engine, paths[i], query);
        std::string script = smt::emit_smtlib(store, pf.formula);
        report.paths[i].assertion_count = pf.formula.assertions.size() + 1; // + goal
        if (!options.emit_smt_dir.empty())
            write_file(options.emit_smt_dir, "path_" + std::to_string(i) + ".smt2",
                       script);
        prepared.push_back(Prepared{i, std::move(script), 0});
    }
    double emit_seconds = seconds_since(t_emit);

    std::optional<size_t> sat_index;
    bool saw_timeout = false, saw_unknown = false;

    auto t_solve = Clock::now();
    unsigned lanes = options.parallel_solves == 0 ? 1 : options.parallel_solves;
    for (size_t base = 0; base < prepared.size() && !sat_index; base += lanes) {
        size_t count = std::min<size_t>(lanes, prepared.size() - base);
        std::vector<std::future<smt::SolveResult>> futures;
        for (size_t k = 0; k < count; ++k) {
            const std::string& script = prepared[base + k].script;
            futures.push_back(std::async(std::launch::async, [&solver, &script] {
                return smt::solve(script, solver);
            }));
        }
        for (size_t k = 0; k < count; ++k) {
            smt::SolveResult r = futures[k].get();
            size_t pi = prepared[base + k].path_index;
            report.paths[pi].verdict = r.verdict;
            report.paths[pi].solver_time = r.solver_time;
            if (r.verdict == smt::Verdict::Timeout)
                saw_timeout = true;
            if (r.verdict == smt::Verdict::Unknown)
                saw_unknown = true;
            if (r.verdict == smt::Verdict::Sat && !sat_index) {
                sat_index = pi;
                for (const std::string& name : query.input) {
                    auto it = r.model.find(name);
                    report.recovered_inputs[name] =
                        it == r.model.end() ? 0 : uint32_t(it->second);
                }
            }
        }
    }
    solving_seconds = seconds_since(t_solve);

    if (sat_index)
        report.verdict = smt::Verdict::Sat;
    else if (saw_timeout)
        report.verdict = smt::Verdict::Timeout;
    else if (saw_unknown || report.paths_returned == 0)
        report.verdict = smt::Verdict::Unknown;
    else
        report.verdict = smt::Verdict::Unsat;

    report.timings.extraction = options.load_seconds + stats.decode_seconds;
    report.timings.translation_emulation =
        stats.lift_seconds + stats.exec_seconds + emit_seconds;
    report.timings.solving = solving_seconds;
    report.timings.total = options.load_seconds + seconds_since(t_total);
    return report;
}

std::string report_to_json(const RunReport& report)
{
    nlohmann::json doc;
    doc["verdict"] = smt::verdict_name(report.verdict);
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [name, value] : report.recovered_inputs)
        inputs[name] = hex32(value);
    doc["recovered_inputs"] = inputs;
    doc["paths_explored"] = report.paths_explored;
    doc["paths_returned"] = report.paths_returned;
    doc["timings"] = {
        {"extraction", report.timings.extraction},
        {"translation_emulation", report.timings.translation_emulation},
        {"solving", report.timings.solving},
        {"total", report.timings.total},
    };
    nlohmann::json paths = nlohmann::json::array();
    for (const PathReport& p : report.paths) {
        nlohmann::json jp;
        jp["status"] = symex::path_status_name(p.status);
        jp["il_executed"] = p.il_executed;
        jp["assertions"] = p.assertion_count;
        if (p.verdict)
            jp["verdict"] = smt::verdict_name(*p.verdict);
        jp["solver_time"] = p.solver_time;
        if (!p.note.empty())
            jp["note"] = p.note;
        paths.push_back(std::move(jp));
    }
    doc["paths"] = paths;
    return doc.dump(2);
}

std::string render_report(const RunReport& report)
{
    std::ostringstream out;
    out << "verdict: " << smt::verdict_name(report.verdict) << "\n";
    for (const auto& [name, value] : report.recovered_inputs)
        out << "  " << name << " = " << hex32(value) << "\n";
    out << "paths: " << report.paths_explored << " explored, "
        << report.paths_returned << " returned\n";
    char buf[160];
    snprintf(buf, sizeof buf,
             "timings: extraction %.6fs, translation+emulation %.6fs, "
             "solving %.6fs, total %.6fs",
             report.timings.extraction, report.timings.translation_emulation,
             report.timings.solving, report.timings.total);
    out << buf << "\n";
    return out.str();
}

} // namespace resmt
