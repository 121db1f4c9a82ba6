// resmt: lift an x86-32 function to IL, symbolically execute it, and ask
// an SMT solver which input meets the query's output condition.
//
//   resmt <binary> <offset> <size> <query.json> [flags]
//   resmt oracle <binary> <offset> <size> [--args ...]
//   resmt obfuscate <binary> <offset> <size> <output> [--iterations ...]

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "resmt/emu.hpp"
#include "resmt/errors.hpp"
#include "resmt/obfuscator.hpp"
#include "resmt/pipeline.hpp"

using namespace resmt;

namespace {

uint64_t parse_u64(const std::string& text, const char* what)
{
    try {
        size_t pos = 0;
        int base = text.rfind("0x", 0) == 0 || text.rfind("0X", 0) == 0 ? 16 : 10;
        uint64_t v = std::stoull(text, &pos, base);
        if (pos != text.size())
            fail(Err::UsageError, std::string("bad ") + what + ": '" + text + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(Err::UsageError, std::string("bad ") + what + ": '" + text + "'");
    }
}

Abi parse_abi(const std::string& text)
{
    if (text == "stack")
        return Abi::stack();
    if (text.rfind("regs:", 0) == 0) {
        static const std::pair<const char*, il::Reg> names[] = {
            {"eax", il::Reg::Eax}, {"ebx", il::Reg::Ebx}, {"ecx", il::Reg::Ecx},
            {"edx", il::Reg::Edx}, {"esi", il::Reg::Esi}, {"edi", il::Reg::Edi},
            {"ebp", il::Reg::Ebp}, {"esp", il::Reg::Esp},
        };
        std::vector<il::Reg> regs;
        std::istringstream in(text.substr(5));
        std::string tok;
        while (std::getline(in, tok, ',')) {
            bool ok = false;
            for (const auto& [name, reg] : names) {
                if (tok == name) {
                    regs.push_back(reg);
                    ok = true;
                }
            }
            if (!ok)
                fail(Err::UsageError, "unknown register '" + tok + "' in --abi");
        }
        if (regs.empty())
            fail(Err::UsageError, "--abi regs: needs at least one register");
        return Abi::registers(std::move(regs));
    }
    fail(Err::UsageError, "--abi must be 'stack' or 'regs:<r1,r2,...>'");
}

std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(Err::FileNotFound, path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

struct CommonArgs {
    std::string binary, offset, size;
    std::string base_addr;
    std::string entry_override;
    FunctionImage load_image(double* load_seconds = nullptr) const
    {
        auto t0 = std::chrono::steady_clock::now();
        uint64_t off = parse_u64(offset, "offset");
        uint64_t sz = parse_u64(size, "size");
        FunctionImage image =
            base_addr.empty()
                ? load(binary, off, sz)
                : load(binary, off, sz, uint32_t(parse_u64(base_addr, "base address")));
        if (load_seconds)
            *load_seconds +=
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
        return image;
    }
    uint32_t entry() const
    {
        if (!entry_override.empty())
            return uint32_t(parse_u64(entry_override, "entry"));
        return base_addr.empty() ? uint32_t(parse_u64(offset, "offset"))
                                 : uint32_t(parse_u64(base_addr, "base address"));
    }
};

int run_main_command(const CommonArgs& common, const std::string& query_path,
                     const std::string& abi_text, const std::string& solver_cmd,
                     double timeout, uint64_t max_steps, uint32_t max_paths,
                     const std::string& emit_smt, const std::string& emit_il,
                     bool json_out, bool verbose, unsigned parallel, bool fork_check)
{
    PipelineOptions options;
    options.abi = parse_abi(abi_text);
    options.limits.max_steps = max_steps;
    options.limits.max_paths = max_paths;
    options.limits.fork_feasibility_check = fork_check;
    options.solver.command = solver_cmd;
    options.solver.timeout_sec = timeout;
    options.emit_smt_dir = emit_smt;
    options.emit_il_dir = emit_il;
    options.verbose = verbose;
    options.parallel_solves = parallel;

    FunctionImage image = common.load_image(&options.load_seconds);
    REQuery query = parse_query(read_text_file(query_path));

    RunReport report = analyze(image, common.entry(), query, options);

    if (json_out)
        std::cout << report_to_json(report) << "\n";
    else
        std::cout << render_report(report);

    switch (report.verdict) {
        case smt::Verdict::Sat: return 0;
        case smt::Verdict::Unsat: return 1;
        case smt::Verdict::Unknown:
        case smt::Verdict::Timeout: return 2;
    }
    return 3;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"SMT-based key recovery for x86-32 function images"};
    app.require_subcommand(0, 1);

    // Main invocation: binary, offset, size, query.
    CommonArgs main_args;
    std::string query_path;
    std::string abi_text = "stack";
    std::string solver_cmd;
    std::string emit_smt, emit_il;
    double timeout = 60.0;
    uint64_t max_steps = 100000;
    uint32_t max_paths = 64;
    bool json_out = false, verbose = false, fork_check = false;
    unsigned parallel = 1;

    app.add_option("binary", main_args.binary, "path to the flat binary file");
    app.add_option("offset", main_args.offset, "file offset of the function");
    app.add_option("size", main_args.size, "function size in bytes");
    app.add_option("query", query_path, "path to the JSON query");
    app.add_option("--base-addr", main_args.base_addr,
                   "virtual address of the function (defaults to the offset)");
    app.add_option("--entry", main_args.entry_override,
                   "execution entry address (defaults to the base address)");
    app.add_option("--abi", abi_text, "stack | regs:<r1,r2,...>");
    app.add_option("--solver-cmd", solver_cmd,
                   "solver command template ({file} substituted or appended)");
    app.add_option("--timeout", timeout, "per-path solver timeout in seconds");
    app.add_option("--max-steps", max_steps, "IL step budget per path");
    app.add_option("--max-paths", max_paths, "retained path budget");
    app.add_option("--emit-smt", emit_smt, "write one .smt2 file per solved path");
    app.add_option("--emit-il", emit_il, "write the executed IL per path");
    app.add_flag("--json", json_out, "machine-readable report on stdout");
    app.add_flag("--verbose", verbose, "chatty progress output");
    app.add_option("--parallel-solves", parallel, "solver processes to run at once");
    app.add_flag("--fork-check", fork_check,
                 "prune infeasible forks with a quick solver call");

    // oracle: concrete runs and brute force.
    auto* oracle = app.add_subcommand("oracle", "run the concrete emulator");
    CommonArgs oracle_args;
    std::string oracle_abi = "stack";
    std::vector<std::string> arg_values;
    std::string brute_query;
    unsigned key_bits = 8;
    uint64_t oracle_steps = 100000;
    oracle->add_option("binary", oracle_args.binary)->required();
    oracle->add_option("offset", oracle_args.offset)->required();
    oracle->add_option("size", oracle_args.size)->required();
    oracle->add_option("--base-addr", oracle_args.base_addr);
    oracle->add_option("--entry", oracle_args.entry_override);
    oracle->add_option("--abi", oracle_abi);
    oracle->add_option("--args", arg_values)->delimiter(',');
    oracle->add_option("--brute-query", brute_query,
                       "JSON query; scan keys instead of one run");
    oracle->add_option("--key-bits", key_bits, "brute-force key width (<= 32)");
    oracle->add_option("--max-steps", oracle_steps);

    // obfuscate: generate a transformed variant.
    auto* obfc = app.add_subcommand("obfuscate", "emit an obfuscated variant");
    CommonArgs obf_args;
    std::string obf_out;
    uint32_t iterations = 1;
    std::string techniques = "all";
    uint64_t seed = 0;
    obfc->add_option("binary", obf_args.binary)->required();
    obfc->add_option("offset", obf_args.offset)->required();
    obfc->add_option("size", obf_args.size)->required();
    obfc->add_option("output", obf_out, "output path (sidecar <output>.json)")->required();
    obfc->add_option("--base-addr", obf_args.base_addr);
    obfc->add_option("--iterations", iterations);
    obfc->add_option("--techniques", techniques,
                     "all | comma list of jump,mutate,dead,pair,junk");
    obfc->add_option("--seed", seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (oracle->parsed()) {
            FunctionImage image = oracle_args.load_image();
            Abi abi = parse_abi(oracle_abi);
            ExecLimits limits;
            limits.max_steps = oracle_steps;
            if (!brute_query.empty()) {
                REQuery q = parse_query(read_text_file(brute_query));
                auto hit = emu::brute_force(image, oracle_args.entry(), abi, q, key_bits);
                if (hit) {
                    printf("found: 0x%08X\n", *hit);
                    return 0;
                }
                printf("none\n");
                return 1;
            }
            std::vector<uint32_t> args;
            for (const std::string& a : arg_values)
                args.push_back(uint32_t(parse_u64(a, "argument")));
            emu::RunResult r =
                emu::run_concrete(image, oracle_args.entry(), args, abi, limits);
            printf("status: %s\neax: 0x%08X\nsteps: %llu\n",
                   emu::run_status_name(r.status), r.eax,
                   static_cast<unsigned long long>(r.steps));
            return r.status == emu::RunStatus::Returned ? 0 : 2;
        }

        if (obfc->parsed()) {
            FunctionImage image = obf_args.load_image();
            obf::ObfConfig config;
            config.iterations = iterations;
            config.seed = seed;
            if (techniques == "all") {
                config.techniques = obf::ObfConfig::all();
            } else {
                std::istringstream in(techniques);
                std::string tok;
                while (std::getline(in, tok, ',')) {
                    if (tok == "jump")
                        config.techniques.push_back(obf::Technique::JumpInsertion);
                    else if (tok == "mutate")
                        config.techniques.push_back(obf::Technique::OpcodeMutation);
                    else if (tok == "dead")
                        config.techniques.push_back(obf::Technique::DeadCode);
                    else if (tok == "pair")
                        config.techniques.push_back(obf::Technique::OppositeJumpPair);
                    else if (tok == "junk")
                        config.techniques.push_back(obf::Technique::JunkInsertion);
                    else
                        fail(Err::UsageError, "unknown technique '" + tok + "'");
                }
            }
            obf::ObfResult result = obf::obfuscate(image, obf_args.entry(), config);

            std::ofstream out(obf_out, std::ios::binary);
            if (!out)
                fail(Err::FileNotFound, "cannot write " + obf_out);
            out.write(reinterpret_cast<const char*>(result.image.bytes.data()),
                      std::streamsize(result.image.bytes.size()));
            nlohmann::json sidecar;
            sidecar["entry"] = result.entry;
            sidecar["size"] = result.image.size();
            std::ofstream side(obf_out + ".json");
            side << sidecar.dump(2) << "\n";
            printf("wrote %u bytes, entry 0x%08X\n", result.image.size(), result.entry);
            return 0;
        }

        // Main pipeline: all four positionals are required.
        if (main_args.binary.empty() || main_args.offset.empty() ||
            main_args.size.empty() || query_path.empty()) {
            std::cerr << app.help() << "\n";
            return 3;
        }
        return run_main_command(main_args, query_path, abi_text, solver_cmd, timeout,
                                max_steps, max_paths, emit_smt, emit_il, json_out,
                                verbose, parallel, fork_check);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
