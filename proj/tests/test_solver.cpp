#include <doctest.h>

#include <future>

#include "resmt/emu.hpp"
#include "resmt/errors.hpp"
#include "resmt/smtlib.hpp"
#include "support/corpus.hpp"

using namespace resmt;
using namespace resmt::test;
using smt::SolverConfig;
using smt::TermStore;
using smt::Verdict;

namespace {

bool solver_available()
{
    return !smt::default_solver_config().command.empty();
}

REQuery make_query(std::vector<std::string> inputs, CmpOp op, uint32_t value)
{
    REQuery q;
    q.input = std::move(inputs);
    q.reg = il::Reg::Eax;
    q.op = op;
    q.value = value;
    return q;
}

std::string formula_for(TermStore& store, symex::Engine& engine,
                        const FunctionImage& img, uint32_t entry, const REQuery& q,
                        const Abi& abi)
{
    auto paths = engine.run(img, entry, q, abi, {});
    REQUIRE(!paths.empty());
    REQUIRE(paths[0].status == symex::PathStatus::Returned);
    smt::PathFormula pf = smt::assemble_formula(engine, paths[0], q);
    return smt::emit_smtlib(store, pf.formula);
}

} // namespace

TEST_CASE("parse_model literal forms")
{
    auto m = smt::parse_model("(model (define-fun KEY () (_ BitVec 32) #x00000003))");
    CHECK(m.at("KEY") == 3);

    m = smt::parse_model(
        "(define-fun flag () (_ BitVec 1) #b1)\n"
        "(define-fun wide () (_ BitVec 32) #b00000000000000000000000000000011)");
    CHECK(m.at("flag") == 1);
    CHECK(m.at("wide") == 3);

    m = smt::parse_model("((define-fun x () (_ BitVec 32) (_ bv77 32)))");
    CHECK(m.at("x") == 77);

    CHECK(smt::parse_model("sat\n()\n").empty());

    // Array entries are skipped, scalars still land.
    m = smt::parse_model(
        "(define-fun MEM () (Array (_ BitVec 32) (_ BitVec 8)) "
        "((as const (Array (_ BitVec 32) (_ BitVec 8))) #x00))\n"
        "(define-fun KEY () (_ BitVec 32) #x00000010)");
    CHECK(!m.count("MEM"));
    CHECK(m.at("KEY") == 0x10);
}

TEST_CASE("solve: key recovery on the check_key formula")
{
    if (!solver_available())
        return; // no solver in this environment

    TermStore store;
    symex::Engine engine(store);
    REQuery q = make_query({"KEY"}, CmpOp::Eq, 0);
    std::string script =
        formula_for(store, engine, check_key_image(), 0, q, Abi::stack());

    smt::SolveResult r = smt::solve(script, smt::default_solver_config());
    REQUIRE(r.verdict == Verdict::Sat);
    REQUIRE(r.model.count("KEY"));
    CHECK(r.model.at("KEY") == 3);
    CHECK(r.solver_time >= 0.0);
}

TEST_CASE("solve: constant-return program is UNSAT for eax == 0")
{
    if (!solver_available())
        return;

    TermStore store;
    symex::Engine engine(store);
    REQuery q = make_query({}, CmpOp::Eq, 0);
    std::string script = formula_for(store, engine, const5_image(), 0, q, Abi::stack());
    smt::SolveResult r = smt::solve(script, smt::default_solver_config());
    CHECK(r.verdict == Verdict::Unsat);
}

TEST_CASE("solve: running example admits any model summing to 8")
{
    if (!solver_available())
        return;

    TermStore store;
    symex::Engine engine(store);
    REQuery q = make_query({"c", "d"}, CmpOp::Eq, 8);
    std::string script =
        formula_for(store, engine, sum_image(), 0, q,
                    Abi::registers({il::Reg::Ecx, il::Reg::Edx}));
    smt::SolveResult r = smt::solve(script, smt::default_solver_config());
    REQUIRE(r.verdict == Verdict::Sat);
    uint32_t c = uint32_t(r.model.at("c"));
    uint32_t d = uint32_t(r.model.at("d"));
    CHECK(c + d == 8); // wrapping sum
}

TEST_CASE("solve: model substitution satisfies every assertion")
{
    if (!solver_available())
        return;

    TermStore store;
    symex::Engine engine(store);
    REQuery q = make_query({"KEY"}, CmpOp::Eq, 0);
    auto paths = engine.run(check_key_image(), 0, q, Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    smt::PathFormula pf = smt::assemble_formula(engine, paths[0], q);
    smt::SolveResult r =
        smt::solve(smt::emit_smtlib(store, pf.formula), smt::default_solver_config());
    REQUIRE(r.verdict == Verdict::Sat);

    smt::Env env;
    for (const auto& [name, value] : r.model)
        env.vars[store.intern(name)] = value;
    // Resolve definitional variables the model may omit.
    for (smt::TermId a : pf.formula.assertions) {
        const smt::Node& n = store.node(a);
        if (n.kind != smt::Kind::Op || n.op != smt::TOp::Eq)
            continue;
        const smt::Node& lhs = store.node(n.a);
        if (lhs.kind == smt::Kind::Var && !env.vars.count(lhs.name))
            env.vars[lhs.name] = store.eval(n.b, env);
    }
    for (smt::TermId a : pf.formula.assertions) {
        const smt::Node& n = store.node(a);
        if (n.kind == smt::Kind::Op && n.op == smt::TOp::Eq &&
            store.node(n.a).kind == smt::Kind::ArrayVar)
            continue;
        CHECK(store.eval(a, env) == 1);
    }
    CHECK(store.eval(pf.formula.goal, env) == 1);
}

TEST_CASE("solve: timeout and missing binary surface as designed")
{
    if (!solver_available())
        return;

    SolverConfig cfg = smt::default_solver_config();
    cfg.timeout_sec = 0.0005; // far below interpreter startup
    smt::SolveResult r = smt::solve("(check-sat)\n", cfg);
    CHECK(r.verdict == Verdict::Timeout);

    SolverConfig missing;
    missing.command = "definitely_not_a_solver_binary_xyz";
    CHECK_THROWS_AS(smt::solve("(check-sat)\n", missing), Error);
    try {
        smt::solve("(check-sat)\n", missing);
    } catch (const Error& e) {
        CHECK(e.code() == Err::SolverNotFound);
    }
}

TEST_CASE("solve: trivial script answers sat")
{
    if (!solver_available())
        return;
    smt::Formula empty;
    empty.goal = smt::kNoTerm;
    TermStore store;
    std::string script = smt::emit_smtlib(store, empty);
    smt::SolveResult r = smt::solve(script, smt::default_solver_config());
    CHECK(r.verdict == Verdict::Sat);
}

TEST_CASE("solve: garbage output raises a protocol error")
{
    SolverConfig junk;
    junk.command = "/bin/echo hello-world";
    CHECK_THROWS_AS(smt::solve("(check-sat)\n", junk), Error);
    try {
        smt::solve("(check-sat)\n", junk);
    } catch (const Error& e) {
        CHECK(e.code() == Err::SolverProtocolError);
    }
}

namespace {

// Small forward-branching programs: a straight-line prefix, then one to
// three compare+jump hops over short blocks, then ret.
std::vector<AsmIns> random_branchy(std::mt19937_64& rng)
{
    using x86::Gpr;
    using x86::Mn;
    std::vector<AsmIns> out;
    auto reg = [&]() {
        static const Gpr pool[] = {Gpr::Eax, Gpr::Ebx, Gpr::Ecx, Gpr::Edx};
        return pool[rng() % 4];
    };
    size_t hops = 1 + rng() % 3;
    for (size_t h = 0; h < hops; ++h) {
        out.push_back({ins(Mn::Cmp, {r32(Gpr::Ecx), imm32(uint32_t(rng() % 32))}), -1});
        size_t jcc_at = out.size();
        out.push_back({ins(x86::jcc_from_cc(uint8_t(rng() % 16)), {imm32(0)}), -1});
        size_t skip = 1 + rng() % 3;
        for (size_t k = 0; k < skip; ++k) {
            if (rng() % 2)
                out.push_back({ins(Mn::Add, {r32(reg()), imm32(uint32_t(rng()))}), -1});
            else
                out.push_back({ins(Mn::Xor, {r32(reg()), imm32(uint32_t(rng()))}), -1});
        }
        out[jcc_at].target_index = int(out.size());
        out.push_back({ins(Mn::Mov, {r32(reg()), imm32(uint32_t(rng()))}), -1});
    }
    out.push_back({ins(Mn::Ret), -1});
    return out;
}

} // namespace

TEST_CASE("concrete runs replay each returned path's model")
{
    if (!solver_available())
        return;
    std::mt19937_64 rng(31337);
    // Bind every register the generator touches, so the concrete replay
    // starts exactly from the model's initial state.
    Abi abi = Abi::registers({il::Reg::Ecx, il::Reg::Eax, il::Reg::Ebx, il::Reg::Edx});
    smt::SolverConfig solver = smt::default_solver_config();

    int models_checked = 0;
    int programs = 0;
    while (models_checked < 100 && programs < 80) {
        ++programs;
        auto prog = random_branchy(rng);
        FunctionImage img = assemble(prog);

        smt::TermStore store;
        symex::Engine engine(store);
        REQuery q = make_query({"c", "a0", "b0", "d0"}, CmpOp::Eq, 0);
        ExecLimits limits;
        auto paths = engine.run(img, img.base_addr, q, abi, limits);

        // Solve the bare path conditions (no goal) two at a time.
        std::vector<const symex::Path*> returned;
        std::vector<std::string> scripts;
        for (const symex::Path& p : paths) {
            if (p.status != symex::PathStatus::Returned)
                continue;
            smt::PathFormula pf = smt::assemble_formula(engine, p, q);
            pf.formula.goal = smt::kNoTerm;
            returned.push_back(&p);
            scripts.push_back(smt::emit_smtlib(store, pf.formula));
        }
        for (size_t base = 0; base < returned.size(); base += 2) {
            size_t count = std::min<size_t>(2, returned.size() - base);
            std::vector<std::future<smt::SolveResult>> futs;
            for (size_t k = 0; k < count; ++k) {
                const std::string& script = scripts[base + k];
                futs.push_back(std::async(std::launch::async, [&script, &solver] {
                    return smt::solve(script, solver);
                }));
            }
            for (size_t k = 0; k < count; ++k) {
                smt::SolveResult r = futs[k].get();
                const symex::Path& p = *returned[base + k];
                // Contradictory compare chains make some explored paths
                // infeasible; the agreement property is vacuous for those.
                if (r.verdict == Verdict::Unsat)
                    continue;
                REQUIRE(r.verdict == Verdict::Sat);

                smt::Env env;
                for (const auto& [name, value] : r.model)
                    env.vars[store.intern(name)] = value;
                uint64_t sym_eax = store.eval(p.return_value, env);

                auto model_of = [&](const char* name) {
                    auto it = r.model.find(name);
                    return it == r.model.end() ? 0u : uint32_t(it->second);
                };
                std::vector<uint32_t> args = {model_of("c"), model_of("a0"),
                                              model_of("b0"), model_of("d0")};
                auto res = emu::run_concrete(img, img.base_addr, args, abi, limits);
                REQUIRE(res.status == emu::RunStatus::Returned);
                CHECK(res.eax == uint32_t(sym_eax));
                // Same branch outcomes imply the same IL step count.
                CHECK(res.steps == p.il_executed);
                ++models_checked;
            }
        }
    }
    CHECK(models_checked >= 100);
}
