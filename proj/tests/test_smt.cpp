#include <doctest.h>

#include <functional>
#include <random>

#include "resmt/smtlib.hpp"
#include "support/corpus.hpp"

using namespace resmt;
using namespace resmt::test;
using smt::TermId;
using smt::TermStore;
using smt::TOp;

namespace {

REQuery eax_eq(uint32_t v, std::vector<std::string> inputs = {})
{
    REQuery q;
    q.input = std::move(inputs);
    q.reg = il::Reg::Eax;
    q.op = CmpOp::Eq;
    q.value = v;
    return q;
}

} // namespace

TEST_CASE("terms are hash-consed and folded")
{
    TermStore store;
    TermId x = store.var("x", 32);
    TermId y = store.var("y", 32);

    CHECK(store.var("x", 32) == x);
    CHECK(store.op2(TOp::Add, x, y) == store.op2(TOp::Add, x, y));
    // commutative canonicalization: const moves right
    CHECK(store.op2(TOp::Add, store.constant(32, 4), x) ==
          store.op2(TOp::Add, x, store.constant(32, 4)));

    // constant folding
    TermId sum = store.op2(TOp::Add, store.constant(32, 0xFFFFFFFF),
                           store.constant(32, 2));
    REQUIRE(store.is_const(sum));
    CHECK(store.const_value(sum) == 1); // wraps

    // identities
    CHECK(store.op2(TOp::Add, x, store.constant(32, 0)) == x);
    CHECK(store.op2(TOp::Xor, x, x) == store.constant(32, 0));
    CHECK(store.op2(TOp::And, x, store.constant(32, 0xFFFFFFFF)) == x);
    CHECK(store.op_not(store.op_not(x)) == x);

    // constant chains collapse
    TermId chain = store.op2(TOp::Add, store.op2(TOp::Add, x, store.constant(32, 8)),
                             store.constant(32, 0xFFFFFFF8));
    CHECK(chain == x);
}

TEST_CASE("construction-order fuzzing yields identical ids")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        TermStore a, b;
        // Build the same expression with different intermediate orderings.
        TermId ax = a.var("x", 32), ay = a.var("y", 32);
        TermId bx = b.var("x", 32), by = b.var("y", 32);
        (void)b.op2(TOp::Mul, by, bx); // extra unrelated term first
        uint32_t c = uint32_t(rng());
        TermId left = a.op2(TOp::Xor, a.op2(TOp::Add, ax, a.constant(32, c)), ay);
        TermId right = b.op2(TOp::Xor, b.op2(TOp::Add, bx, b.constant(32, c)), by);
        // Ids differ across stores, but structure must match within one.
        TermId again = a.op2(TOp::Xor, a.op2(TOp::Add, ax, a.constant(32, c)), ay);
        CHECK(left == again);
        CHECK(a.width(left) == b.width(right));
    }
}

TEST_CASE("evaluator agrees with folding")
{
    std::mt19937_64 rng(6);
    static const TOp ops[] = {TOp::Add, TOp::Sub, TOp::Mul, TOp::Udiv, TOp::Urem,
                              TOp::Shl, TOp::Lshr, TOp::And, TOp::Or, TOp::Xor};
    for (int trial = 0; trial < 500; ++trial) {
        TermStore store;
        smt::Env env;
        env.vars[store.node(store.var("a", 32)).name] = uint32_t(rng());
        env.vars[store.node(store.var("b", 32)).name] = uint32_t(rng());

        // Random DAG over {a, b, constants}.
        std::vector<TermId> terms = {store.var("a", 32), store.var("b", 32),
                                     store.constant(32, uint32_t(rng() % 64))};
        for (int i = 0; i < 12; ++i) {
            TermId lhs = terms[rng() % terms.size()];
            TermId rhs = terms[rng() % terms.size()];
            terms.push_back(store.op2(ops[rng() % 10], lhs, rhs));
        }
        TermId top = terms.back();

        // Reference evaluation computed bottom-up by hand.
        std::unordered_map<TermId, uint64_t> val;
        std::function<uint64_t(TermId)> slow = [&](TermId t) -> uint64_t {
            const smt::Node& n = store.node(t);
            switch (n.kind) {
                case smt::Kind::Const: return n.value;
                case smt::Kind::Var: return env.vars.at(n.name);
                case smt::Kind::Op: {
                    uint64_t a = slow(n.a) & 0xFFFFFFFF;
                    uint64_t b = n.op == TOp::Not ? 0 : (slow(n.b) & 0xFFFFFFFF);
                    switch (n.op) {
                        case TOp::Add: return uint32_t(a + b);
                        case TOp::Sub: return uint32_t(a - b);
                        case TOp::Mul: return uint32_t(a * b);
                        case TOp::Udiv: return b ? uint32_t(a / b) : 0xFFFFFFFF;
                        case TOp::Urem: return b ? uint32_t(a % b) : uint32_t(a);
                        case TOp::Shl: return b >= 32 ? 0 : uint32_t(a << b);
                        case TOp::Lshr: return b >= 32 ? 0 : uint32_t(a >> b);
                        case TOp::And: return uint32_t(a & b);
                        case TOp::Or: return uint32_t(a | b);
                        case TOp::Xor: return uint32_t(a ^ b);
                        case TOp::Not: return uint32_t(~a);
                        case TOp::Eq: return a == b;
                        case TOp::Ult: return a < b;
                    }
                    return 0;
                }
                default: return 0;
            }
        };
        CHECK(store.eval(top, env) == slow(top));
    }
}

TEST_CASE("bind_outputs covers every GPR plus EIP")
{
    TermStore store;
    symex::Engine engine(store);
    auto paths = engine.run(make_image(parse_hex("C3"), 0), 0, eax_eq(0), Abi::stack(), {});
    REQUIRE(paths.size() == 1);

    std::vector<TermId> decls, asserts;
    auto outputs = smt::bind_outputs(store, paths[0], decls, asserts);
    CHECK(outputs.size() == 9);
    CHECK(decls.size() == 9);
    CHECK(asserts.size() == 9);

    smt::Formula f;
    f.decls = engine.initial_decls();
    f.decls.insert(f.decls.end(), paths[0].final_state.decls.begin(),
                   paths[0].final_state.decls.end());
    f.decls.insert(f.decls.end(), decls.begin(), decls.end());
    for (const symex::Binding& b : paths[0].final_state.trace)
        f.assertions.push_back(store.eq(b.var, b.value));
    f.assertions.insert(f.assertions.end(), asserts.begin(), asserts.end());
    std::string text = smt::emit_smtlib(store, f);

    // Untouched registers bind to their initial variables. ESP starts at
    // the concrete stack base, so ESP + 4 folds to a literal.
    CHECK(text.find("(assert (= EBX_output EBX))") != std::string::npos);
    CHECK(text.find("(assert (= ECX_output ECX))") != std::string::npos);
    CHECK(text.find("(assert (= esp_step1 #x7fff0004))") != std::string::npos);
    CHECK(text.find("(assert (= ESP_output #x7fff0004))") != std::string::npos);
    TermId esp_final = paths[0].final_state.regs[size_t(il::Reg::Esp)];
    REQUIRE(store.is_const(esp_final));
    CHECK(store.const_value(esp_final) == 0x7FFF0000u + 4);
}

TEST_CASE("assembled check_key formula has the documented shape")
{
    TermStore store;
    symex::Engine engine(store);
    auto paths =
        engine.run(check_key_image(), 0, eax_eq(0, {"KEY"}), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    smt::PathFormula pf = smt::assemble_formula(engine, paths[0], eax_eq(0, {"KEY"}));
    std::string text = smt::emit_smtlib(store, pf.formula);

    CHECK(text.rfind("(set-logic QF_ABV)", 0) == 0);
    CHECK(text.find("(declare-fun KEY () (_ BitVec 32))") != std::string::npos);
    CHECK(text.find("(declare-fun MEM () (Array (_ BitVec 32) (_ BitVec 8)))") !=
          std::string::npos);
    CHECK(text.find("(declare-fun EAX_output () (_ BitVec 32))") != std::string::npos);
    // The return value folds to KEY - 3 and the goal compares with 0.
    CHECK(text.find("(bvsub KEY #x00000003)") != std::string::npos);
    CHECK(text.find("(assert (= EAX_output #x00000000))") != std::string::npos);
    CHECK(text.find("(check-sat)") != std::string::npos);
    CHECK(text.find("(get-model)") != std::string::npos);

    // Declarations precede assertions; check-sat comes last.
    CHECK(text.find("(declare-fun") < text.find("(assert"));
    CHECK(text.find("(check-sat)") < text.find("(get-model)"));
}

TEST_CASE("sequential register writes emit both step definitions")
{
    FunctionImage img = assemble({
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Esi), imm32(0x48)}), -1},
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Esi), imm32(0x2007)}), -1},
        {ins(x86::Mn::Ret), -1},
    });
    TermStore store;
    symex::Engine engine(store);
    auto paths = engine.run(img, img.base_addr, eax_eq(0), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    smt::PathFormula pf = smt::assemble_formula(engine, paths[0], eax_eq(0));
    std::string text = smt::emit_smtlib(store, pf.formula);

    CHECK(text.find("(declare-fun esi_step1 () (_ BitVec 32))") != std::string::npos);
    CHECK(text.find("(declare-fun esi_step2 () (_ BitVec 32))") != std::string::npos);
    CHECK(text.find("(assert (= esi_step1 #x00000048))") != std::string::npos);
    CHECK(text.find("(assert (= esi_step2 #x00002007))") != std::string::npos);
    CHECK(text.find("(assert (= ESI_output #x00002007))") != std::string::npos);
}

TEST_CASE("model soundness: substituting the model satisfies the assertions")
{
    // Uses the concrete evaluator only; no solver needed. Pin the inputs
    // to chosen values by evaluating with them and checking that every
    // definitional and output assertion holds.
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        auto prog = random_straight_line(rng, 12);
        FunctionImage img = assemble(prog);

        TermStore store;
        symex::Engine engine(store);
        REQuery q = eax_eq(0, {"c", "d"});
        auto paths = engine.run(img, img.base_addr, q,
                                Abi::registers({il::Reg::Ecx, il::Reg::Edx}), {});
        REQUIRE(paths.size() == 1);
        REQUIRE(paths[0].status == symex::PathStatus::Returned);
        smt::PathFormula pf = smt::assemble_formula(engine, paths[0], q);

        smt::Env env;
        env.vars[store.intern("c")] = uint32_t(rng());
        env.vars[store.intern("d")] = uint32_t(rng());
        // Unbound variables (initial registers, outputs) read back from
        // their defining assertions; resolve them forward.
        for (TermId a : pf.formula.assertions) {
            const smt::Node& n = store.node(a);
            if (n.kind != smt::Kind::Op || n.op != TOp::Eq)
                continue;
            const smt::Node& lhs = store.node(n.a);
            if (lhs.kind == smt::Kind::Var && !env.vars.count(lhs.name))
                env.vars[lhs.name] = store.eval(n.b, env);
        }
        for (TermId a : pf.formula.assertions) {
            const smt::Node& n = store.node(a);
            if (n.kind == smt::Kind::Op && n.op == TOp::Eq &&
                store.node(n.a).kind == smt::Kind::ArrayVar)
                continue; // array versions have no scalar value
            CAPTURE(trial);
            CHECK(store.eval(a, env) == 1);
        }
    }
}

TEST_CASE("emission handles 1-bit literals and conditions")
{
    TermStore store;
    TermId f = store.var("flag", 1);
    smt::Formula formula;
    formula.decls = {f};
    formula.assertions = {f};
    formula.goal = store.op_not(store.eq(f, store.constant(1, 0)));
    std::string text = smt::emit_smtlib(store, formula);
    CHECK(text.find("(declare-fun flag () (_ BitVec 1))") != std::string::npos);
    CHECK(text.find("(assert (= flag #b1))") != std::string::npos);
    CHECK(text.find("(assert (not (= flag #b0)))") != std::string::npos);
}
