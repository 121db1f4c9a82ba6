#include <doctest.h>

#include <set>

#include "resmt/emu.hpp"
#include "resmt/errors.hpp"
#include "resmt/symex.hpp"
#include "support/corpus.hpp"

using namespace resmt;
using namespace resmt::test;
using smt::Kind;
using smt::TermId;
using symex::Engine;
using symex::MachineState;
using symex::PathStatus;

namespace {

REQuery with_inputs(std::vector<std::string> names)
{
    REQuery q;
    q.input = std::move(names);
    q.reg = il::Reg::Eax;
    q.op = CmpOp::Eq;
    q.value = 0;
    return q;
}

} // namespace

TEST_CASE("init_state lays out the stack frame")
{
    smt::TermStore store;
    Engine engine(store);
    MachineState s = engine.init_state(with_inputs({"KEY"}), Abi::stack(), 0);

    // ESP concrete at the stack base; EIP at the entry.
    TermId esp = s.regs[size_t(il::Reg::Esp)];
    REQUIRE(store.is_const(esp));
    CHECK(store.const_value(esp) == 0x7FFF0000);

    // The sentinel dword folds back out of memory, little-endian.
    TermId b0 = store.select(s.mem, store.constant(32, 0x7FFF0000));
    REQUIRE(store.is_const(b0));
    CHECK(store.const_value(b0) == 0xE0);
    TermId b3 = store.select(s.mem, store.constant(32, 0x7FFF0003));
    CHECK(store.const_value(b3) == 0xDE);

    // The argument slot holds the symbolic KEY: byte 0 is extract(7,0).
    TermId k0 = store.select(s.mem, store.constant(32, 0x7FFF0004));
    CHECK(store.node(k0).kind == Kind::Extract);

    // Flags are fresh one-bit variables.
    TermId cf = s.regs[size_t(il::Reg::Cf)];
    CHECK(store.node(cf).kind == Kind::Var);
    CHECK(store.width(cf) == 1);
}

TEST_CASE("init_state rejections")
{
    smt::TermStore store;
    Engine engine(store);
    CHECK_THROWS_AS(engine.init_state(with_inputs({"c", "d", "e"}),
                                      Abi::registers({il::Reg::Ecx, il::Reg::Edx}), 0),
                    Error);
    CHECK_THROWS_AS(engine.init_state(with_inputs({"EAX"}), Abi::stack(), 0), Error);
    CHECK_THROWS_AS(engine.init_state(with_inputs({"MEM"}), Abi::stack(), 0), Error);
}

TEST_CASE("register writes allocate per-register step variables")
{
    // mov esi, 0x48; mov esi, 0x2007; ret
    FunctionImage img = assemble({
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Esi), imm32(0x48)}), -1},
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Esi), imm32(0x2007)}), -1},
        {ins(x86::Mn::Ret), -1},
    });
    smt::TermStore store;
    Engine engine(store);
    auto paths = engine.run(img, img.base_addr, with_inputs({}), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    REQUIRE(paths[0].status == PathStatus::Returned);

    std::vector<std::string> esi_vars;
    for (const symex::Binding& b : paths[0].final_state.trace) {
        const smt::Node& n = store.node(b.var);
        std::string name = store.name_text(n.name);
        if (name.rfind("esi_step", 0) == 0) {
            esi_vars.push_back(name);
            CHECK(store.is_const(b.value));
        }
    }
    REQUIRE(esi_vars.size() == 2);
    CHECK(esi_vars[0] == "esi_step1");
    CHECK(esi_vars[1] == "esi_step2");
}

TEST_CASE("step_il: STR propagates the source term")
{
    smt::TermStore store;
    Engine engine(store);
    MachineState s = engine.init_state(with_inputs({}), Abi::stack(), 0);
    TermId ecx_before = s.regs[size_t(il::Reg::Ecx)];

    il::Instruction str{il::Op::Str, il::Operand::of_reg(il::Reg::Ecx),
                        il::Operand::none(), il::Operand::of_reg(il::Reg::Eax),
                        {0, 0}};
    auto eff = engine.step_il(std::move(s), str);
    REQUIRE(eff.kind == symex::StepEffect::Kind::Continue);
    CHECK(eff.state.regs[size_t(il::Reg::Eax)] == ecx_before);
    // The new step variable is constrained equal to ECX's term.
    REQUIRE(!eff.state.trace.empty());
    CHECK(eff.state.trace.back().value == ecx_before);
    CHECK(store.name_text(store.node(eff.state.trace.back().var).name) == "eax_step1");
}

TEST_CASE("step_il: concrete JCC is an unconditional continue")
{
    smt::TermStore store;
    Engine engine(store);
    MachineState s = engine.init_state(with_inputs({}), Abi::stack(), 0x100);
    il::Instruction jcc{il::Op::Jcc, il::Operand::of_const(1, 1), il::Operand::none(),
                        il::Operand::of_const(0x140, 32), {0x100, 0}};
    auto eff = engine.step_il(std::move(s), jcc);
    CHECK(eff.kind == symex::StepEffect::Kind::Continue);
    CHECK(eff.jumped);
    CHECK(store.const_value(eff.state.eip()) == 0x140);

    // Condition 0 falls through without touching eip.
    MachineState s2 = engine.init_state(with_inputs({}), Abi::stack(), 0x100);
    il::Instruction never{il::Op::Jcc, il::Operand::of_const(0, 1), il::Operand::none(),
                          il::Operand::of_const(0x140, 32), {0x100, 0}};
    auto eff2 = engine.step_il(std::move(s2), never);
    CHECK(eff2.kind == symex::StepEffect::Kind::Continue);
    CHECK(!eff2.jumped);
    CHECK(store.const_value(eff2.state.eip()) == 0x100);
}

TEST_CASE("step counter advances once per IL instruction")
{
    smt::TermStore store;
    Engine engine(store);
    MachineState s = engine.init_state(with_inputs({}), Abi::stack(), 0);
    il::Instruction nop{il::Op::Nop, {}, {}, {}, {0, 0}};
    auto e1 = engine.step_il(std::move(s), nop);
    CHECK(e1.state.step == 1);
    auto e2 = engine.step_il(std::move(e1.state), nop);
    CHECK(e2.state.step == 2);
}

TEST_CASE("check_key: one returned path computing KEY - 3")
{
    smt::TermStore store;
    Engine engine(store);
    auto paths = engine.run(check_key_image(), 0, with_inputs({"KEY"}), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].status == PathStatus::Returned);

    // After folding, the return value is literally sub(KEY, 3).
    const smt::Node& n = store.node(paths[0].return_value);
    REQUIRE(n.kind == Kind::Op);
    CHECK(n.op == smt::TOp::Sub);
    CHECK(store.node(n.a).kind == Kind::Var);
    CHECK(store.name_text(store.node(n.a).name) == "KEY");
    REQUIRE(store.is_const(n.b));
    CHECK(store.const_value(n.b) == 3);
}

TEST_CASE("lone ret: one path, three IL steps")
{
    smt::TermStore store;
    Engine engine(store);
    auto paths =
        engine.run(make_image(parse_hex("C3"), 0), 0, with_inputs({}), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].status == PathStatus::Returned);
    CHECK(paths[0].il_executed == 3);
}

TEST_CASE("symbolic branch forks into complementary paths")
{
    // cmp ecx, 5; jz L; mov eax, 1; ret; L: mov eax, 2; ret
    FunctionImage img = assemble({
        {ins(x86::Mn::Cmp, {r32(x86::Gpr::Ecx), imm32(5)}), -1},
        {ins(x86::Mn::Je, {imm32(0)}), 4},
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Eax), imm32(1)}), -1},
        {ins(x86::Mn::Ret), -1},
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Eax), imm32(2)}), -1},
        {ins(x86::Mn::Ret), -1},
    });

    // Concrete oracle for both sides first.
    ExecLimits limits;
    uint32_t five = 5, six = 6;
    CHECK(emu::run_concrete(img, img.base_addr, std::span(&five, 1),
                            Abi::registers({il::Reg::Ecx}), limits)
              .eax == 2);
    CHECK(emu::run_concrete(img, img.base_addr, std::span(&six, 1),
                            Abi::registers({il::Reg::Ecx}), limits)
              .eax == 1);

    smt::TermStore store;
    Engine engine(store);
    auto paths = engine.run(img, img.base_addr, with_inputs({"c"}),
                            Abi::registers({il::Reg::Ecx}), limits);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].status == PathStatus::Returned);
    CHECK(paths[1].status == PathStatus::Returned);

    // Taken side explored first (eax == 2), then the fallthrough.
    CHECK(store.const_value(paths[0].return_value) == 2);
    CHECK(store.const_value(paths[1].return_value) == 1);

    REQUIRE(paths[0].final_state.path_condition.size() == 1);
    REQUIRE(paths[1].final_state.path_condition.size() == 1);
    TermId taken = paths[0].final_state.path_condition[0];
    TermId fall = paths[1].final_state.path_condition[0];
    CHECK(store.op_not(taken) == fall);
}

TEST_CASE("path limit marks the excess as dropped")
{
    // A ladder of forks on unconstrained flags.
    std::vector<AsmIns> prog;
    for (int i = 0; i < 4; ++i)
        prog.push_back({ins(x86::Mn::Je, {imm32(0)}), i + 1});
    prog.push_back({ins(x86::Mn::Ret), -1});
    FunctionImage img = assemble(prog);

    smt::TermStore store;
    Engine engine(store);
    ExecLimits limits;
    limits.max_paths = 3;
    auto paths = engine.run(img, img.base_addr, with_inputs({}), Abi::stack(), limits);
    int returned = 0, dropped = 0;
    for (auto& p : paths) {
        if (p.status == PathStatus::Returned)
            ++returned;
        if (p.status == PathStatus::PathLimitDropped)
            ++dropped;
    }
    CHECK(returned == 3);
    CHECK(dropped >= 1);
}

TEST_CASE("step limit terminates loops")
{
    FunctionImage img = make_image(parse_hex("EB FE"), 0);
    smt::TermStore store;
    Engine engine(store);
    ExecLimits limits;
    limits.max_steps = 100;
    auto paths = engine.run(img, 0, with_inputs({}), Abi::stack(), limits);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].status == PathStatus::StepLimit);
}

TEST_CASE("decode failure is recorded, not thrown")
{
    FunctionImage img = make_image(parse_hex("F4"), 0); // hlt
    smt::TermStore store;
    Engine engine(store);
    auto paths = engine.run(img, 0, with_inputs({}), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].status == PathStatus::DecodeFailure);
    CHECK(!paths[0].note.empty());
}

TEST_CASE("symbolic jump target terminates the path with a report")
{
    // jmp [eax] is outside the decoder subset, so build the IL directly:
    // a JCC whose target is an unconstrained register copy.
    smt::TermStore store;
    Engine engine(store);
    MachineState s = engine.init_state(with_inputs({}), Abi::stack(), 0);
    il::Instruction jcc{il::Op::Jcc, il::Operand::of_const(1, 1), il::Operand::none(),
                        il::Operand::of_reg(il::Reg::Edx), {0, 0}};
    CHECK_THROWS_AS(engine.step_il(std::move(s), jcc), Error);

    // Through run(): ret with a clobbered (symbolic) return slot.
    // mov [esp], ecx; ret
    FunctionImage img = assemble({
        {ins(x86::Mn::Mov, {mem32(x86::Gpr::Esp, 0), r32(x86::Gpr::Ecx)}), -1},
        {ins(x86::Mn::Ret), -1},
    });
    auto paths = engine.run(img, img.base_addr, with_inputs({}), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].status == PathStatus::SymbolicJump);
}

TEST_CASE("memory round trip is little-endian")
{
    smt::TermStore store;
    Engine engine(store);
    MachineState s = engine.init_state(with_inputs({"KEY"}), Abi::stack(), 0);

    // Store KEY at a fresh concrete address, then load it back.
    // Non-zero sub indices: temps reset at each native boundary.
    il::Instruction stm{il::Op::Stm, il::Operand::of_temp(0, 32), il::Operand::none(),
                        il::Operand::of_const(0x1000, 32), {0, 1}};
    il::Instruction ldm{il::Op::Ldm, il::Operand::of_const(0x1000, 32),
                        il::Operand::none(), il::Operand::of_temp(1, 32), {0, 2}};
    il::Instruction ldm8{il::Op::Ldm, il::Operand::of_const(0x1000, 32),
                         il::Operand::none(), il::Operand::of_temp(2, 8), {0, 3}};

    TermId key = store.var("KEY", 32);
    s.temps[0] = key;
    auto e1 = engine.step_il(std::move(s), stm);
    auto e2 = engine.step_il(std::move(e1.state), ldm);
    CHECK(e2.state.temps.at(1) == key); // concat-of-extract folds back

    auto e3 = engine.step_il(std::move(e2.state), ldm8);
    const smt::Node& low = store.node(e3.state.temps.at(2));
    REQUIRE(low.kind == Kind::Extract);
    CHECK((low.value & 0xFFFF) == 0);      // lo
    CHECK((low.value >> 16) == 7);         // hi
    CHECK(low.a == key);
}

TEST_CASE("single assignment across a path's trace")
{
    smt::TermStore store;
    Engine engine(store);
    auto paths = engine.run(check_key_image(), 0, with_inputs({"KEY"}), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    std::set<std::string> seen;
    for (const symex::Binding& b : paths[0].final_state.trace) {
        std::string name = store.name_text(store.node(b.var).name);
        CAPTURE(name);
        CHECK(!seen.count(name));
        seen.insert(name);
    }
}

TEST_CASE("entry outside the image is rejected")
{
    smt::TermStore store;
    Engine engine(store);
    CHECK_THROWS_AS(
        engine.run(check_key_image(), 0x999, with_inputs({}), Abi::stack(), {}), Error);
}

TEST_CASE("call/ret nesting stays concrete")
{
    FunctionImage img = assemble({
        {ins(x86::Mn::Call, {imm32(0)}), 2},
        {ins(x86::Mn::Ret), -1},
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Eax), imm32(42)}), -1},
        {ins(x86::Mn::Ret), -1},
    });
    smt::TermStore store;
    Engine engine(store);
    auto paths = engine.run(img, img.base_addr, with_inputs({}), Abi::stack(), {});
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].status == PathStatus::Returned);
    REQUIRE(store.is_const(paths[0].return_value));
    CHECK(store.const_value(paths[0].return_value) == 42);
}
