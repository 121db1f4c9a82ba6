#include <doctest.h>

#include "resmt/emu.hpp"
#include "resmt/errors.hpp"
#include "support/corpus.hpp"

using namespace resmt;
using namespace resmt::test;

namespace {

REQuery eax_equals(uint32_t v, std::vector<std::string> inputs = {"KEY"})
{
    REQuery q;
    q.input = std::move(inputs);
    q.reg = il::Reg::Eax;
    q.op = CmpOp::Eq;
    q.value = v;
    return q;
}

} // namespace

TEST_CASE("check_key returns key minus three")
{
    FunctionImage img = check_key_image();
    ExecLimits limits;

    uint32_t arg = 3;
    auto r = emu::run_concrete(img, 0, std::span(&arg, 1), Abi::stack(), limits);
    CHECK(r.status == emu::RunStatus::Returned);
    CHECK(r.eax == 0);

    arg = 7;
    r = emu::run_concrete(img, 0, std::span(&arg, 1), Abi::stack(), limits);
    CHECK(r.status == emu::RunStatus::Returned);
    CHECK(r.eax == 4);

    // Stack discipline: ESP is restored past the popped return address.
    CHECK(r.state.reg(il::Reg::Esp) == symex::Engine::Options{}.stack_base + 4);
}

TEST_CASE("register-argument sum")
{
    FunctionImage img = sum_image();
    ExecLimits limits;
    std::vector<uint32_t> args = {5, 3};
    auto r = emu::run_concrete(img, 0, args,
                               Abi::registers({il::Reg::Ecx, il::Reg::Edx}), limits);
    CHECK(r.status == emu::RunStatus::Returned);
    CHECK(r.eax == 8);
}

TEST_CASE("immediate return executes three IL steps")
{
    FunctionImage img = make_image(parse_hex("C3"), 0);
    ExecLimits limits;
    auto r = emu::run_concrete(img, 0, {}, Abi::stack(), limits);
    CHECK(r.status == emu::RunStatus::Returned);
    CHECK(r.steps == 3);
}

TEST_CASE("step limit cuts infinite loops")
{
    FunctionImage img = make_image(parse_hex("EB FE"), 0); // jmp self
    ExecLimits limits;
    limits.max_steps = 50;
    auto r = emu::run_concrete(img, 0, {}, Abi::stack(), limits);
    CHECK(r.status == emu::RunStatus::StepLimit);
}

TEST_CASE("divide by zero is reported")
{
    emu::ConcreteState s;
    il::Instruction div{il::Op::Div, il::Operand::of_temp(0, 32),
                        il::Operand::of_const(0, 32), il::Operand::of_temp(1, 32),
                        {0, 1}};
    s.temps[0] = 7;
    CHECK_THROWS_AS(emu::step_il_concrete(s, div), Error);
}

TEST_CASE("uninitialized reads return zero and are logged")
{
    // mov eax, [ebp-8] with no prior store
    FunctionImage img = assemble({
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Eax), mem32(x86::Gpr::Ebp, -8)}), -1},
        {ins(x86::Mn::Ret), -1},
    });
    ExecLimits limits;
    auto r = emu::run_concrete(img, img.base_addr, {}, Abi::stack(), limits);
    CHECK(r.status == emu::RunStatus::Returned);
    CHECK(r.eax == 0);
    CHECK(r.state.uninit_reads > 0);
    CHECK(!r.state.uninit_read_log.empty());
}

TEST_CASE("brute force scans ascending")
{
    FunctionImage img = check_key_image();

    SUBCASE("8-bit scan finds 3")
    {
        auto hit = emu::brute_force(img, 0, Abi::stack(), eax_equals(0), 8);
        REQUIRE(hit.has_value());
        CHECK(*hit == 3);
    }
    SUBCASE("2-bit scan still reaches 3")
    {
        auto hit = emu::brute_force(img, 0, Abi::stack(), eax_equals(0), 2);
        REQUIRE(hit.has_value());
        CHECK(*hit == 3);
    }
    SUBCASE("1-bit scan cannot")
    {
        auto hit = emu::brute_force(img, 0, Abi::stack(), eax_equals(0), 1);
        CHECK(!hit.has_value());
    }
    SUBCASE("constant-return program has no satisfying key")
    {
        FunctionImage c5 = const5_image();
        auto hit = emu::brute_force(c5, 0, Abi::stack(), eax_equals(0), 8);
        CHECK(!hit.has_value());
    }
    SUBCASE("first satisfying key wins")
    {
        // and eax,0xFF; sub eax,0x2A: every key congruent to 0x2A works,
        // the ascending scan must return the smallest.
        FunctionImage byte_check = byte_key_image();
        auto hit = emu::brute_force(byte_check, byte_check.base_addr, Abi::stack(),
                                    eax_equals(0), 16);
        REQUIRE(hit.has_value());
        CHECK(*hit == 0x2A);
    }
}

TEST_CASE("determinism: identical runs, identical traces")
{
    FunctionImage img = byte_key_image();
    ExecLimits limits;
    uint32_t arg = 0x1234;
    auto a = emu::run_concrete(img, img.base_addr, std::span(&arg, 1), Abi::stack(), limits);
    auto b = emu::run_concrete(img, img.base_addr, std::span(&arg, 1), Abi::stack(), limits);
    CHECK(a.eax == b.eax);
    CHECK(a.steps == b.steps);
    CHECK(a.state.regs == b.state.regs);
}

TEST_CASE("call/ret nesting round-trips through the stack")
{
    // call F; ret; F: mov eax, 42; ret
    FunctionImage img = assemble({
        {ins(x86::Mn::Call, {imm32(0)}), 2},
        {ins(x86::Mn::Ret), -1},
        {ins(x86::Mn::Mov, {r32(x86::Gpr::Eax), imm32(42)}), -1},
        {ins(x86::Mn::Ret), -1},
    });
    ExecLimits limits;
    auto r = emu::run_concrete(img, img.base_addr, {}, Abi::stack(), limits);
    CHECK(r.status == emu::RunStatus::Returned);
    CHECK(r.eax == 42);
    CHECK(r.state.reg(il::Reg::Esp) == symex::Engine::Options{}.stack_base + 4);
}
