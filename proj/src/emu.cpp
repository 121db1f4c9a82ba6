#include "resmt/emu.hpp"

#include "resmt/errors.hpp"
#include "resmt/lifter.hpp"
#include "resmt/x86.hpp"

namespace resmt::emu {

namespace {

uint32_t width_mask(uint8_t bits)
{
    return bits >= 32 ? 0xFFFFFFFFu : (uint32_t(1) << bits) - 1;
}

} // namespace

const char* run_status_name(RunStatus s)
{
    switch (s) {
        case RunStatus::Returned: return "Returned";
        case RunStatus::StepLimit: return "StepLimit";
        case RunStatus::DecodeFailure: return "DecodeFailure";
        case RunStatus::UnliftableFailure: return "UnliftableFailure";
        case RunStatus::DivideByZero: return "DivideByZero";
    }
    return "?";
}

uint8_t ConcreteState::load_byte(uint32_t addr)
{
    auto it = mem.find(addr);
    if (it != mem.end())
        return it->second;
    ++uninit_reads;
    if (uninit_read_log.size() < 16)
        uninit_read_log.push_back(addr);
    return 0;
}

namespace {

uint32_t read_operand(ConcreteState& s, const il::Operand& op)
{
    switch (op.kind) {
        case il::Operand::Kind::Reg:
            return s.reg(op.reg) & width_mask(op.size_bits);
        case il::Operand::Kind::Temp: {
            auto it = s.temps.find(op.temp);
            if (it == s.temps.end())
                fail(Err::Internal, "concrete read of unwritten temp");
            return it->second;
        }
        case il::Operand::Kind::Const:
            return op.value;
        case il::Operand::Kind::None:
            break;
    }
    fail(Err::Internal, "concrete read of empty operand");
}

void write_dest(ConcreteState& s, const il::Operand& dst, uint32_t value)
{
    value &= width_mask(dst.size_bits);
    if (dst.kind == il::Operand::Kind::Reg)
        s.set_reg(dst.reg, value);
    else
        s.temps[dst.temp] = value;
}

} // namespace

std::optional<uint32_t> step_il_concrete(ConcreteState& s, const il::Instruction& ins)
{
    if (ins.addr.sub == 0)
        s.temps.clear();
    s.steps += 1;

    using Op = il::Op;
    switch (ins.op) {
        case Op::Nop:
        case Op::Unkn:
            return std::nullopt;
        case Op::Undef:
            write_dest(s, ins.c, 0); // deterministic stand-in
            return std::nullopt;
        case Op::Str:
            write_dest(s, ins.c, read_operand(s, ins.a));
            return std::nullopt;
        case Op::Not:
            write_dest(s, ins.c, ~read_operand(s, ins.a));
            return std::nullopt;
        case Op::Ldm: {
            uint32_t addr = read_operand(s, ins.a);
            uint32_t v = 0;
            for (int i = ins.c.size_bits / 8 - 1; i >= 0; --i)
                v = v << 8 | s.load_byte(addr + uint32_t(i));
            write_dest(s, ins.c, v);
            return std::nullopt;
        }
        case Op::Stm: {
            uint32_t v = read_operand(s, ins.a);
            uint32_t addr = read_operand(s, ins.c);
            for (int i = 0; i < ins.a.size_bits / 8; ++i)
                s.store_byte(addr + uint32_t(i), uint8_t(v >> (8 * i)));
            return std::nullopt;
        }
        case Op::Jcc: {
            if (read_operand(s, ins.a) != 0)
                return read_operand(s, ins.c);
            return std::nullopt;
        }
        default:
            break;
    }

    // Binary operations. A constant operand adopts its partner's width.
    uint32_t a = read_operand(s, ins.a);
    uint32_t b = read_operand(s, ins.b);
    uint8_t w = ins.a.kind == il::Operand::Kind::Const ? ins.b.size_bits : ins.a.size_bits;
    uint32_t m = width_mask(w);
    a &= m;
    b &= m;

    uint64_t r = 0;
    switch (ins.op) {
        case il::Op::Add: r = uint64_t(a) + b; break;
        case il::Op::Sub: r = uint64_t(a) - b; break;
        case il::Op::Mul: r = uint64_t(a) * b; break;
        case il::Op::Div:
            if (b == 0)
                fail(Err::DivideByZero, "division by zero at native " +
                                            std::to_string(ins.addr.native));
            r = a / b;
            break;
        case il::Op::Mod:
            if (b == 0)
                fail(Err::DivideByZero, "modulo by zero at native " +
                                            std::to_string(ins.addr.native));
            r = a % b;
            break;
        case il::Op::Shl: r = b >= w ? 0 : uint64_t(a) << b; break;
        case il::Op::Shr: r = b >= w ? 0 : uint64_t(a) >> b; break;
        case il::Op::And: r = a & b; break;
        case il::Op::Or: r = a | b; break;
        case il::Op::Xor: r = a ^ b; break;
        case il::Op::Eq: r = a == b ? 1 : 0; break;
        case il::Op::Lt: r = a < b ? 1 : 0; break;
        default:
            fail(Err::Internal, "bad IL op in concrete step");
    }
    write_dest(s, ins.c, uint32_t(r & m));
    return std::nullopt;
}

RunResult run_concrete(const FunctionImage& image, uint32_t entry,
                       std::span<const uint32_t> args, const Abi& abi,
                       const ExecLimits& limits,
                       const symex::Engine::Options& layout)
{
    if (!image.contains(entry))
        fail(Err::EntryOutOfRange, "entry address outside the image");
    if (abi.kind == Abi::Kind::RegisterArgs && args.size() > abi.regs.size())
        fail(Err::TooManyArgs, "more arguments than argument registers");

    ConcreteState s;
    s.set_reg(il::Reg::Esp, layout.stack_base);
    auto store_u32 = [&](uint32_t addr, uint32_t v) {
        for (int i = 0; i < 4; ++i)
            s.store_byte(addr + uint32_t(i), uint8_t(v >> (8 * i)));
    };
    store_u32(layout.stack_base, layout.return_sentinel);
    if (abi.kind == Abi::Kind::StackArgs) {
        for (size_t i = 0; i < args.size(); ++i)
            store_u32(layout.stack_base + 4 + uint32_t(4 * i), args[i]);
    } else {
        for (size_t i = 0; i < args.size(); ++i)
            s.set_reg(abi.regs[i], args[i]);
    }

    RunResult out;
    uint32_t pc = entry;
    for (;;) {
        if (pc == layout.return_sentinel) {
            out.status = RunStatus::Returned;
            break;
        }
        if (s.steps >= limits.max_steps) {
            out.status = RunStatus::StepLimit;
            break;
        }
        LiftedBlock block;
        try {
            block = lift(x86::decode_one(image, pc));
        } catch (const Error& e) {
            out.status = e.code() == Err::UnliftableInstruction
                             ? RunStatus::UnliftableFailure
                             : RunStatus::DecodeFailure;
            out.note = e.what();
            break;
        }
        std::optional<uint32_t> jump;
        bool limit_hit = false;
        try {
            for (const il::Instruction& ins : block.il) {
                if (s.steps >= limits.max_steps) {
                    limit_hit = true;
                    break;
                }
                jump = step_il_concrete(s, ins);
                if (jump)
                    break;
            }
        } catch (const Error& e) {
            if (e.code() != Err::DivideByZero)
                throw;
            out.status = RunStatus::DivideByZero;
            out.note = e.what();
            break;
        }
        if (limit_hit) {
            out.status = RunStatus::StepLimit;
            break;
        }
        pc = jump ? *jump : block.source.addr + block.source.length;
        s.set_reg(il::Reg::Eip, pc);
    }

    out.eax = s.reg(il::Reg::Eax);
    out.steps = s.steps;
    out.state = std::move(s);
    return out;
}

bool satisfies(const REQuery& q, uint32_t v)
{
    if (q.signed_cmp && (q.op == CmpOp::Lt || q.op == CmpOp::Gt)) {
        int32_t sv = int32_t(v), sq = int32_t(q.value);
        return q.op == CmpOp::Lt ? sv < sq : sv > sq;
    }
    switch (q.op) {
        case CmpOp::Eq: return v == q.value;
        case CmpOp::Ne: return v != q.value;
        case CmpOp::Lt: return v < q.value;
        case CmpOp::Gt: return v > q.value;
    }
    return false;
}

std::optional<uint32_t> brute_force(const FunctionImage& image, uint32_t entry,
                                    const Abi& abi, const REQuery& goal,
                                    unsigned key_bits)
{
    if (goal.input.size() != 1)
        fail(Err::QueryParseError, "brute force needs exactly one input");
    if (key_bits > 32)
        fail(Err::QueryParseError, "key width exceeds 32 bits");

    ExecLimits limits;
    uint64_t count = key_bits == 32 ? (uint64_t(1) << 32) : (uint64_t(1) << key_bits);
    for (uint64_t k = 0; k < count; ++k) {
        uint32_t arg = uint32_t(k);
        RunResult r = run_concrete(image, entry, std::span(&arg, 1), abi, limits);
        if (r.status == RunStatus::Returned && satisfies(goal, r.state.reg(goal.reg)))
            return arg;
    }
    return std::nullopt;
}

} // namespace resmt::emu
