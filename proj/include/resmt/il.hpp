#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace resmt::il {

/// The 20 IL opcodes: the 17-member core plus EQ, LT and NOT, which the
/// flag lowering needs. SHL and SHR together realize the core's single
/// logical-shift instruction.
enum class Op : uint8_t {
    Add, Sub, Mul, Div, Mod, Shl, Shr, And, Or, Xor, Not,
    Ldm, Stm, Str, Eq, Lt, Jcc, Undef, Unkn, Nop,
};
constexpr int kOpCount = 20;

enum class Reg : uint8_t {
    Eax, Ebx, Ecx, Edx, Esi, Edi, Ebp, Esp, Eip,
    Cf, Pf, Af, Zf, Sf, Of,
};
constexpr int kRegCount = 15;
constexpr int kGprCount = 8; // Eax..Esp

const char* op_name(Op op);   // "ADD"
const char* reg_name(Reg r);  // "R_EAX"
inline bool is_flag(Reg r) { return r >= Reg::Cf; }
inline uint8_t reg_width(Reg r) { return is_flag(r) ? 1 : 32; }

struct Operand {
    enum class Kind : uint8_t { None, Reg, Temp, Const };

    Kind kind = Kind::None;
    Reg reg{};          // Kind::Reg
    uint8_t temp = 0;   // Kind::Temp, rendered V_00, V_01, ...
    uint32_t value = 0; // Kind::Const
    uint8_t size_bits = 0;

    static Operand none() { return {}; }
    static Operand of_reg(Reg r)
    {
        Operand op;
        op.kind = Kind::Reg;
        op.reg = r;
        op.size_bits = reg_width(r);
        return op;
    }
    static Operand of_temp(uint8_t index, uint8_t size_bits)
    {
        Operand op;
        op.kind = Kind::Temp;
        op.temp = index;
        op.size_bits = size_bits;
        return op;
    }
    static Operand of_const(uint32_t value, uint8_t size_bits)
    {
        Operand op;
        op.kind = Kind::Const;
        op.value = value;
        op.size_bits = size_bits;
        return op;
    }
    bool is_none() const { return kind == Kind::None; }

    bool operator==(const Operand&) const = default;
};

/// Position of one IL instruction: source assembly address plus the index
/// within that instruction's expansion (sub == 0 first).
struct Addr {
    uint32_t native = 0;
    uint32_t sub = 0;

    bool operator==(const Addr&) const = default;
};

struct Instruction {
    Op op = Op::Nop;
    Operand a, b, c;
    Addr addr;

    bool operator==(const Instruction&) const = default;
};

inline bool is_binary(Op op)
{
    switch (op) {
        case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Mod:
        case Op::Shl: case Op::Shr: case Op::And: case Op::Or: case Op::Xor:
        case Op::Eq: case Op::Lt:
            return true;
        default:
            return false;
    }
}

/// Checks the per-opcode operand arity and size rules; throws
/// ValidationError naming the violated rule.
void validate(const Instruction& ins);

std::string to_string(const Operand& op);      // "R_EAX:32", "FF:32", "V_01:8"
std::string to_string(const Instruction& ins); // "LDM R_ESP:32, , V_01:32"
std::string format_il(std::span<const Instruction> instrs);

} // namespace resmt::il
