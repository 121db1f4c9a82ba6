#include "resmt/il.hpp"

#include <sstream>

#include "resmt/errors.hpp"

namespace resmt::il {

const char* op_name(Op op)
{
    static const char* names[kOpCount] = {
        "ADD", "SUB", "MUL", "DIV", "MOD", "SHL", "SHR", "AND", "OR", "XOR",
        "NOT", "LDM", "STM", "STR", "EQ", "LT", "JCC", "UNDEF", "UNKN", "NOP",
    };
    return names[uint8_t(op)];
}

const char* reg_name(Reg r)
{
    static const char* names[kRegCount] = {
        "R_EAX", "R_EBX", "R_ECX", "R_EDX", "R_ESI", "R_EDI", "R_EBP", "R_ESP",
        "R_EIP", "R_CF", "R_PF", "R_AF", "R_ZF", "R_SF", "R_OF",
    };
    return names[uint8_t(r)];
}

namespace {

bool valid_width(uint8_t w)
{
    return w == 1 || w == 8 || w == 16 || w == 32;
}

[[noreturn]] void reject(const Instruction& ins, const std::string& rule)
{
    fail(Err::ValidationError, rule + " in '" + to_string(ins) + "'");
}

void check_value_operand(const Instruction& ins, const Operand& op, const char* pos)
{
    if (op.is_none())
        reject(ins, std::string("operand ") + pos + " must be present");
    if (!valid_width(op.size_bits))
        reject(ins, std::string("operand ") + pos + " has invalid width");
    if (op.kind == Operand::Kind::Const && op.size_bits < 32 &&
        op.value >= (uint32_t(1) << op.size_bits))
        reject(ins, std::string("constant exceeds its width at ") + pos);
    if (op.kind == Operand::Kind::Reg && op.size_bits != reg_width(op.reg))
        reject(ins, std::string("register width mismatch at ") + pos);
}

void check_dest(const Instruction& ins, const Operand& op)
{
    check_value_operand(ins, op, "c");
    if (op.kind != Operand::Kind::Reg && op.kind != Operand::Kind::Temp)
        reject(ins, "destination must be REG or TEMP");
}

void check_none(const Instruction& ins, const Operand& op, const char* pos)
{
    if (!op.is_none())
        reject(ins, std::string("operand ") + pos + " must be empty");
}

} // namespace

void validate(const Instruction& ins)
{
    switch (ins.op) {
        case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Mod:
        case Op::Shl: case Op::Shr: case Op::And: case Op::Or: case Op::Xor:
        case Op::Eq: case Op::Lt: {
            check_value_operand(ins, ins.a, "a");
            check_value_operand(ins, ins.b, "b");
            check_dest(ins, ins.c);
            // A CONST auto-fits its partner's width.
            if (ins.a.kind != Operand::Kind::Const && ins.b.kind != Operand::Kind::Const &&
                ins.a.size_bits != ins.b.size_bits)
                reject(ins, "operand widths differ");
            if ((ins.op == Op::Eq || ins.op == Op::Lt) && ins.c.size_bits != 1)
                reject(ins, "comparison destination must be 1 bit");
            return;
        }
        case Op::Str:
        case Op::Not:
            check_value_operand(ins, ins.a, "a");
            check_none(ins, ins.b, "b");
            check_dest(ins, ins.c);
            return;
        case Op::Ldm:
            check_value_operand(ins, ins.a, "a");
            check_none(ins, ins.b, "b");
            check_dest(ins, ins.c);
            if (ins.a.size_bits != 32)
                reject(ins, "load address must be 32 bits");
            if (ins.c.size_bits == 1)
                reject(ins, "load width must be 8/16/32");
            return;
        case Op::Stm:
            check_value_operand(ins, ins.a, "a");
            check_none(ins, ins.b, "b");
            check_value_operand(ins, ins.c, "c");
            if (ins.c.size_bits != 32)
                reject(ins, "store address must be 32 bits");
            if (ins.a.size_bits == 1)
                reject(ins, "store width must be 8/16/32");
            return;
        case Op::Jcc:
            check_value_operand(ins, ins.a, "a");
            check_none(ins, ins.b, "b");
            check_value_operand(ins, ins.c, "c");
            if (ins.c.size_bits != 32)
                reject(ins, "jump target must be 32 bits");
            return;
        case Op::Undef:
            check_none(ins, ins.a, "a");
            check_none(ins, ins.b, "b");
            check_dest(ins, ins.c);
            return;
        case Op::Unkn:
        case Op::Nop:
            check_none(ins, ins.a, "a");
            check_none(ins, ins.b, "b");
            check_none(ins, ins.c, "c");
            return;
    }
    reject(ins, "unknown opcode");
}

std::string to_string(const Operand& op)
{
    std::ostringstream os;
    switch (op.kind) {
        case Operand::Kind::None:
            return "";
        case Operand::Kind::Reg:
            os << reg_name(op.reg);
            break;
        case Operand::Kind::Temp:
            os << "V_" << (op.temp < 10 ? "0" : "") << int(op.temp);
            break;
        case Operand::Kind::Const:
            os << std::uppercase << std::hex << op.value;
            break;
    }
    os << ":" << std::dec << int(op.size_bits);
    return os.str();
}

std::string to_string(const Instruction& ins)
{
    std::string out = op_name(ins.op);
    out += ' ';
    out += to_string(ins.a);
    out += ", ";
    out += to_string(ins.b);
    out += ", ";
    out += to_string(ins.c);
    return out;
}

std::string format_il(std::span<const Instruction> instrs)
{
    std::string out;
    for (const Instruction& ins : instrs) {
        out += to_string(ins);
        out += '\n';
    }
    return out;
}

} // namespace resmt::il
