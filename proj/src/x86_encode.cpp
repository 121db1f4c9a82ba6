#include "resmt/errors.hpp"
#include "resmt/x86.hpp"

namespace resmt::x86 {

namespace {

uint8_t reg_num(const RegRef& r)
{
    return uint8_t(r.gpr) + (r.high8 ? 4 : 0);
}

bool fits_s8(uint32_t v)
{
    int32_t s = static_cast<int32_t>(v);
    return s >= -128 && s <= 127;
}

void put32(std::vector<uint8_t>& out, uint32_t v)
{
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 24));
}

// ModRM (+SIB, +disp) for /reg_field with an rm operand.
void put_modrm(std::vector<uint8_t>& out, uint8_t reg_field, const Operand& rm)
{
    if (auto* r = std::get_if<RegRef>(&rm)) {
        out.push_back(uint8_t(0xC0 | reg_field << 3 | reg_num(*r)));
        return;
    }
    const MemRef& m = std::get<MemRef>(rm);
    if (m.index && *m.index == Gpr::Esp)
        fail(Err::UnencodableForm, "esp cannot be an index register");
    if (m.scale != 1 && m.scale != 2 && m.scale != 4 && m.scale != 8)
        fail(Err::UnencodableForm, "scale must be 1/2/4/8");

    bool need_sib = m.index.has_value() || (m.base && *m.base == Gpr::Esp);
    uint8_t ss = m.scale == 1 ? 0 : m.scale == 2 ? 1 : m.scale == 4 ? 2 : 3;

    if (!m.base) {
        // disp32-only, with or without index (both need rm=101 semantics).
        if (m.index) {
            out.push_back(uint8_t(0x00 | reg_field << 3 | 4));
            out.push_back(uint8_t(ss << 6 | uint8_t(*m.index) << 3 | 5));
        } else {
            out.push_back(uint8_t(0x00 | reg_field << 3 | 5));
        }
        put32(out, uint32_t(m.disp));
        return;
    }

    // [ebp] has no mod=00 encoding; force a disp byte.
    uint8_t mod;
    if (m.disp == 0 && *m.base != Gpr::Ebp)
        mod = 0;
    else if (fits_s8(uint32_t(m.disp)))
        mod = 1;
    else
        mod = 2;

    if (need_sib) {
        out.push_back(uint8_t(mod << 6 | reg_field << 3 | 4));
        uint8_t index_field = m.index ? uint8_t(*m.index) : 4;
        out.push_back(uint8_t(ss << 6 | index_field << 3 | uint8_t(*m.base)));
    } else {
        out.push_back(uint8_t(mod << 6 | reg_field << 3 | uint8_t(*m.base)));
    }
    if (mod == 1)
        out.push_back(uint8_t(int8_t(m.disp)));
    else if (mod == 2)
        put32(out, uint32_t(m.disp));
}

struct Shape {
    const RegRef* reg0 = nullptr;
    const RegRef* reg1 = nullptr;
    const ImmRef* imm0 = nullptr;
    const ImmRef* imm1 = nullptr;
    const MemRef* mem0 = nullptr;
    const MemRef* mem1 = nullptr;
    size_t count = 0;
};

Shape shape_of(const Instruction& ins)
{
    Shape s;
    s.count = ins.operands.size();
    auto scan = [&](const Operand& op, const RegRef*& r, const ImmRef*& i, const MemRef*& m) {
        r = std::get_if<RegRef>(&op);
        i = std::get_if<ImmRef>(&op);
        m = std::get_if<MemRef>(&op);
    };
    if (s.count > 0)
        scan(ins.operands[0], s.reg0, s.imm0, s.mem0);
    if (s.count > 1)
        scan(ins.operands[1], s.reg1, s.imm1, s.mem1);
    return s;
}

[[noreturn]] void unencodable(const Instruction& ins)
{
    fail(Err::UnencodableForm, to_string(ins));
}

// dst r/m <- src reg uses `base`; dst reg <- src r/m uses `base+2`;
// r/m <- imm uses the group opcode with /idx.  Covers the six ALU ops.
std::vector<uint8_t> encode_alu(const Instruction& ins, uint8_t idx)
{
    Shape s = shape_of(ins);
    std::vector<uint8_t> out;
    uint8_t base = uint8_t(idx << 3);
    if (s.count != 2)
        unencodable(ins);

    if (s.reg1 && (s.reg0 || s.mem0)) { // r/m, reg
        uint8_t bits = s.reg1->size_bits;
        if (s.reg0 && s.reg0->size_bits != bits)
            unencodable(ins);
        if (s.mem0 && s.mem0->size_bits != bits)
            unencodable(ins);
        out.push_back(uint8_t(base | (bits == 8 ? 0x00 : 0x01)));
        put_modrm(out, reg_num(*s.reg1), ins.operands[0]);
        return out;
    }
    if (s.reg0 && s.mem1) { // reg, mem
        uint8_t bits = s.reg0->size_bits;
        if (s.mem1->size_bits != bits)
            unencodable(ins);
        out.push_back(uint8_t(base | (bits == 8 ? 0x02 : 0x03)));
        put_modrm(out, reg_num(*s.reg0), ins.operands[1]);
        return out;
    }
    if (s.imm1 && (s.reg0 || s.mem0)) { // r/m, imm
        uint8_t bits = s.reg0 ? s.reg0->size_bits : s.mem0->size_bits;
        if (bits == 8) {
            out.push_back(0x80);
            put_modrm(out, idx, ins.operands[0]);
            out.push_back(uint8_t(s.imm1->value));
        } else if (fits_s8(s.imm1->value)) {
            out.push_back(0x83);
            put_modrm(out, idx, ins.operands[0]);
            out.push_back(uint8_t(s.imm1->value));
        } else {
            out.push_back(0x81);
            put_modrm(out, idx, ins.operands[0]);
            put32(out, s.imm1->value);
        }
        return out;
    }
    unencodable(ins);
}

std::vector<uint8_t> encode_shift(const Instruction& ins, uint8_t idx)
{
    Shape s = shape_of(ins);
    std::vector<uint8_t> out;
    if (s.count != 2 || !(s.reg0 || s.mem0))
        unencodable(ins);
    uint8_t bits = s.reg0 ? s.reg0->size_bits : s.mem0->size_bits;
    if (s.imm1) {
        out.push_back(bits == 8 ? 0xC0 : 0xC1);
        put_modrm(out, idx, ins.operands[0]);
        out.push_back(uint8_t(s.imm1->value));
        return out;
    }
    if (s.reg1 && s.reg1->gpr == Gpr::Ecx && s.reg1->size_bits == 8 && !s.reg1->high8) {
        out.push_back(bits == 8 ? 0xD2 : 0xD3); // count in CL
        put_modrm(out, idx, ins.operands[0]);
        return out;
    }
    unencodable(ins);
}

std::vector<uint8_t> encode_branch(const Instruction& ins, bool force_near)
{
    Shape s = shape_of(ins);
    if (s.count != 1 || !s.imm0)
        unencodable(ins);
    uint32_t target = s.imm0->value;
    std::vector<uint8_t> out;

    auto rel_from = [&](uint32_t len) {
        return int64_t(target) - (int64_t(ins.addr) + len);
    };

    if (ins.mnemonic == Mn::Call) {
        out.push_back(0xE8);
        put32(out, uint32_t(rel_from(5)));
        return out;
    }
    if (ins.mnemonic == Mn::Jmp) {
        int64_t rel8 = rel_from(2);
        if (!force_near && rel8 >= -128 && rel8 <= 127) {
            out.push_back(0xEB);
            out.push_back(uint8_t(int8_t(rel8)));
        } else {
            out.push_back(0xE9);
            put32(out, uint32_t(rel_from(5)));
        }
        return out;
    }
    // Jcc
    int64_t rel8 = rel_from(2);
    if (!force_near && rel8 >= -128 && rel8 <= 127) {
        out.push_back(uint8_t(0x70 + cc_index(ins.mnemonic)));
        out.push_back(uint8_t(int8_t(rel8)));
    } else {
        out.push_back(0x0F);
        out.push_back(uint8_t(0x80 + cc_index(ins.mnemonic)));
        put32(out, uint32_t(rel_from(6)));
    }
    return out;
}

} // namespace

std::vector<uint8_t> encode(const Instruction& ins, bool force_near_branches)
{
    Shape s = shape_of(ins);
    std::vector<uint8_t> out;

    switch (ins.mnemonic) {
        case Mn::Add: return encode_alu(ins, 0);
        case Mn::Or: return encode_alu(ins, 1);
        case Mn::And: return encode_alu(ins, 4);
        case Mn::Sub: return encode_alu(ins, 5);
        case Mn::Xor: return encode_alu(ins, 6);
        case Mn::Cmp: return encode_alu(ins, 7);

        case Mn::Shl: return encode_shift(ins, 4);
        case Mn::Shr: return encode_shift(ins, 5);
        case Mn::Sar: return encode_shift(ins, 7);

        case Mn::Jmp:
        case Mn::Call:
        case Mn::Jo: case Mn::Jno: case Mn::Jb: case Mn::Jae:
        case Mn::Je: case Mn::Jne: case Mn::Jbe: case Mn::Ja:
        case Mn::Js: case Mn::Jns: case Mn::Jp: case Mn::Jnp:
        case Mn::Jl: case Mn::Jge: case Mn::Jle: case Mn::Jg:
            return encode_branch(ins, force_near_branches);

        case Mn::Mov: {
            if (s.count != 2)
                unencodable(ins);
            if (s.reg0 && s.imm1) { // B0+r / B8+r
                if (s.reg0->size_bits == 8) {
                    out.push_back(uint8_t(0xB0 + reg_num(*s.reg0)));
                    out.push_back(uint8_t(s.imm1->value));
                } else {
                    out.push_back(uint8_t(0xB8 + reg_num(*s.reg0)));
                    put32(out, s.imm1->value);
                }
                return out;
            }
            if (s.reg1 && (s.reg0 || s.mem0)) { // r/m <- reg: 88/89
                uint8_t bits = s.reg1->size_bits;
                out.push_back(bits == 8 ? 0x88 : 0x89);
                put_modrm(out, reg_num(*s.reg1), ins.operands[0]);
                return out;
            }
            if (s.reg0 && s.mem1) { // reg <- mem: 8A/8B
                out.push_back(s.reg0->size_bits == 8 ? 0x8A : 0x8B);
                put_modrm(out, reg_num(*s.reg0), ins.operands[1]);
                return out;
            }
            if (s.mem0 && s.imm1) { // C6/C7 /0
                if (s.mem0->size_bits == 8) {
                    out.push_back(0xC6);
                    put_modrm(out, 0, ins.operands[0]);
                    out.push_back(uint8_t(s.imm1->value));
                } else {
                    out.push_back(0xC7);
                    put_modrm(out, 0, ins.operands[0]);
                    put32(out, s.imm1->value);
                }
                return out;
            }
            unencodable(ins);
        }
        case Mn::Test: {
            if (s.count != 2)
                unencodable(ins);
            if (s.reg1 && (s.reg0 || s.mem0)) {
                out.push_back(s.reg1->size_bits == 8 ? 0x84 : 0x85);
                put_modrm(out, reg_num(*s.reg1), ins.operands[0]);
                return out;
            }
            if (s.imm1 && (s.reg0 || s.mem0)) {
                uint8_t bits = s.reg0 ? s.reg0->size_bits : s.mem0->size_bits;
                out.push_back(bits == 8 ? 0xF6 : 0xF7);
                put_modrm(out, 0, ins.operands[0]);
                if (bits == 8)
                    out.push_back(uint8_t(s.imm1->value));
                else
                    put32(out, s.imm1->value);
                return out;
            }
            unencodable(ins);
        }
        case Mn::Lea: {
            if (s.count != 2 || !s.reg0 || !s.mem1 || s.reg0->size_bits != 32)
                unencodable(ins);
            out.push_back(0x8D);
            put_modrm(out, reg_num(*s.reg0), ins.operands[1]);
            return out;
        }
        case Mn::Push: {
            if (s.count != 1)
                unencodable(ins);
            if (s.reg0 && s.reg0->size_bits == 32) {
                out.push_back(uint8_t(0x50 + reg_num(*s.reg0)));
                return out;
            }
            if (s.imm0) {
                if (fits_s8(s.imm0->value)) {
                    out.push_back(0x6A);
                    out.push_back(uint8_t(s.imm0->value));
                } else {
                    out.push_back(0x68);
                    put32(out, s.imm0->value);
                }
                return out;
            }
            if (s.mem0 && s.mem0->size_bits == 32) {
                out.push_back(0xFF);
                put_modrm(out, 6, ins.operands[0]);
                return out;
            }
            unencodable(ins);
        }
        case Mn::Pop: {
            if (s.count != 1)
                unencodable(ins);
            if (s.reg0 && s.reg0->size_bits == 32) {
                out.push_back(uint8_t(0x58 + reg_num(*s.reg0)));
                return out;
            }
            if (s.mem0 && s.mem0->size_bits == 32) {
                out.push_back(0x8F);
                put_modrm(out, 0, ins.operands[0]);
                return out;
            }
            unencodable(ins);
        }
        case Mn::Inc:
        case Mn::Dec: {
            if (s.count != 1)
                unencodable(ins);
            uint8_t idx = ins.mnemonic == Mn::Inc ? 0 : 1;
            if (s.reg0 && s.reg0->size_bits == 32) {
                out.push_back(uint8_t((idx == 0 ? 0x40 : 0x48) + reg_num(*s.reg0)));
                return out;
            }
            uint8_t bits = s.reg0 ? s.reg0->size_bits : s.mem0 ? s.mem0->size_bits : 0;
            if (!bits)
                unencodable(ins);
            out.push_back(bits == 8 ? 0xFE : 0xFF);
            put_modrm(out, idx, ins.operands[0]);
            return out;
        }
        case Mn::Neg:
        case Mn::Not: {
            if (s.count != 1 || !(s.reg0 || s.mem0))
                unencodable(ins);
            uint8_t bits = s.reg0 ? s.reg0->size_bits : s.mem0->size_bits;
            out.push_back(bits == 8 ? 0xF6 : 0xF7);
            put_modrm(out, ins.mnemonic == Mn::Not ? 2 : 3, ins.operands[0]);
            return out;
        }
        case Mn::Xchg: {
            if (s.count != 2 || !s.reg1 || !(s.reg0 || s.mem0))
                unencodable(ins);
            uint8_t bits = s.reg1->size_bits;
            out.push_back(bits == 8 ? 0x86 : 0x87);
            put_modrm(out, reg_num(*s.reg1), ins.operands[0]);
            return out;
        }
        case Mn::Nop:
            return {0x90};
        case Mn::Ret:
            return {0xC3};
        case Mn::Leave:
            return {0xC9};
    }
    unencodable(ins);
}

} // namespace resmt::x86
