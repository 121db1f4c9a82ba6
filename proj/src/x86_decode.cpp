#include <sstream>

#include "resmt/errors.hpp"
#include "resmt/x86.hpp"

namespace resmt::x86 {

namespace {

const char* kGprNames[8] = {"eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi"};
const char* kReg8Names[8] = {"al", "cl", "dl", "bl", "ah", "ch", "dh", "bh"};

// Sequential cursor over the image bytes; every read checks the image bound.
class Reader {
  public:
    Reader(const FunctionImage& image, uint32_t addr) : m_image(image), m_addr(addr) {}

    uint8_t u8()
    {
        if (!m_image.contains(m_addr))
            fail(Err::TruncatedInstruction,
                 "instruction runs past image end at " + hex(m_addr));
        uint8_t b = m_image.byte_at(m_addr);
        ++m_addr;
        m_raw.push_back(b);
        return b;
    }
    uint32_t u32()
    {
        uint32_t v = u8();
        v |= uint32_t(u8()) << 8;
        v |= uint32_t(u8()) << 16;
        v |= uint32_t(u8()) << 24;
        return v;
    }
    int32_t s8() { return static_cast<int8_t>(u8()); }
    int32_t s32() { return static_cast<int32_t>(u32()); }

    uint32_t addr() const { return m_addr; }
    const std::vector<uint8_t>& raw() const { return m_raw; }

    static std::string hex(uint32_t v)
    {
        std::ostringstream os;
        os << "0x" << std::hex << v;
        return os.str();
    }

  private:
    const FunctionImage& m_image;
    uint32_t m_addr;
    std::vector<uint8_t> m_raw;
};

RegRef make_reg(uint8_t num, uint8_t size_bits)
{
    if (size_bits == 8) {
        bool high = num >= 4;
        return RegRef{Gpr(high ? num - 4 : num), 8, high};
    }
    return RegRef{Gpr(num), 32, false};
}

struct ModRm {
    uint8_t mod, reg, rm;
    Operand rm_op; // RegRef or MemRef
};

ModRm decode_modrm(Reader& r, uint8_t operand_bits)
{
    uint8_t byte = r.u8();
    ModRm out;
    out.mod = byte >> 6;
    out.reg = (byte >> 3) & 7;
    out.rm = byte & 7;

    if (out.mod == 3) {
        out.rm_op = make_reg(out.rm, operand_bits);
        return out;
    }

    MemRef mem;
    mem.size_bits = operand_bits;

    if (out.rm == 4) { // SIB follows
        uint8_t sib = r.u8();
        uint8_t ss = sib >> 6;
        uint8_t index = (sib >> 3) & 7;
        uint8_t base = sib & 7;
        if (index != 4) { // index 100b means "none"
            mem.index = Gpr(index);
            mem.scale = uint8_t(1u << ss);
        }
        if (base == 5 && out.mod == 0) {
            mem.disp = r.s32();
            out.rm_op = mem;
            return out;
        }
        mem.base = Gpr(base);
    } else if (out.rm == 5 && out.mod == 0) {
        mem.disp = r.s32(); // absolute disp32, no base
        out.rm_op = mem;
        return out;
    } else {
        mem.base = Gpr(out.rm);
    }

    if (out.mod == 1)
        mem.disp = r.s8();
    else if (out.mod == 2)
        mem.disp = r.s32();
    out.rm_op = mem;
    return out;
}

bool is_prefix(uint8_t b)
{
    switch (b) {
        case 0x66: case 0x67: case 0xF0: case 0xF2: case 0xF3:
        case 0x26: case 0x2E: case 0x36: case 0x3E: case 0x64: case 0x65:
            return true;
        default:
            return false;
    }
}

// Group-1 ALU ops indexed by the /reg field (ADC and SBB are unsupported).
Mn alu_mn(uint8_t index, uint32_t addr)
{
    switch (index) {
        case 0: return Mn::Add;
        case 1: return Mn::Or;
        case 4: return Mn::And;
        case 5: return Mn::Sub;
        case 6: return Mn::Xor;
        case 7: return Mn::Cmp;
        default:
            fail(Err::UnsupportedOpcode,
                 "ALU group index " + std::to_string(index) + " at " + Reader::hex(addr));
    }
}

Mn shift_mn(uint8_t index, uint32_t addr)
{
    switch (index) {
        case 4: return Mn::Shl;
        case 5: return Mn::Shr;
        case 7: return Mn::Sar;
        default:
            fail(Err::UnsupportedOpcode,
                 "shift group index " + std::to_string(index) + " at " + Reader::hex(addr));
    }
}

uint32_t sext8(uint8_t v) { return static_cast<uint32_t>(static_cast<int32_t>(static_cast<int8_t>(v))); }

} // namespace

Instruction decode_one(const FunctionImage& image, uint32_t addr)
{
    if (!image.contains(addr))
        fail(Err::EntryOutOfRange, "decode address " + Reader::hex(addr) + " outside image");

    Reader r(image, addr);
    uint8_t op = r.u8();

    if (is_prefix(op))
        fail(Err::UnsupportedOpcode, "instruction prefix " + Reader::hex(op) + " at " +
                                         Reader::hex(addr));

    Instruction ins;
    ins.addr = addr;

    auto finish = [&](Mn m, std::vector<Operand> ops) -> Instruction {
        ins.mnemonic = m;
        ins.operands = std::move(ops);
        ins.raw = r.raw();
        ins.length = static_cast<uint8_t>(ins.raw.size());
        return ins;
    };
    auto rel_target = [&](int32_t rel) -> uint32_t {
        return static_cast<uint32_t>(r.addr() + rel); // relative to next instruction
    };

    // ALU block: 0x00..0x3D with the 8-byte stride per operation.
    if (op < 0x40 && (op & 7) <= 5) {
        Mn m = alu_mn(op >> 3, addr);
        switch (op & 7) {
            case 0: { // r/m8, r8
                ModRm mr = decode_modrm(r, 8);
                return finish(m, {mr.rm_op, make_reg(mr.reg, 8)});
            }
            case 1: { // r/m32, r32
                ModRm mr = decode_modrm(r, 32);
                return finish(m, {mr.rm_op, make_reg(mr.reg, 32)});
            }
            case 2: { // r8, r/m8
                ModRm mr = decode_modrm(r, 8);
                return finish(m, {make_reg(mr.reg, 8), mr.rm_op});
            }
            case 3: { // r32, r/m32
                ModRm mr = decode_modrm(r, 32);
                return finish(m, {make_reg(mr.reg, 32), mr.rm_op});
            }
            case 4: // AL, imm8
                return finish(m, {RegRef{Gpr::Eax, 8, false}, ImmRef{r.u8(), 8}});
            case 5: // EAX, imm32
                return finish(m, {RegRef{Gpr::Eax, 32, false}, ImmRef{r.u32(), 32}});
        }
    }

    if (op >= 0x40 && op <= 0x47)
        return finish(Mn::Inc, {make_reg(op - 0x40, 32)});
    if (op >= 0x48 && op <= 0x4F)
        return finish(Mn::Dec, {make_reg(op - 0x48, 32)});
    if (op >= 0x50 && op <= 0x57)
        return finish(Mn::Push, {make_reg(op - 0x50, 32)});
    if (op >= 0x58 && op <= 0x5F)
        return finish(Mn::Pop, {make_reg(op - 0x58, 32)});

    if (op == 0x68)
        return finish(Mn::Push, {ImmRef{r.u32(), 32}});
    if (op == 0x6A)
        return finish(Mn::Push, {ImmRef{sext8(r.u8()), 32}});

    if (op >= 0x70 && op <= 0x7F) {
        int32_t rel = r.s8();
        return finish(jcc_from_cc(op - 0x70), {ImmRef{rel_target(rel), 32}});
    }

    switch (op) {
        case 0x80: { // grp1 r/m8, imm8
            ModRm mr = decode_modrm(r, 8);
            Mn m = alu_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, ImmRef{r.u8(), 8}});
        }
        case 0x81: { // grp1 r/m32, imm32
            ModRm mr = decode_modrm(r, 32);
            Mn m = alu_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, ImmRef{r.u32(), 32}});
        }
        case 0x83: { // grp1 r/m32, imm8 sign-extended
            ModRm mr = decode_modrm(r, 32);
            Mn m = alu_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, ImmRef{sext8(r.u8()), 32}});
        }
        case 0x84: {
            ModRm mr = decode_modrm(r, 8);
            return finish(Mn::Test, {mr.rm_op, make_reg(mr.reg, 8)});
        }
        case 0x85: {
            ModRm mr = decode_modrm(r, 32);
            return finish(Mn::Test, {mr.rm_op, make_reg(mr.reg, 32)});
        }
        case 0x86: {
            ModRm mr = decode_modrm(r, 8);
            return finish(Mn::Xchg, {mr.rm_op, make_reg(mr.reg, 8)});
        }
        case 0x87: {
            ModRm mr = decode_modrm(r, 32);
            return finish(Mn::Xchg, {mr.rm_op, make_reg(mr.reg, 32)});
        }
        case 0x88: {
            ModRm mr = decode_modrm(r, 8);
            return finish(Mn::Mov, {mr.rm_op, make_reg(mr.reg, 8)});
        }
        case 0x89: {
            ModRm mr = decode_modrm(r, 32);
            return finish(Mn::Mov, {mr.rm_op, make_reg(mr.reg, 32)});
        }
        case 0x8A: {
            ModRm mr = decode_modrm(r, 8);
            return finish(Mn::Mov, {make_reg(mr.reg, 8), mr.rm_op});
        }
        case 0x8B: {
            ModRm mr = decode_modrm(r, 32);
            return finish(Mn::Mov, {make_reg(mr.reg, 32), mr.rm_op});
        }
        case 0x8D: {
            ModRm mr = decode_modrm(r, 32);
            if (!std::holds_alternative<MemRef>(mr.rm_op))
                fail(Err::UnsupportedOpcode, "lea with register source at " + Reader::hex(addr));
            return finish(Mn::Lea, {make_reg(mr.reg, 32), mr.rm_op});
        }
        case 0x8F: {
            ModRm mr = decode_modrm(r, 32);
            if (mr.reg != 0)
                fail(Err::UnsupportedOpcode, "0x8F group index " + std::to_string(mr.reg));
            return finish(Mn::Pop, {mr.rm_op});
        }
        case 0x90:
            return finish(Mn::Nop, {});
        case 0x91: case 0x92: case 0x93: case 0x94:
        case 0x95: case 0x96: case 0x97:
            return finish(Mn::Xchg, {RegRef{Gpr::Eax, 32, false}, make_reg(op - 0x90, 32)});
        case 0xA8:
            return finish(Mn::Test, {RegRef{Gpr::Eax, 8, false}, ImmRef{r.u8(), 8}});
        case 0xA9:
            return finish(Mn::Test, {RegRef{Gpr::Eax, 32, false}, ImmRef{r.u32(), 32}});
        default:
            break;
    }

    if (op >= 0xB0 && op <= 0xB7)
        return finish(Mn::Mov, {make_reg(op - 0xB0, 8), ImmRef{r.u8(), 8}});
    if (op >= 0xB8 && op <= 0xBF)
        return finish(Mn::Mov, {make_reg(op - 0xB8, 32), ImmRef{r.u32(), 32}});

    switch (op) {
        case 0xC0: { // grp2 r/m8, imm8
            ModRm mr = decode_modrm(r, 8);
            Mn m = shift_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, ImmRef{r.u8(), 8}});
        }
        case 0xC1: {
            ModRm mr = decode_modrm(r, 32);
            Mn m = shift_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, ImmRef{r.u8(), 8}});
        }
        case 0xC3:
            return finish(Mn::Ret, {});
        case 0xC6: {
            ModRm mr = decode_modrm(r, 8);
            if (mr.reg != 0)
                fail(Err::UnsupportedOpcode, "0xC6 group index " + std::to_string(mr.reg));
            return finish(Mn::Mov, {mr.rm_op, ImmRef{r.u8(), 8}});
        }
        case 0xC7: {
            ModRm mr = decode_modrm(r, 32);
            if (mr.reg != 0)
                fail(Err::UnsupportedOpcode, "0xC7 group index " + std::to_string(mr.reg));
            return finish(Mn::Mov, {mr.rm_op, ImmRef{r.u32(), 32}});
        }
        case 0xC9:
            return finish(Mn::Leave, {});
        case 0xD0: {
            ModRm mr = decode_modrm(r, 8);
            Mn m = shift_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, ImmRef{1, 8}});
        }
        case 0xD1: {
            ModRm mr = decode_modrm(r, 32);
            Mn m = shift_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, ImmRef{1, 8}});
        }
        case 0xD2: {
            ModRm mr = decode_modrm(r, 8);
            Mn m = shift_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, RegRef{Gpr::Ecx, 8, false}});
        }
        case 0xD3: {
            ModRm mr = decode_modrm(r, 32);
            Mn m = shift_mn(mr.reg, addr);
            return finish(m, {mr.rm_op, RegRef{Gpr::Ecx, 8, false}});
        }
        case 0xE8: {
            int32_t rel = r.s32();
            return finish(Mn::Call, {ImmRef{rel_target(rel), 32}});
        }
        case 0xE9: {
            int32_t rel = r.s32();
            return finish(Mn::Jmp, {ImmRef{rel_target(rel), 32}});
        }
        case 0xEB: {
            int32_t rel = r.s8();
            return finish(Mn::Jmp, {ImmRef{rel_target(rel), 32}});
        }
        case 0xF6: case 0xF7: {
            uint8_t bits = (op == 0xF6) ? 8 : 32;
            ModRm mr = decode_modrm(r, bits);
            switch (mr.reg) {
                case 0:
                    return finish(Mn::Test, {mr.rm_op, bits == 8 ? ImmRef{r.u8(), 8}
                                                                 : ImmRef{r.u32(), 32}});
                case 2: return finish(Mn::Not, {mr.rm_op});
                case 3: return finish(Mn::Neg, {mr.rm_op});
                default:
                    fail(Err::UnsupportedOpcode, "group-3 index " + std::to_string(mr.reg) +
                                                     " at " + Reader::hex(addr));
            }
        }
        case 0xFE: {
            ModRm mr = decode_modrm(r, 8);
            if (mr.reg == 0)
                return finish(Mn::Inc, {mr.rm_op});
            if (mr.reg == 1)
                return finish(Mn::Dec, {mr.rm_op});
            fail(Err::UnsupportedOpcode, "group-4 index " + std::to_string(mr.reg));
        }
        case 0xFF: {
            ModRm mr = decode_modrm(r, 32);
            switch (mr.reg) {
                case 0: return finish(Mn::Inc, {mr.rm_op});
                case 1: return finish(Mn::Dec, {mr.rm_op});
                case 6: return finish(Mn::Push, {mr.rm_op});
                default:
                    fail(Err::UnsupportedOpcode, "group-5 index " + std::to_string(mr.reg) +
                                                     " at " + Reader::hex(addr));
            }
        }
        case 0x0F: {
            uint8_t op2 = r.u8();
            if (op2 >= 0x80 && op2 <= 0x8F) {
                int32_t rel = r.s32();
                return finish(jcc_from_cc(op2 - 0x80), {ImmRef{rel_target(rel), 32}});
            }
            fail(Err::UnsupportedOpcode,
                 "two-byte opcode 0x0F " + Reader::hex(op2) + " at " + Reader::hex(addr));
        }
        default:
            fail(Err::UnsupportedOpcode,
                 "opcode " + Reader::hex(op) + " at " + Reader::hex(addr));
    }
}

const char* mnemonic_name(Mn m)
{
    switch (m) {
        case Mn::Mov: return "mov";
        case Mn::Add: return "add";
        case Mn::Sub: return "sub";
        case Mn::And: return "and";
        case Mn::Or: return "or";
        case Mn::Xor: return "xor";
        case Mn::Cmp: return "cmp";
        case Mn::Test: return "test";
        case Mn::Lea: return "lea";
        case Mn::Push: return "push";
        case Mn::Pop: return "pop";
        case Mn::Inc: return "inc";
        case Mn::Dec: return "dec";
        case Mn::Neg: return "neg";
        case Mn::Not: return "not";
        case Mn::Shl: return "shl";
        case Mn::Shr: return "shr";
        case Mn::Sar: return "sar";
        case Mn::Xchg: return "xchg";
        case Mn::Nop: return "nop";
        case Mn::Jmp: return "jmp";
        case Mn::Call: return "call";
        case Mn::Ret: return "ret";
        case Mn::Leave: return "leave";
        case Mn::Jo: return "jo";
        case Mn::Jno: return "jno";
        case Mn::Jb: return "jb";
        case Mn::Jae: return "jae";
        case Mn::Je: return "je";
        case Mn::Jne: return "jne";
        case Mn::Jbe: return "jbe";
        case Mn::Ja: return "ja";
        case Mn::Js: return "js";
        case Mn::Jns: return "jns";
        case Mn::Jp: return "jp";
        case Mn::Jnp: return "jnp";
        case Mn::Jl: return "jl";
        case Mn::Jge: return "jge";
        case Mn::Jle: return "jle";
        case Mn::Jg: return "jg";
    }
    return "?";
}

const char* gpr_name(Gpr r) { return kGprNames[uint8_t(r)]; }

std::string reg_text(const RegRef& r)
{
    if (r.size_bits == 8)
        return kReg8Names[uint8_t(r.gpr) + (r.high8 ? 4 : 0)];
    return kGprNames[uint8_t(r.gpr)];
}

std::string to_string(const Operand& op)
{
    if (auto* reg = std::get_if<RegRef>(&op))
        return reg_text(*reg);
    if (auto* imm = std::get_if<ImmRef>(&op)) {
        std::ostringstream os;
        os << "0x" << std::hex << imm->value;
        return os.str();
    }
    const MemRef& m = std::get<MemRef>(op);
    std::ostringstream os;
    os << (m.size_bits == 8 ? "byte [" : "dword [");
    bool first = true;
    if (m.base) {
        os << gpr_name(*m.base);
        first = false;
    }
    if (m.index) {
        if (!first)
            os << "+";
        os << gpr_name(*m.index);
        if (m.scale > 1)
            os << "*" << int(m.scale);
        first = false;
    }
    if (m.disp != 0 || first) {
        if (!first)
            os << (m.disp < 0 ? "-" : "+");
        else if (m.disp < 0)
            os << "-";
        uint32_t mag = m.disp < 0 ? uint32_t(-(int64_t)m.disp) : uint32_t(m.disp);
        os << "0x" << std::hex << mag;
    }
    os << "]";
    return os.str();
}

std::string to_string(const Instruction& ins)
{
    std::string out = mnemonic_name(ins.mnemonic);
    for (size_t i = 0; i < ins.operands.size(); ++i)
        out += (i ? ", " : " ") + to_string(ins.operands[i]);
    return out;
}

} // namespace resmt::x86
