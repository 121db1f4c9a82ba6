#include "resmt/lifter.hpp"

#include <optional>

#include "resmt/errors.hpp"

namespace resmt {

using il::Op;
using il::Operand;
using x86::Gpr;
using x86::ImmRef;
using x86::MemRef;
using x86::Mn;
using x86::RegRef;

namespace {

il::Reg gpr_to_il(Gpr g)
{
    switch (g) {
        case Gpr::Eax: return il::Reg::Eax;
        case Gpr::Ecx: return il::Reg::Ecx;
        case Gpr::Edx: return il::Reg::Edx;
        case Gpr::Ebx: return il::Reg::Ebx;
        case Gpr::Esp: return il::Reg::Esp;
        case Gpr::Ebp: return il::Reg::Ebp;
        case Gpr::Esi: return il::Reg::Esi;
        case Gpr::Edi: return il::Reg::Edi;
    }
    fail(Err::Internal, "bad gpr");
}

Operand c32(uint32_t v) { return Operand::of_const(v, 32); }

// Accumulates the IL expansion of one native instruction, handing out
// per-instruction temporaries.
class Builder {
  public:
    explicit Builder(uint32_t native) : m_native(native) {}

    Operand fresh(uint8_t bits) { return Operand::of_temp(m_next_temp++, bits); }
    void skip_temp() { ++m_next_temp; }

    void emit(Op op, Operand a, Operand b, Operand c)
    {
        m_out.push_back(il::Instruction{op, a, b, c,
                                        il::Addr{m_native, uint32_t(m_out.size())}});
    }
    Operand emit_to_fresh(Op op, Operand a, Operand b, uint8_t bits)
    {
        Operand dst = fresh(bits);
        emit(op, a, b, dst);
        return dst;
    }

    // AND + narrowing OR pair; the narrow destination is allocated first,
    // so the mask temp gets the higher number.
    Operand narrow(Operand src, uint32_t mask, uint8_t to_bits)
    {
        Operand dst = fresh(to_bits);
        Operand masked = fresh(src.size_bits);
        emit(Op::And, src, Operand::of_const(mask, src.size_bits), masked);
        emit(Op::Or, masked, Operand::of_const(0, src.size_bits), dst);
        return dst;
    }

    std::vector<il::Instruction> take() { return std::move(m_out); }

  private:
    uint32_t m_native;
    uint8_t m_next_temp = 0;
    std::vector<il::Instruction> m_out;
};

// ---- operand access ------------------------------------------------------

struct Access {
    Operand value;               // the operand's current value
    std::optional<Operand> ea;   // effective address, for write-back
};

Operand effective_address(Builder& b, const MemRef& m)
{
    std::optional<Operand> acc;
    if (m.base) {
        Operand t = b.emit_to_fresh(Op::Str, Operand::of_reg(gpr_to_il(*m.base)),
                                    Operand::none(), 32);
        acc = t;
    }
    if (m.index) {
        Operand idx = b.emit_to_fresh(Op::Str, Operand::of_reg(gpr_to_il(*m.index)),
                                      Operand::none(), 32);
        if (m.scale > 1)
            idx = b.emit_to_fresh(Op::Mul, idx, c32(m.scale), 32);
        acc = acc ? b.emit_to_fresh(Op::Add, *acc, idx, 32) : idx;
    }
    uint32_t disp = uint32_t(m.disp);
    if (!acc)
        return c32(disp);
    if (disp != 0)
        acc = b.emit_to_fresh(Op::Add, *acc, c32(disp), 32);
    return *acc;
}

// Reads a register into a temp. 8-bit views extract from the parent GPR.
Operand read_reg(Builder& b, const RegRef& r)
{
    Operand full = Operand::of_reg(gpr_to_il(r.gpr));
    if (r.size_bits == 32)
        return b.emit_to_fresh(Op::Str, full, Operand::none(), 32);
    Operand t = b.emit_to_fresh(Op::Str, full, Operand::none(), 32);
    if (r.high8)
        t = b.emit_to_fresh(Op::Shr, t, c32(8), 32);
    return b.emit_to_fresh(Op::Str, t, Operand::none(), 8); // truncate
}

void write_reg(Builder& b, const RegRef& r, Operand value)
{
    Operand full = Operand::of_reg(gpr_to_il(r.gpr));
    if (r.size_bits == 32) {
        b.emit(Op::Str, value, Operand::none(), full);
        return;
    }
    // Merge the byte into the parent register.
    Operand old = b.emit_to_fresh(Op::Str, full, Operand::none(), 32);
    uint32_t keep = r.high8 ? 0xFFFF00FFu : 0xFFFFFF00u;
    Operand masked = b.emit_to_fresh(Op::And, old, c32(keep), 32);
    Operand wide = b.emit_to_fresh(Op::Str, value, Operand::none(), 32); // zero-extend
    if (r.high8)
        wide = b.emit_to_fresh(Op::Shl, wide, c32(8), 32);
    Operand merged = b.emit_to_fresh(Op::Or, masked, wide, 32);
    b.emit(Op::Str, merged, Operand::none(), full);
}

Access read_operand(Builder& b, const x86::Operand& op)
{
    if (auto* r = std::get_if<RegRef>(&op))
        return {read_reg(b, *r), std::nullopt};
    if (auto* imm = std::get_if<ImmRef>(&op))
        return {Operand::of_const(imm->value, imm->size_bits), std::nullopt};
    const MemRef& m = std::get<MemRef>(op);
    Operand ea = effective_address(b, m);
    Operand v = b.emit_to_fresh(Op::Ldm, ea, Operand::none(), m.size_bits);
    return {v, ea};
}

// Address-only variant used when the old value is not needed.
Access locate_operand(Builder& b, const x86::Operand& op)
{
    if (std::holds_alternative<MemRef>(op))
        return {Operand::none(), effective_address(b, std::get<MemRef>(op))};
    return {Operand::none(), std::nullopt};
}

void write_operand(Builder& b, const x86::Operand& op, const Access& where, Operand value)
{
    if (auto* r = std::get_if<RegRef>(&op)) {
        write_reg(b, *r, value);
        return;
    }
    if (std::holds_alternative<MemRef>(op)) {
        b.emit(Op::Stm, value, Operand::none(), *where.ea);
        return;
    }
    fail(Err::UnliftableInstruction, "write to immediate operand");
}

// ---- flags ---------------------------------------------------------------

Operand flag(il::Reg r) { return Operand::of_reg(r); }

// Parity of the low result byte: the visible XOR tree over all 8 bits,
// inverted (PF is set on even parity).
void emit_parity(Builder& b, Operand result)
{
    Operand low = result.size_bits == 8
                      ? result
                      : b.narrow(result, 0xFF, 8);
    auto bit = [&](uint32_t n) {
        return b.emit_to_fresh(Op::Shr, low, Operand::of_const(n, 8), 8);
    };
    // Explicit sequencing: the temp numbering is part of the output format.
    Operand b7 = bit(7);
    Operand b6 = bit(6);
    Operand x76 = b.emit_to_fresh(Op::Xor, b7, b6, 8);
    Operand b5 = bit(5);
    Operand b4 = bit(4);
    Operand x54 = b.emit_to_fresh(Op::Xor, b5, b4, 8);
    Operand x7654 = b.emit_to_fresh(Op::Xor, x76, x54, 8);
    Operand b3 = bit(3);
    Operand b2 = bit(2);
    Operand x32 = b.emit_to_fresh(Op::Xor, b3, b2, 8);
    Operand b1 = bit(1);
    Operand x10 = b.emit_to_fresh(Op::Xor, b1, low, 8);
    Operand x3210 = b.emit_to_fresh(Op::Xor, x32, x10, 8);
    Operand all = b.emit_to_fresh(Op::Xor, x7654, x3210, 8);
    Operand odd = b.narrow(all, 1, 1);
    b.emit(Op::Not, odd, Operand::none(), flag(il::Reg::Pf));
}

void emit_zf(Builder& b, Operand result)
{
    b.emit(Op::Eq, result, Operand::of_const(0, result.size_bits), flag(il::Reg::Zf));
}

void emit_sf(Builder& b, Operand result)
{
    uint8_t w = result.size_bits;
    Operand top = b.emit_to_fresh(Op::Shr, result, Operand::of_const(w - 1u, w), w);
    Operand bit = b.emit_to_fresh(Op::And, Operand::of_const(1, w), top, w);
    b.emit(Op::Eq, Operand::of_const(1, w), bit, flag(il::Reg::Sf));
}

// AF is the bit-4 carry/borrow: bit 4 of a ^ b ^ result.
void emit_af(Builder& b, Operand a, Operand bop, Operand result)
{
    uint8_t w = result.size_bits;
    Operand axb = b.emit_to_fresh(Op::Xor, a, bop, w);
    Operand mix = b.emit_to_fresh(Op::Xor, result, axb, w);
    Operand bit4 = b.emit_to_fresh(Op::And, Operand::of_const(0x10, w), mix, w);
    b.emit(Op::Eq, Operand::of_const(0x10, w), bit4, flag(il::Reg::Af));
}

void set_flag_const(Builder& b, il::Reg r, uint32_t v)
{
    b.emit(Op::Str, Operand::of_const(v, 1), Operand::none(), flag(r));
}

// Flags of a - b, with `result` already computed. CF is the unsigned
// borrow, OF the signed overflow (bit 31 of (a^b) & (a^result)).
void emit_sub_flags(Builder& b, Operand a, Operand bop, Operand result, bool keep_cf)
{
    uint8_t w = result.size_bits;
    if (!keep_cf)
        b.emit(Op::Lt, a, bop, flag(il::Reg::Cf));
    emit_parity(b, result);
    emit_af(b, a, bop, result);
    emit_zf(b, result);
    emit_sf(b, result);
    Operand axb = b.emit_to_fresh(Op::Xor, a, bop, w);
    Operand axr = b.emit_to_fresh(Op::Xor, a, result, w);
    Operand both = b.emit_to_fresh(Op::And, axb, axr, w);
    Operand top = b.emit_to_fresh(Op::Shr, both, Operand::of_const(w - 1u, w), w);
    b.emit(Op::Eq, Operand::of_const(1, w), top, flag(il::Reg::Of));
}

void emit_add_flags(Builder& b, Operand a, Operand bop, Operand result, bool keep_cf)
{
    uint8_t w = result.size_bits;
    if (!keep_cf)
        b.emit(Op::Lt, result, a, flag(il::Reg::Cf)); // carry iff wrapped below a
    emit_parity(b, result);
    emit_af(b, a, bop, result);
    emit_zf(b, result);
    emit_sf(b, result);
    Operand axr = b.emit_to_fresh(Op::Xor, a, result, w);
    Operand bxr = b.emit_to_fresh(Op::Xor, bop, result, w);
    Operand both = b.emit_to_fresh(Op::And, axr, bxr, w);
    Operand top = b.emit_to_fresh(Op::Shr, both, Operand::of_const(w - 1u, w), w);
    b.emit(Op::Eq, Operand::of_const(1, w), top, flag(il::Reg::Of));
}

// Logic ops clear CF and OF; AF is architecturally undefined and pinned
// to 0 so the concrete and symbolic sides agree.
void emit_logic_flags(Builder& b, Operand result)
{
    set_flag_const(b, il::Reg::Cf, 0);
    emit_parity(b, result);
    set_flag_const(b, il::Reg::Af, 0);
    emit_zf(b, result);
    emit_sf(b, result);
    set_flag_const(b, il::Reg::Of, 0);
}

// ---- condition codes -----------------------------------------------------

Operand condition(Builder& b, uint8_t cc)
{
    auto one = [&](il::Reg r) { return Operand::of_reg(r); };
    bool negate = cc & 1;
    Operand base;
    switch (cc >> 1) {
        case 0: base = one(il::Reg::Of); break;
        case 1: base = one(il::Reg::Cf); break;
        case 2: base = one(il::Reg::Zf); break;
        case 3: // CF | ZF
            base = b.emit_to_fresh(Op::Or, one(il::Reg::Cf), one(il::Reg::Zf), 1);
            break;
        case 4: base = one(il::Reg::Sf); break;
        case 5: base = one(il::Reg::Pf); break;
        case 6: // SF ^ OF
            base = b.emit_to_fresh(Op::Xor, one(il::Reg::Sf), one(il::Reg::Of), 1);
            break;
        case 7: { // ZF | (SF ^ OF)
            Operand so = b.emit_to_fresh(Op::Xor, one(il::Reg::Sf), one(il::Reg::Of), 1);
            base = b.emit_to_fresh(Op::Or, one(il::Reg::Zf), so, 1);
            break;
        }
    }
    if (negate)
        return b.emit_to_fresh(Op::Not, base, Operand::none(), 1);
    return base;
}

// ---- shifts ----------------------------------------------------------------

Operand blend_flag(Builder& b, il::Reg f, Operand keep_old, Operand computed)
{
    // new = (old & keep_old) | (computed & ~keep_old); all 1-bit values.
    Operand kept = b.emit_to_fresh(Op::And, Operand::of_reg(f), keep_old, 1);
    Operand sel = b.emit_to_fresh(Op::Not, keep_old, Operand::none(), 1);
    Operand picked = b.emit_to_fresh(Op::And, computed, sel, 1);
    return b.emit_to_fresh(Op::Or, kept, picked, 1);
}

void lift_shift_imm(Builder& b, Mn mn, const x86::Operand& dst, uint32_t count)
{
    Access acc = read_operand(b, dst);
    Operand a = acc.value;
    uint8_t w = a.size_bits;
    uint32_t k = count & 31;
    if (k == 0) {
        b.emit(Op::Nop, Operand::none(), Operand::none(), Operand::none());
        return;
    }

    Operand result;
    if (mn == Mn::Shl) {
        result = b.emit_to_fresh(Op::Shl, a, Operand::of_const(k, w), w);
    } else if (mn == Mn::Shr) {
        result = b.emit_to_fresh(Op::Shr, a, Operand::of_const(k, w), w);
    } else { // Sar
        Operand logical = b.emit_to_fresh(Op::Shr, a, Operand::of_const(k, w), w);
        Operand sign = b.emit_to_fresh(Op::Shr, a, Operand::of_const(w - 1u, w), w);
        Operand neg = b.emit_to_fresh(Op::Sub, Operand::of_const(0, w), sign, w);
        uint32_t mask_all = w == 32 ? 0xFFFFFFFFu : (1u << w) - 1;
        uint32_t fill = k >= w ? mask_all : (mask_all << (w - k)) & mask_all;
        Operand filled = b.emit_to_fresh(Op::And, neg, Operand::of_const(fill, w), w);
        result = b.emit_to_fresh(Op::Or, logical, filled, w);
    }

    // CF: the last bit shifted out.
    if (mn == Mn::Shl) {
        if (k > w) {
            set_flag_const(b, il::Reg::Cf, 0);
        } else {
            Operand t = b.emit_to_fresh(Op::Shr, a, Operand::of_const(w - k, w), w);
            Operand bit = b.emit_to_fresh(Op::And, Operand::of_const(1, w), t, w);
            b.emit(Op::Eq, Operand::of_const(1, w), bit, flag(il::Reg::Cf));
        }
    } else {
        uint32_t pos = k - 1;
        if (mn == Mn::Sar && k >= w)
            pos = w - 1u;
        if (mn == Mn::Shr && k > w) {
            set_flag_const(b, il::Reg::Cf, 0);
        } else {
            Operand t = b.emit_to_fresh(Op::Shr, a, Operand::of_const(pos, w), w);
            Operand bit = b.emit_to_fresh(Op::And, Operand::of_const(1, w), t, w);
            b.emit(Op::Eq, Operand::of_const(1, w), bit, flag(il::Reg::Cf));
        }
    }

    emit_parity(b, result);
    set_flag_const(b, il::Reg::Af, 0);
    emit_zf(b, result);
    emit_sf(b, result);

    // OF is architectural for count 1, pinned to 0 otherwise.
    if (k == 1) {
        if (mn == Mn::Shl) {
            Operand t = b.emit_to_fresh(Op::Xor, a, result, w);
            Operand top = b.emit_to_fresh(Op::Shr, t, Operand::of_const(w - 1u, w), w);
            b.emit(Op::Eq, Operand::of_const(1, w), top, flag(il::Reg::Of));
        } else if (mn == Mn::Shr) {
            Operand top = b.emit_to_fresh(Op::Shr, a, Operand::of_const(w - 1u, w), w);
            b.emit(Op::Eq, Operand::of_const(1, w), top, flag(il::Reg::Of));
        } else {
            set_flag_const(b, il::Reg::Of, 0);
        }
    } else {
        set_flag_const(b, il::Reg::Of, 0);
    }

    write_operand(b, dst, acc, result);
}

void lift_shift_cl(Builder& b, Mn mn, const x86::Operand& dst)
{
    Access acc = read_operand(b, dst);
    Operand a = acc.value;
    uint8_t w = a.size_bits;

    // count = CL & 31, widened to the operand width.
    Operand cl = read_reg(b, RegRef{Gpr::Ecx, 8, false});
    Operand cnt8 = b.emit_to_fresh(Op::And, cl, Operand::of_const(31, 8), 8);
    Operand cnt = w == 8 ? cnt8 : b.emit_to_fresh(Op::Str, cnt8, Operand::none(), w);

    Operand result;
    Operand cf_computed;

    if (mn == Mn::Sar && w == 8) {
        // Do the arithmetic shift at 32 bits so counts past the width
        // still fill with the sign.
        Operand wide = b.emit_to_fresh(Op::Str, a, Operand::none(), 32);
        Operand sign = b.emit_to_fresh(Op::Shr, wide, c32(7), 32);
        Operand bit = b.emit_to_fresh(Op::And, c32(1), sign, 32);
        Operand neg = b.emit_to_fresh(Op::Sub, c32(0), bit, 32);
        Operand upper = b.emit_to_fresh(Op::And, neg, c32(0xFFFFFF00), 32);
        Operand sext = b.emit_to_fresh(Op::Or, wide, upper, 32);
        Operand cnt32 = b.emit_to_fresh(Op::Str, cnt8, Operand::none(), 32);
        Operand logical = b.emit_to_fresh(Op::Shr, sext, cnt32, 32);
        // Arithmetic fill for the 32-bit value.
        Operand wsub = b.emit_to_fresh(Op::Sub, c32(32), cnt32, 32);
        Operand fill0 = b.emit_to_fresh(Op::Shl, c32(0xFFFFFFFF), wsub, 32);
        Operand filled = b.emit_to_fresh(Op::And, neg, fill0, 32);
        Operand res32 = b.emit_to_fresh(Op::Or, logical, filled, 32);
        result = b.emit_to_fresh(Op::Str, res32, Operand::none(), 8);
        // CF: bit (cnt-1) of the sign-extended value.
        Operand pos = b.emit_to_fresh(Op::Sub, cnt32, c32(1), 32);
        Operand t = b.emit_to_fresh(Op::Shr, sext, pos, 32);
        Operand cbit = b.emit_to_fresh(Op::And, c32(1), t, 32);
        cf_computed = b.emit_to_fresh(Op::Eq, c32(1), cbit, 1);
    } else if (mn == Mn::Shl) {
        result = b.emit_to_fresh(Op::Shl, a, cnt, w);
        Operand pos = b.emit_to_fresh(Op::Sub, Operand::of_const(w, w), cnt, w);
        Operand t = b.emit_to_fresh(Op::Shr, a, pos, w);
        Operand cbit = b.emit_to_fresh(Op::And, Operand::of_const(1, w), t, w);
        cf_computed = b.emit_to_fresh(Op::Eq, Operand::of_const(1, w), cbit, 1);
    } else if (mn == Mn::Shr) {
        result = b.emit_to_fresh(Op::Shr, a, cnt, w);
        Operand pos = b.emit_to_fresh(Op::Sub, cnt, Operand::of_const(1, w), w);
        Operand t = b.emit_to_fresh(Op::Shr, a, pos, w);
        Operand cbit = b.emit_to_fresh(Op::And, Operand::of_const(1, w), t, w);
        cf_computed = b.emit_to_fresh(Op::Eq, Operand::of_const(1, w), cbit, 1);
    } else { // Sar, 32-bit
        Operand logical = b.emit_to_fresh(Op::Shr, a, cnt, w);
        Operand sign = b.emit_to_fresh(Op::Shr, a, Operand::of_const(w - 1u, w), w);
        Operand neg = b.emit_to_fresh(Op::Sub, Operand::of_const(0, w), sign, w);
        Operand wsub = b.emit_to_fresh(Op::Sub, Operand::of_const(w, w), cnt, w);
        Operand fill0 = b.emit_to_fresh(Op::Shl, Operand::of_const(w == 32 ? 0xFFFFFFFFu : 0xFFu, w),
                                        wsub, w);
        Operand filled = b.emit_to_fresh(Op::And, neg, fill0, w);
        result = b.emit_to_fresh(Op::Or, logical, filled, w);
        Operand pos = b.emit_to_fresh(Op::Sub, cnt, Operand::of_const(1, w), w);
        Operand t = b.emit_to_fresh(Op::Shr, a, pos, w);
        Operand cbit = b.emit_to_fresh(Op::And, Operand::of_const(1, w), t, w);
        cf_computed = b.emit_to_fresh(Op::Eq, Operand::of_const(1, w), cbit, 1);
    }

    // Count 0 leaves every flag unchanged.
    Operand zero_count = b.emit_to_fresh(Op::Eq, cnt8, Operand::of_const(0, 8), 1);

    // Computed flag values.
    Operand zf_c = b.emit_to_fresh(Op::Eq, result, Operand::of_const(0, w), 1);
    Operand topbit = b.emit_to_fresh(Op::Shr, result, Operand::of_const(w - 1u, w), w);
    Operand topbit1 = b.emit_to_fresh(Op::And, Operand::of_const(1, w), topbit, w);
    Operand sf_c = b.emit_to_fresh(Op::Eq, Operand::of_const(1, w), topbit1, 1);

    Operand low = w == 8 ? result : b.narrow(result, 0xFF, 8);
    Operand par = low;
    Operand acc_x = b.emit_to_fresh(Op::Shr, par, Operand::of_const(1, 8), 8);
    acc_x = b.emit_to_fresh(Op::Xor, par, acc_x, 8);
    Operand t2 = b.emit_to_fresh(Op::Shr, acc_x, Operand::of_const(2, 8), 8);
    acc_x = b.emit_to_fresh(Op::Xor, acc_x, t2, 8);
    Operand t4 = b.emit_to_fresh(Op::Shr, acc_x, Operand::of_const(4, 8), 8);
    acc_x = b.emit_to_fresh(Op::Xor, acc_x, t4, 8);
    Operand odd = b.narrow(acc_x, 1, 1);
    Operand pf_c = b.emit_to_fresh(Op::Not, odd, Operand::none(), 1);

    // OF: architectural only for count 1, else 0.
    Operand one_count = b.emit_to_fresh(Op::Eq, cnt8, Operand::of_const(1, 8), 1);
    Operand of_arch;
    if (mn == Mn::Shl) {
        Operand t = b.emit_to_fresh(Op::Xor, a, result, w);
        Operand top = b.emit_to_fresh(Op::Shr, t, Operand::of_const(w - 1u, w), w);
        Operand bit = b.emit_to_fresh(Op::And, Operand::of_const(1, w), top, w);
        of_arch = b.emit_to_fresh(Op::Eq, Operand::of_const(1, w), bit, 1);
    } else if (mn == Mn::Shr) {
        Operand top = b.emit_to_fresh(Op::Shr, a, Operand::of_const(w - 1u, w), w);
        Operand bit = b.emit_to_fresh(Op::And, Operand::of_const(1, w), top, w);
        of_arch = b.emit_to_fresh(Op::Eq, Operand::of_const(1, w), bit, 1);
    } else {
        of_arch = Operand::of_const(0, 1);
    }
    Operand of_c = b.emit_to_fresh(Op::And, one_count, of_arch, 1);
    Operand af_c = Operand::of_const(0, 1);

    b.emit(Op::Str, blend_flag(b, il::Reg::Cf, zero_count, cf_computed), Operand::none(),
           flag(il::Reg::Cf));
    b.emit(Op::Str, blend_flag(b, il::Reg::Pf, zero_count, pf_c), Operand::none(),
           flag(il::Reg::Pf));
    b.emit(Op::Str, blend_flag(b, il::Reg::Af, zero_count, af_c), Operand::none(),
           flag(il::Reg::Af));
    b.emit(Op::Str, blend_flag(b, il::Reg::Zf, zero_count, zf_c), Operand::none(),
           flag(il::Reg::Zf));
    b.emit(Op::Str, blend_flag(b, il::Reg::Sf, zero_count, sf_c), Operand::none(),
           flag(il::Reg::Sf));
    b.emit(Op::Str, blend_flag(b, il::Reg::Of, zero_count, of_c), Operand::none(),
           flag(il::Reg::Of));

    // Shift by 0 is the identity, so the unconditional write is safe.
    write_operand(b, dst, acc, result);
}

// ---- stack helpers ---------------------------------------------------------

void emit_push_value(Builder& b, Operand value)
{
    Operand esp = Operand::of_reg(il::Reg::Esp);
    Operand old_sp = b.emit_to_fresh(Op::Str, esp, Operand::none(), 32);
    Operand new_sp = b.emit_to_fresh(Op::Sub, old_sp, c32(4), 32);
    b.emit(Op::Str, new_sp, Operand::none(), esp);
    b.emit(Op::Stm, value, Operand::none(), new_sp);
}

} // namespace

LiftedBlock lift(const x86::Instruction& ins)
{
    Builder b(ins.addr);
    const auto& ops = ins.operands;
    uint32_t next_addr = ins.addr + ins.length;

    auto target_of = [&]() { return c32(ins.branch_target()); };

    switch (ins.mnemonic) {
        case Mn::Nop:
            b.emit(Op::Nop, Operand::none(), Operand::none(), Operand::none());
            break;

        case Mn::Mov: {
            Access dst = locate_operand(b, ops[0]);
            Access src = read_operand(b, ops[1]);
            write_operand(b, ops[0], dst, src.value);
            break;
        }
        case Mn::Lea: {
            Operand ea = effective_address(b, std::get<MemRef>(ops[1]));
            write_reg(b, std::get<RegRef>(ops[0]), ea);
            break;
        }
        case Mn::Add: case Mn::Sub: case Mn::And: case Mn::Or: case Mn::Xor: {
            Access dst = read_operand(b, ops[0]);
            Access src = read_operand(b, ops[1]);
            uint8_t w = dst.value.size_bits;
            Op op = ins.mnemonic == Mn::Add   ? Op::Add
                    : ins.mnemonic == Mn::Sub ? Op::Sub
                    : ins.mnemonic == Mn::And ? Op::And
                    : ins.mnemonic == Mn::Or  ? Op::Or
                                              : Op::Xor;
            Operand result = b.emit_to_fresh(op, dst.value, src.value, w);
            if (ins.mnemonic == Mn::Add) {
                Operand flag_result = b.emit_to_fresh(op, dst.value, src.value, w);
                emit_add_flags(b, dst.value, src.value, flag_result, false);
            } else if (ins.mnemonic == Mn::Sub) {
                Operand flag_result = b.emit_to_fresh(op, dst.value, src.value, w);
                emit_sub_flags(b, dst.value, src.value, flag_result, false);
            } else {
                emit_logic_flags(b, result);
            }
            write_operand(b, ops[0], dst, result);
            break;
        }
        case Mn::Cmp: {
            Access a = read_operand(b, ops[0]);
            Access c = read_operand(b, ops[1]);
            uint8_t w = a.value.size_bits;
            Operand flag_result = b.emit_to_fresh(Op::Sub, a.value, c.value, w);
            emit_sub_flags(b, a.value, c.value, flag_result, false);
            break;
        }
        case Mn::Test: {
            Access a = read_operand(b, ops[0]);
            Access c = read_operand(b, ops[1]);
            uint8_t w = a.value.size_bits;
            Operand result = b.emit_to_fresh(Op::And, a.value, c.value, w);
            emit_logic_flags(b, result);
            break;
        }
        case Mn::Inc: case Mn::Dec: {
            Access dst = read_operand(b, ops[0]);
            uint8_t w = dst.value.size_bits;
            Operand one = Operand::of_const(1, w);
            if (ins.mnemonic == Mn::Inc) {
                Operand result = b.emit_to_fresh(Op::Add, dst.value, one, w);
                Operand flag_result = b.emit_to_fresh(Op::Add, dst.value, one, w);
                emit_add_flags(b, dst.value, one, flag_result, /*keep_cf=*/true);
                write_operand(b, ops[0], dst, result);
            } else {
                Operand result = b.emit_to_fresh(Op::Sub, dst.value, one, w);
                Operand flag_result = b.emit_to_fresh(Op::Sub, dst.value, one, w);
                emit_sub_flags(b, dst.value, one, flag_result, /*keep_cf=*/true);
                write_operand(b, ops[0], dst, result);
            }
            break;
        }
        case Mn::Neg: {
            Access dst = read_operand(b, ops[0]);
            uint8_t w = dst.value.size_bits;
            Operand zero = Operand::of_const(0, w);
            Operand result = b.emit_to_fresh(Op::Sub, zero, dst.value, w);
            Operand flag_result = b.emit_to_fresh(Op::Sub, zero, dst.value, w);
            emit_sub_flags(b, zero, dst.value, flag_result, false);
            write_operand(b, ops[0], dst, result);
            break;
        }
        case Mn::Not: {
            Access dst = read_operand(b, ops[0]);
            Operand result = b.emit_to_fresh(Op::Not, dst.value, Operand::none(),
                                             dst.value.size_bits);
            write_operand(b, ops[0], dst, result);
            break;
        }
        case Mn::Shl: case Mn::Shr: case Mn::Sar: {
            if (auto* imm = std::get_if<ImmRef>(&ops[1]))
                lift_shift_imm(b, ins.mnemonic, ops[0], imm->value);
            else
                lift_shift_cl(b, ins.mnemonic, ops[0]);
            break;
        }
        case Mn::Xchg: {
            Access a = read_operand(b, ops[0]);
            Access c = read_operand(b, ops[1]);
            write_operand(b, ops[0], a, c.value);
            write_operand(b, ops[1], c, a.value);
            break;
        }
        case Mn::Push: {
            Access src = read_operand(b, ops[0]);
            emit_push_value(b, src.value);
            break;
        }
        case Mn::Pop: {
            Operand old_sp = b.emit_to_fresh(Op::Str, Operand::of_reg(il::Reg::Esp),
                                             Operand::none(), 32);
            Operand value = b.emit_to_fresh(Op::Ldm, old_sp, Operand::none(), 32);
            Operand new_sp = b.emit_to_fresh(Op::Add, old_sp, c32(4), 32);
            b.emit(Op::Str, new_sp, Operand::none(), Operand::of_reg(il::Reg::Esp));
            // The effective address of a pop destination sees the new ESP.
            Access dst = locate_operand(b, ops[0]);
            write_operand(b, ops[0], dst, value);
            break;
        }
        case Mn::Ret: {
            // Return-address temp is V_01 in the canonical expansion.
            b.skip_temp();
            Operand esp = Operand::of_reg(il::Reg::Esp);
            Operand ret_addr = b.emit_to_fresh(Op::Ldm, esp, Operand::none(), 32);
            b.emit(Op::Add, esp, c32(4), esp);
            b.emit(Op::Jcc, Operand::of_const(1, 1), Operand::none(), ret_addr);
            break;
        }
        case Mn::Leave: {
            // mov esp, ebp
            Operand frame = b.emit_to_fresh(Op::Str, Operand::of_reg(il::Reg::Ebp),
                                            Operand::none(), 32);
            b.emit(Op::Str, frame, Operand::none(), Operand::of_reg(il::Reg::Esp));
            // pop ebp
            Operand old_sp = b.emit_to_fresh(Op::Str, Operand::of_reg(il::Reg::Esp),
                                             Operand::none(), 32);
            Operand value = b.emit_to_fresh(Op::Ldm, old_sp, Operand::none(), 32);
            Operand new_sp = b.emit_to_fresh(Op::Add, old_sp, c32(4), 32);
            b.emit(Op::Str, new_sp, Operand::none(), Operand::of_reg(il::Reg::Esp));
            b.emit(Op::Str, value, Operand::none(), Operand::of_reg(il::Reg::Ebp));
            break;
        }
        case Mn::Jmp:
            b.emit(Op::Jcc, Operand::of_const(1, 1), Operand::none(), target_of());
            break;
        case Mn::Call: {
            emit_push_value(b, c32(next_addr));
            b.emit(Op::Jcc, Operand::of_const(1, 1), Operand::none(), target_of());
            break;
        }
        default: {
            if (x86::is_jcc(ins.mnemonic)) {
                Operand cond = condition(b, x86::cc_index(ins.mnemonic));
                b.emit(Op::Jcc, cond, Operand::none(), target_of());
                break;
            }
            fail(Err::UnliftableInstruction, x86::to_string(ins));
        }
    }

    LiftedBlock block{ins, b.take()};
    if (block.il.empty())
        fail(Err::Internal, "empty lift for " + x86::to_string(ins));
    for (const il::Instruction& i : block.il)
        il::validate(i);
    return block;
}

} // namespace resmt
