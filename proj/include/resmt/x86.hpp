#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "resmt/loader.hpp"

namespace resmt::x86 {

/// General-purpose registers in x86 encoding order.
enum class Gpr : uint8_t { Eax, Ecx, Edx, Ebx, Esp, Ebp, Esi, Edi };

struct RegRef {
    Gpr gpr;
    uint8_t size_bits = 32; // 8 or 32 (16-bit needs a prefix, unsupported)
    bool high8 = false;     // AH/CH/DH/BH

    bool operator==(const RegRef&) const = default;
};

struct ImmRef {
    uint32_t value = 0;
    uint8_t size_bits = 32;

    bool operator==(const ImmRef&) const = default;
};

struct MemRef {
    std::optional<Gpr> base;
    std::optional<Gpr> index; // never ESP
    uint8_t scale = 1;        // 1, 2, 4, 8
    int32_t disp = 0;
    uint8_t size_bits = 32; // access width

    bool operator==(const MemRef&) const = default;
};

using Operand = std::variant<RegRef, ImmRef, MemRef>;

enum class Mn : uint8_t {
    Mov, Add, Sub, And, Or, Xor, Cmp, Test, Lea,
    Push, Pop, Inc, Dec, Neg, Not,
    Shl, Shr, Sar, Xchg, Nop,
    Jmp, Call, Ret, Leave,
    // Jcc in condition-code order (tttn): keep contiguous.
    Jo, Jno, Jb, Jae, Je, Jne, Jbe, Ja,
    Js, Jns, Jp, Jnp, Jl, Jge, Jle, Jg,
};

inline bool is_jcc(Mn m) { return m >= Mn::Jo && m <= Mn::Jg; }
inline uint8_t cc_index(Mn m) { return uint8_t(m) - uint8_t(Mn::Jo); }
inline Mn jcc_from_cc(uint8_t cc) { return Mn(uint8_t(Mn::Jo) + (cc & 0xF)); }
/// The Jcc with the negated condition (JZ <-> JNZ and so on).
inline Mn opposite_jcc(Mn m) { return jcc_from_cc(cc_index(m) ^ 1); }

/// One decoded machine instruction. For Jmp/Jcc/Call the single operand is
/// an ImmRef holding the absolute target address.
struct Instruction {
    uint32_t addr = 0;
    Mn mnemonic = Mn::Nop;
    std::vector<Operand> operands;
    uint8_t length = 0;
    std::vector<uint8_t> raw;

    bool is_branch() const
    {
        return mnemonic == Mn::Jmp || mnemonic == Mn::Call || is_jcc(mnemonic);
    }
    uint32_t branch_target() const { return std::get<ImmRef>(operands.at(0)).value; }
};

const char* mnemonic_name(Mn m); // lowercase, e.g. "mov"
const char* gpr_name(Gpr r);     // "eax"
std::string reg_text(const RegRef& r);
std::string to_string(const Operand& op);
std::string to_string(const Instruction& ins); // "mov eax, [ebp+8]"

/// Decodes one instruction at a virtual address inside the image.
/// Throws UnsupportedOpcode / TruncatedInstruction.
Instruction decode_one(const FunctionImage& image, uint32_t addr);

/// Emits the canonical encoding; decode_one(encode(i), i.addr) reproduces
/// mnemonic and operands. Branches pick the shortest displacement form
/// unless force_near_branches pins the rel32 form (for layout fixpoints).
std::vector<uint8_t> encode(const Instruction& ins, bool force_near_branches = false);

} // namespace resmt::x86
