#pragma once

#include <vector>

#include "resmt/il.hpp"
#include "resmt/x86.hpp"

namespace resmt {

/// One native instruction with its IL expansion. The IL carries
/// addr.native == source.addr and addr.sub == 0..n-1; temporaries are
/// numbered per native instruction and written once each.
struct LiftedBlock {
    x86::Instruction source;
    std::vector<il::Instruction> il;
};

/// Lowers one decoded instruction to IL, including exact CPU-flag
/// computation. Throws UnliftableInstruction for decodable-but-untemplated
/// forms.
LiftedBlock lift(const x86::Instruction& ins);

} // namespace resmt
