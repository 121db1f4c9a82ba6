#pragma once

#include <map>
#include <string>
#include <vector>

#include "resmt/il.hpp"
#include "resmt/term.hpp"

namespace resmt {

enum class CmpOp : uint8_t { Eq, Ne, Lt, Gt };

/// The reverse-engineering goal: a comparison on one output register,
/// with the function's symbolic argument names.
struct REQuery {
    std::vector<std::string> input;
    il::Reg reg = il::Reg::Eax; // GPRs only
    CmpOp op = CmpOp::Eq;
    uint32_t value = 0;
    bool signed_cmp = false; // optional "signed" field, default off

    bool operator==(const REQuery&) const = default;
};

/// Parses the JSON query file: {"input": [...], "register": "EAX",
/// "operation": "==", "value": "0"}. Value accepts decimal or 0x hex.
REQuery parse_query(const std::string& json_text);
std::string render_query(const REQuery& q);

const char* cmp_op_text(CmpOp op);

/// Builds the goal assertion over the declared output variables.
/// < and > compare unsigned unless the query set "signed".
smt::TermId goal_term(smt::TermStore& store, const REQuery& q,
                      const std::map<il::Reg, smt::TermId>& outputs);

} // namespace resmt
