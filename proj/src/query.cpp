#include "resmt/query.hpp"

#include <json.hpp>

#include "resmt/errors.hpp"

namespace resmt {

namespace {

const std::pair<const char*, il::Reg> kQueryRegs[] = {
    {"EAX", il::Reg::Eax}, {"EBX", il::Reg::Ebx}, {"ECX", il::Reg::Ecx},
    {"EDX", il::Reg::Edx}, {"ESI", il::Reg::Esi}, {"EDI", il::Reg::Edi},
    {"EBP", il::Reg::Ebp}, {"ESP", il::Reg::Esp},
};

bool valid_input_name(const std::string& s)
{
    if (s.empty())
        return false;
    if (!(isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_'))
        return false;
    for (char ch : s)
        if (!(isalnum(static_cast<unsigned char>(ch)) || ch == '_'))
            return false;
    return true;
}

uint32_t parse_value(const std::string& text)
{
    if (text.empty())
        fail(Err::QueryParseError, "empty value");
    try {
        size_t pos = 0;
        int base = text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')
                       ? 16
                       : 10;
        unsigned long long v = std::stoull(text, &pos, base);
        if (pos != text.size())
            fail(Err::QueryParseError, "trailing characters in value '" + text + "'");
        if (v > 0xFFFFFFFFull)
            fail(Err::QueryParseError, "value '" + text + "' exceeds 32 bits");
        return static_cast<uint32_t>(v);
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(Err::QueryParseError, "bad value '" + text + "'");
    }
}

} // namespace

const char* cmp_op_text(CmpOp op)
{
    switch (op) {
        case CmpOp::Eq: return "==";
        case CmpOp::Ne: return "!=";
        case CmpOp::Lt: return "<";
        case CmpOp::Gt: return ">";
    }
    return "?";
}

REQuery parse_query(const std::string& json_text)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const std::exception& e) {
        fail(Err::QueryParseError, std::string("bad JSON: ") + e.what());
    }
    if (!doc.is_object())
        fail(Err::QueryParseError, "query must be a JSON object");
    for (const char* field : {"input", "register", "operation", "value"})
        if (!doc.contains(field))
            fail(Err::QueryParseError, std::string("missing field '") + field + "'");

    REQuery q;
    if (!doc["input"].is_array())
        fail(Err::QueryParseError, "'input' must be an array of names");
    for (const auto& item : doc["input"]) {
        if (!item.is_string())
            fail(Err::QueryParseError, "'input' entries must be strings");
        std::string name = item.get<std::string>();
        if (!valid_input_name(name))
            fail(Err::QueryParseError, "bad input name '" + name + "'");
        for (const auto& seen : q.input)
            if (seen == name)
                fail(Err::QueryParseError, "duplicate input name '" + name + "'");
        q.input.push_back(std::move(name));
    }

    std::string reg = doc["register"].get<std::string>();
    bool found = false;
    for (const auto& [name, value] : kQueryRegs) {
        if (reg == name) {
            q.reg = value;
            found = true;
            break;
        }
    }
    if (!found)
        fail(Err::QueryParseError, "unknown register '" + reg + "'");

    std::string op = doc["operation"].get<std::string>();
    if (op == "==")
        q.op = CmpOp::Eq;
    else if (op == "!=")
        q.op = CmpOp::Ne;
    else if (op == "<")
        q.op = CmpOp::Lt;
    else if (op == ">")
        q.op = CmpOp::Gt;
    else
        fail(Err::QueryParseError, "unknown operation '" + op + "'");

    if (doc["value"].is_number_unsigned())
        q.value = doc["value"].get<uint32_t>();
    else if (doc["value"].is_string())
        q.value = parse_value(doc["value"].get<std::string>());
    else
        fail(Err::QueryParseError, "'value' must be a string or unsigned number");

    if (doc.contains("signed"))
        q.signed_cmp = doc["signed"].get<bool>();
    return q;
}

std::string render_query(const REQuery& q)
{
    nlohmann::json doc;
    doc["input"] = q.input;
    for (const auto& [name, value] : kQueryRegs)
        if (value == q.reg)
            doc["register"] = name;
    doc["operation"] = cmp_op_text(q.op);
    doc["value"] = std::to_string(q.value);
    if (q.signed_cmp)
        doc["signed"] = true;
    return doc.dump(2);
}

smt::TermId goal_term(smt::TermStore& store, const REQuery& q,
                      const std::map<il::Reg, smt::TermId>& outputs)
{
    auto it = outputs.find(q.reg);
    if (it == outputs.end())
        fail(Err::Internal, "query register has no output binding");
    smt::TermId out = it->second;
    smt::TermId val = store.constant(32, q.value);
    if (q.signed_cmp && (q.op == CmpOp::Lt || q.op == CmpOp::Gt)) {
        // Signed compare via sign-bit flip: a <s b == (a ^ 2^31) <u (b ^ 2^31).
        smt::TermId bias = store.constant(32, 0x80000000u);
        out = store.op2(smt::TOp::Xor, out, bias);
        val = store.op2(smt::TOp::Xor, val, bias);
    }
    switch (q.op) {
        case CmpOp::Eq: return store.eq(out, val);
        case CmpOp::Ne: return store.op_not(store.eq(out, val));
        case CmpOp::Lt: return store.ult(out, val);
        case CmpOp::Gt: return store.ult(val, out);
    }
    fail(Err::Internal, "bad cmp op");
}

} // namespace resmt
