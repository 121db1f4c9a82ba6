#include "resmt/smtlib.hpp"

#include <sstream>
#include <unordered_map>

#include "resmt/errors.hpp"

namespace resmt::smt {

const char* verdict_name(Verdict v)
{
    switch (v) {
        case Verdict::Sat: return "SAT";
        case Verdict::Unsat: return "UNSAT";
        case Verdict::Unknown: return "UNKNOWN";
        case Verdict::Timeout: return "TIMEOUT";
    }
    return "?";
}

std::map<il::Reg, TermId> bind_outputs(TermStore& store, const symex::Path& path,
                                       std::vector<TermId>& decls,
                                       std::vector<TermId>& assertions)
{
    static const il::Reg kOutputRegs[] = {
        il::Reg::Eax, il::Reg::Ebx, il::Reg::Ecx, il::Reg::Edx, il::Reg::Esi,
        il::Reg::Edi, il::Reg::Ebp, il::Reg::Esp, il::Reg::Eip,
    };
    static const char* kOutputNames[] = {
        "EAX_output", "EBX_output", "ECX_output", "EDX_output", "ESI_output",
        "EDI_output", "EBP_output", "ESP_output", "EIP_output",
    };

    std::map<il::Reg, TermId> outputs;
    for (size_t i = 0; i < std::size(kOutputRegs); ++i) {
        TermId var = store.var(kOutputNames[i], 32);
        TermId final_term = path.final_state.regs[size_t(kOutputRegs[i])];
        decls.push_back(var);
        assertions.push_back(store.eq(var, final_term));
        outputs.emplace(kOutputRegs[i], var);
    }
    return outputs;
}

PathFormula assemble_formula(const symex::Engine& engine, const symex::Path& path,
                             const REQuery& query)
{
    TermStore& store = engine.store();
    PathFormula out;
    Formula& f = out.formula;

    f.decls = engine.initial_decls();
    f.decls.insert(f.decls.end(), path.final_state.decls.begin(),
                   path.final_state.decls.end());

    for (const symex::Binding& b : path.final_state.trace)
        f.assertions.push_back(store.eq(b.var, b.value));
    for (TermId cond : path.final_state.path_condition)
        f.assertions.push_back(cond);

    out.outputs = bind_outputs(store, path, f.decls, f.assertions);
    f.goal = goal_term(store, query, out.outputs);
    return out;
}

// ---- emission --------------------------------------------------------------

namespace {

std::string bv_literal(uint16_t width, uint64_t value)
{
    if (width % 4 == 0) {
        static const char* digits = "0123456789abcdef";
        std::string out(width / 4, '0');
        for (int i = int(out.size()) - 1; i >= 0; --i) {
            out[size_t(i)] = digits[value & 0xF];
            value >>= 4;
        }
        return "#x" + out;
    }
    std::string bits(width, '0');
    for (int i = width - 1; i >= 0; --i) {
        bits[size_t(width - 1 - i)] = (value >> i) & 1 ? '1' : '0';
    }
    return "#b" + bits;
}

class Emitter {
  public:
    Emitter(const TermStore& store) : m_store(store) {}

    std::string term(TermId t)
    {
        const Node& n = m_store.node(t);
        auto it = m_named.find(t);
        if (it != m_named.end())
            return it->second;
        switch (n.kind) {
            case Kind::Const:
                return bv_literal(n.width, n.value);
            case Kind::Var:
            case Kind::ArrayVar:
                return m_store.name_text(n.name);
            case Kind::Op:
                return op_text(n);
            case Kind::Select:
                return "(select " + term(n.a) + " " + term(n.b) + ")";
            case Kind::Store:
                return "(store " + term(n.a) + " " + term(n.b) + " " + term(n.c) + ")";
            case Kind::Ite:
                return "(ite " + cond_text(n.a) + " " + term(n.b) + " " + term(n.c) + ")";
            case Kind::Extract: {
                uint16_t hi = uint16_t(n.value >> 16), lo = uint16_t(n.value & 0xFFFF);
                return "((_ extract " + std::to_string(hi) + " " + std::to_string(lo) +
                       ") " + term(n.a) + ")";
            }
            case Kind::Concat:
                return "(concat " + term(n.a) + " " + term(n.b) + ")";
        }
        fail(Err::Internal, "bad term kind");
    }

    // Boolean rendering of a 1-bit term, for asserts and ite conditions.
    std::string cond_text(TermId t)
    {
        const Node& n = m_store.node(t);
        if (n.kind == Kind::Op && n.op == TOp::Eq && !m_named.count(t))
            return "(= " + term(n.a) + " " + term(n.b) + ")";
        if (n.kind == Kind::Op && n.op == TOp::Ult && !m_named.count(t))
            return "(bvult " + term(n.a) + " " + term(n.b) + ")";
        if (n.kind == Kind::Op && n.op == TOp::Not && !m_named.count(t))
            return "(not " + cond_text(n.a) + ")";
        return "(= " + term(t) + " #b1)";
    }

    std::string assertion(TermId t)
    {
        return "(assert " + cond_text(t) + ")";
    }

    // A definitional assert (= var value); later references to `value`
    // print as `var`. Names register after emission, first name wins.
    std::string definition(TermId var, TermId value)
    {
        std::string text = "(assert (= " + term(var) + " " + term(value) + "))";
        const Node& n = m_store.node(value);
        if (n.kind != Kind::Const && n.kind != Kind::Var && n.kind != Kind::ArrayVar)
            m_named.emplace(value, m_store.name_text(m_store.node(var).name));
        return text;
    }

    bool is_definition(TermId t, TermId& var, TermId& value) const
    {
        const Node& n = m_store.node(t);
        if (n.kind == Kind::Op && n.op == TOp::Eq && m_store.node(n.a).kind == Kind::Var) {
            var = n.a;
            value = n.b;
            return true;
        }
        // Array versions: (= mem_k (store ...)).
        if (n.kind == Kind::Op && n.op == TOp::Eq &&
            m_store.node(n.a).kind == Kind::ArrayVar && m_store.node(n.a).name != 0) {
            var = n.a;
            value = n.b;
            return true;
        }
        return false;
    }

  private:
    std::string op_text(const Node& n)
    {
        switch (n.op) {
            case TOp::Add: return bin("bvadd", n);
            case TOp::Sub: return bin("bvsub", n);
            case TOp::Mul: return bin("bvmul", n);
            case TOp::Udiv: return bin("bvudiv", n);
            case TOp::Urem: return bin("bvurem", n);
            case TOp::Shl: return bin("bvshl", n);
            case TOp::Lshr: return bin("bvlshr", n);
            case TOp::And: return bin("bvand", n);
            case TOp::Or: return bin("bvor", n);
            case TOp::Xor: return bin("bvxor", n);
            case TOp::Not: return "(bvnot " + term(n.a) + ")";
            case TOp::Eq:
                return "(ite (= " + term(n.a) + " " + term(n.b) + ") #b1 #b0)";
            case TOp::Ult:
                return "(ite (bvult " + term(n.a) + " " + term(n.b) + ") #b1 #b0)";
        }
        fail(Err::Internal, "bad op");
    }
    std::string bin(const char* name, const Node& n)
    {
        return std::string("(") + name + " " + term(n.a) + " " + term(n.b) + ")";
    }

    const TermStore& m_store;
    std::unordered_map<TermId, std::string> m_named;
};

} // namespace

std::string emit_smtlib(const TermStore& store, const Formula& formula)
{
    Emitter em(store);
    std::ostringstream out;
    out << "(set-logic " << formula.logic << ")\n";

    for (TermId d : formula.decls) {
        const Node& n = store.node(d);
        if (n.kind == Kind::ArrayVar)
            out << "(declare-fun " << store.name_text(n.name)
                << " () (Array (_ BitVec 32) (_ BitVec 8)))\n";
        else
            out << "(declare-fun " << store.name_text(n.name) << " () (_ BitVec "
                << n.width << "))\n";
    }

    for (TermId a : formula.assertions) {
        TermId var = kNoTerm, value = kNoTerm;
        if (em.is_definition(a, var, value))
            out << em.definition(var, value) << "\n";
        else
            out << em.assertion(a) << "\n";
    }

    if (formula.goal != kNoTerm)
        out << em.assertion(formula.goal) << "\n";

    out << "(check-sat)\n(get-model)\n";
    return out.str();
}

} // namespace resmt::smt
