#include "resmt/term.hpp"

#include "resmt/errors.hpp"

namespace resmt::smt {

namespace {

uint64_t fold_op(TOp op, uint16_t w, uint64_t a, uint64_t b)
{
    uint64_t m = TermStore::mask(w);
    a &= m;
    b &= m;
    switch (op) {
        case TOp::Add: return (a + b) & m;
        case TOp::Sub: return (a - b) & m;
        case TOp::Mul: return (a * b) & m;
        case TOp::Udiv: return b == 0 ? m : (a / b) & m; // SMT-LIB bvudiv semantics
        case TOp::Urem: return b == 0 ? a : (a % b) & m;
        case TOp::Shl: return b >= w ? 0 : (a << b) & m;
        case TOp::Lshr: return b >= w ? 0 : (a >> b) & m;
        case TOp::And: return a & b;
        case TOp::Or: return a | b;
        case TOp::Xor: return a ^ b;
        case TOp::Not: return ~a & m;
        case TOp::Eq: return a == b ? 1 : 0;
        case TOp::Ult: return a < b ? 1 : 0;
    }
    fail(Err::Internal, "bad term op");
}

bool is_commutative(TOp op)
{
    switch (op) {
        case TOp::Add: case TOp::Mul: case TOp::And: case TOp::Or: case TOp::Xor:
            return true;
        default:
            return false;
    }
}

} // namespace

size_t TermStore::NodeHash::operator()(const Node& n) const
{
    uint64_t h = 1469598103934665603ull;
    auto mix = [&](uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    mix(uint64_t(n.kind) | uint64_t(n.op) << 8 | uint64_t(n.width) << 16);
    mix(uint64_t(n.a) | uint64_t(n.b) << 32);
    mix(uint64_t(n.c) | uint64_t(n.name) << 32);
    mix(n.value);
    return size_t(h);
}

TermStore::TermStore()
{
    m_nodes.emplace_back(); // id 0 stays invalid
    m_names.emplace_back("");
}

uint32_t TermStore::intern(const std::string& name)
{
    auto it = m_name_index.find(name);
    if (it != m_name_index.end())
        return it->second;
    uint32_t id = uint32_t(m_names.size());
    m_names.push_back(name);
    m_name_index.emplace(name, id);
    return id;
}

TermId TermStore::intern_node(const Node& n)
{
    auto it = m_index.find(n);
    if (it != m_index.end())
        return it->second;
    TermId id = TermId(m_nodes.size());
    m_nodes.push_back(n);
    m_index.emplace(n, id);
    return id;
}

TermId TermStore::constant(uint16_t width, uint64_t value)
{
    Node n;
    n.kind = Kind::Const;
    n.width = width;
    n.value = value & mask(width);
    return intern_node(n);
}

TermId TermStore::var(const std::string& name, uint16_t width)
{
    Node n;
    n.kind = Kind::Var;
    n.width = width;
    n.name = intern(name);
    TermId id = intern_node(n);
    if (m_nodes[id].width != width)
        fail(Err::Internal, "variable " + name + " redeclared at a different width");
    return id;
}

TermId TermStore::array_var(const std::string& name)
{
    Node n;
    n.kind = Kind::ArrayVar;
    n.width = 0;
    n.name = intern(name);
    return intern_node(n);
}

TermId TermStore::op2(TOp op, TermId a, TermId b)
{
    if (op == TOp::Not)
        return op_not(a);

    const Node& na = m_nodes[a];
    const Node& nb = m_nodes[b];
    uint16_t w = op == TOp::Eq || op == TOp::Ult ? 1 : na.width;
    if (na.width != nb.width)
        fail(Err::Internal, "operand widths differ in term op");

    if (na.kind == Kind::Const && nb.kind == Kind::Const)
        return constant(w, fold_op(op, na.width, na.value, nb.value));

    // Canonical order: constants to the right of commutative ops.
    if (is_commutative(op) && na.kind == Kind::Const && nb.kind != Kind::Const)
        std::swap(a, b);

    const Node& xa = m_nodes[a];
    const Node& xb = m_nodes[b];
    uint64_t m = mask(xa.width);

    if (xb.kind == Kind::Const) {
        uint64_t v = xb.value;
        switch (op) {
            case TOp::Add: case TOp::Sub: case TOp::Xor: case TOp::Or:
            case TOp::Shl: case TOp::Lshr:
                if (v == 0)
                    return a;
                break;
            case TOp::And:
                if (v == 0)
                    return constant(xa.width, 0);
                if (v == m)
                    return a;
                break;
            case TOp::Mul:
                if (v == 0)
                    return constant(xa.width, 0);
                if (v == 1)
                    return a;
                break;
            case TOp::Udiv:
                if (v == 1)
                    return a;
                break;
            case TOp::Urem:
                if (v == 1)
                    return constant(xa.width, 0);
                break;
            default:
                break;
        }
        // Collapse constant chains: (x + c1) + c2 and (x + c1) - c2.
        if ((op == TOp::Add || op == TOp::Sub) && xa.kind == Kind::Op &&
            xa.op == TOp::Add && m_nodes[xa.b].kind == Kind::Const) {
            uint64_t c1 = m_nodes[xa.b].value;
            uint64_t c2 = op == TOp::Add ? v : (0 - v);
            uint64_t c = (c1 + c2) & m;
            if (c == 0)
                return xa.a;
            return op2(TOp::Add, xa.a, constant(xa.width, c));
        }
    }

    if (a == b) {
        switch (op) {
            case TOp::Sub: case TOp::Xor: return constant(xa.width, 0);
            case TOp::And: case TOp::Or: return a;
            case TOp::Eq: return constant(1, 1);
            case TOp::Ult: return constant(1, 0);
            default: break;
        }
    }

    Node n;
    n.kind = Kind::Op;
    n.op = op;
    n.width = w;
    n.a = a;
    n.b = b;
    return intern_node(n);
}

TermId TermStore::op_not(TermId a)
{
    const Node& na = m_nodes[a];
    if (na.kind == Kind::Const)
        return constant(na.width, ~na.value);
    // not(not(x)) == x
    if (na.kind == Kind::Op && na.op == TOp::Not)
        return na.a;
    Node n;
    n.kind = Kind::Op;
    n.op = TOp::Not;
    n.width = na.width;
    n.a = a;
    return intern_node(n);
}

TermId TermStore::ite(TermId cond, TermId then_t, TermId else_t)
{
    const Node& nc = m_nodes[cond];
    if (nc.width != 1)
        fail(Err::Internal, "ite condition must be 1 bit");
    if (width(then_t) != width(else_t))
        fail(Err::Internal, "ite arms differ in width");
    if (nc.kind == Kind::Const)
        return nc.value ? then_t : else_t;
    if (then_t == else_t)
        return then_t;
    Node n;
    n.kind = Kind::Ite;
    n.width = width(then_t);
    n.a = cond;
    n.b = then_t;
    n.c = else_t;
    return intern_node(n);
}

TermId TermStore::select(TermId array, TermId index)
{
    if (width(index) != 32)
        fail(Err::Internal, "select index must be 32 bits");
    // Walk the store chain while indices are provably distinct; a store to
    // the same index resolves the read.
    TermId walk = array;
    while (m_nodes[walk].kind == Kind::Store) {
        const Node& st = m_nodes[walk];
        if (st.b == index)
            return st.c;
        if (m_nodes[st.b].kind == Kind::Const && m_nodes[index].kind == Kind::Const)
            walk = st.a; // distinct constants (equal ones share an id)
        else
            break;
    }
    Node n;
    n.kind = Kind::Select;
    n.width = 8;
    n.a = walk;
    n.b = index;
    return intern_node(n);
}

TermId TermStore::store(TermId array, TermId index, TermId value)
{
    if (width(index) != 32 || width(value) != 8)
        fail(Err::Internal, "store expects a 32-bit index and 8-bit value");
    Node n;
    n.kind = Kind::Store;
    n.width = 0;
    n.a = array;
    n.b = index;
    n.c = value;
    return intern_node(n);
}

TermId TermStore::extract(TermId t, uint16_t hi, uint16_t lo)
{
    const Node& nt = m_nodes[t];
    if (hi < lo || hi >= nt.width)
        fail(Err::Internal, "bad extract range");
    uint16_t w = uint16_t(hi - lo + 1);
    if (w == nt.width)
        return t;
    if (nt.kind == Kind::Const)
        return constant(w, nt.value >> lo);
    if (nt.kind == Kind::Extract) {
        uint16_t base_lo = uint16_t(nt.value & 0xFFFF);
        return extract(nt.a, uint16_t(base_lo + hi), uint16_t(base_lo + lo));
    }
    if (nt.kind == Kind::Concat) {
        uint16_t low_w = width(nt.b);
        if (hi < low_w)
            return extract(nt.b, hi, lo);
        if (lo >= low_w)
            return extract(nt.a, uint16_t(hi - low_w), uint16_t(lo - low_w));
    }
    Node n;
    n.kind = Kind::Extract;
    n.width = w;
    n.a = t;
    n.value = uint64_t(hi) << 16 | lo;
    return intern_node(n);
}

TermId TermStore::concat(TermId hi, TermId lo)
{
    const Node& nh = m_nodes[hi];
    const Node& nl = m_nodes[lo];
    uint16_t w = uint16_t(nh.width + nl.width);
    if (nh.kind == Kind::Const && nl.kind == Kind::Const)
        return constant(w, nh.value << nl.width | nl.value);
    // concat of adjacent extracts of one source folds back together
    if (nh.kind == Kind::Extract && nl.kind == Kind::Extract && nh.a == nl.a) {
        uint16_t h_lo = uint16_t(nh.value & 0xFFFF);
        uint16_t l_hi = uint16_t(nl.value >> 16);
        uint16_t l_lo = uint16_t(nl.value & 0xFFFF);
        if (h_lo == l_hi + 1)
            return extract(nh.a, uint16_t(nh.value >> 16), l_lo);
    }
    Node n;
    n.kind = Kind::Concat;
    n.width = w;
    n.a = hi;
    n.b = lo;
    return intern_node(n);
}

TermId TermStore::resize(TermId t, uint16_t w)
{
    uint16_t from = width(t);
    if (w == from)
        return t;
    if (w < from)
        return extract(t, uint16_t(w - 1), 0);
    return concat(constant(uint16_t(w - from), 0), t);
}

uint64_t TermStore::eval_select(TermId array, uint64_t index, const Env& env,
                                std::unordered_map<TermId, uint64_t>& memo) const
{
    TermId walk = array;
    while (m_nodes[walk].kind == Kind::Store) {
        const Node& st = m_nodes[walk];
        if ((eval_rec(st.b, env, memo) & 0xFFFFFFFFull) == index)
            return eval_rec(st.c, env, memo);
        walk = st.a;
    }
    auto it = env.memory.find(uint32_t(index));
    return it == env.memory.end() ? 0 : it->second;
}

uint64_t TermStore::eval_rec(TermId t, const Env& env,
                             std::unordered_map<TermId, uint64_t>& memo) const
{
    auto it = memo.find(t);
    if (it != memo.end())
        return it->second;
    const Node& n = m_nodes[t];
    uint64_t out = 0;
    switch (n.kind) {
        case Kind::Const:
            out = n.value;
            break;
        case Kind::Var: {
            auto v = env.vars.find(n.name);
            out = v == env.vars.end() ? 0 : v->second & mask(n.width);
            break;
        }
        case Kind::ArrayVar:
            fail(Err::Internal, "cannot evaluate an array term to a value");
        case Kind::Op: {
            uint64_t a = eval_rec(n.a, env, memo);
            uint64_t b = n.op == TOp::Not ? 0 : eval_rec(n.b, env, memo);
            out = fold_op(n.op, n.op == TOp::Eq || n.op == TOp::Ult ? width(n.a) : n.width,
                          a, b);
            break;
        }
        case Kind::Select:
            out = eval_select(n.a, eval_rec(n.b, env, memo) & 0xFFFFFFFFull, env, memo);
            break;
        case Kind::Store:
            fail(Err::Internal, "cannot evaluate an array term to a value");
        case Kind::Ite:
            out = eval_rec(n.a, env, memo) ? eval_rec(n.b, env, memo)
                                           : eval_rec(n.c, env, memo);
            break;
        case Kind::Extract: {
            uint64_t v = eval_rec(n.a, env, memo);
            out = (v >> (n.value & 0xFFFF)) & mask(n.width);
            break;
        }
        case Kind::Concat: {
            uint64_t h = eval_rec(n.a, env, memo);
            uint64_t l = eval_rec(n.b, env, memo);
            out = (h << width(n.b) | l) & mask(n.width);
            break;
        }
    }
    out &= mask(n.width);
    memo.emplace(t, out);
    return out;
}

uint64_t TermStore::eval(TermId t, const Env& env) const
{
    std::unordered_map<TermId, uint64_t> memo;
    return eval_rec(t, env, memo);
}

} // namespace resmt::smt
