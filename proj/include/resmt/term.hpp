#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace resmt::smt {

using TermId = uint32_t;
constexpr TermId kNoTerm = 0;

enum class Kind : uint8_t {
    Const, Var, ArrayVar, Op, Select, Store, Ite, Extract, Concat,
};

enum class TOp : uint8_t {
    Add, Sub, Mul, Udiv, Urem, Shl, Lshr, And, Or, Xor, Not, Eq, Ult,
};

/// One immutable DAG node. Field use varies by kind:
///   Op:      op, a, b (b unused for Not)
///   Select:  a = array, b = index
///   Store:   a = array, b = index, c = value
///   Ite:     a = 1-bit condition, b = then, c = else
///   Extract: a = source, value packs hi<<16|lo
///   Concat:  a = high part, b = low part
/// Array-valued nodes carry width 0 (index 32, element 8 are fixed).
struct Node {
    Kind kind = Kind::Const;
    TOp op = TOp::Add;
    uint16_t width = 0;
    TermId a = 0, b = 0, c = 0;
    uint32_t name = 0;
    uint64_t value = 0;

    bool operator==(const Node&) const = default;
};

/// Variable assignment for concrete evaluation. Bit-vector variables map
/// to values; array variables read as all-zero unless bytes are given.
struct Env {
    std::unordered_map<uint32_t, uint64_t> vars; // name id -> value
    std::unordered_map<uint32_t, uint8_t> memory; // address -> byte (initial arrays)
};

/// Hash-consed term store: structurally equal terms share one id, and
/// constructors fold constants so concrete data stays concrete.
class TermStore {
  public:
    TermStore();

    TermId constant(uint16_t width, uint64_t value);
    TermId var(const std::string& name, uint16_t width);
    TermId array_var(const std::string& name);

    TermId op2(TOp op, TermId a, TermId b);
    TermId op_not(TermId a);
    TermId eq(TermId a, TermId b) { return op2(TOp::Eq, a, b); }
    TermId ult(TermId a, TermId b) { return op2(TOp::Ult, a, b); }
    TermId ite(TermId cond, TermId then_t, TermId else_t);
    TermId select(TermId array, TermId index);
    TermId store(TermId array, TermId index, TermId value);
    TermId extract(TermId t, uint16_t hi, uint16_t lo);
    TermId concat(TermId hi, TermId lo);

    /// Truncate or zero-extend to `width`.
    TermId resize(TermId t, uint16_t width);

    const Node& node(TermId t) const { return m_nodes[t]; }
    uint16_t width(TermId t) const { return m_nodes[t].width; }
    bool is_const(TermId t) const { return m_nodes[t].kind == Kind::Const; }
    uint64_t const_value(TermId t) const { return m_nodes[t].value; }
    bool is_array(TermId t) const
    {
        Kind k = m_nodes[t].kind;
        return k == Kind::ArrayVar || k == Kind::Store;
    }
    const std::string& name_text(uint32_t name_id) const { return m_names[name_id]; }
    uint32_t intern(const std::string& name);
    size_t size() const { return m_nodes.size(); }

    /// Evaluates a bit-vector term under the assignment; unmapped
    /// variables read as zero.
    uint64_t eval(TermId t, const Env& env) const;

    static uint64_t mask(uint16_t width)
    {
        return width >= 64 ? ~uint64_t(0) : (uint64_t(1) << width) - 1;
    }

  private:
    TermId intern_node(const Node& n);
    uint64_t eval_select(TermId array, uint64_t index, const Env& env,
                         std::unordered_map<TermId, uint64_t>& memo) const;
    uint64_t eval_rec(TermId t, const Env& env,
                      std::unordered_map<TermId, uint64_t>& memo) const;

    struct NodeHash {
        size_t operator()(const Node& n) const;
    };

    std::vector<Node> m_nodes;
    std::unordered_map<Node, TermId, NodeHash> m_index;
    std::vector<std::string> m_names;
    std::unordered_map<std::string, uint32_t> m_name_index;
};

} // namespace resmt::smt
