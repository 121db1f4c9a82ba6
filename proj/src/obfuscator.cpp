#include "resmt/obfuscator.hpp"

#include <algorithm>
#include <random>
#include <unordered_map>

#include "resmt/errors.hpp"

namespace resmt::obf {

using x86::Gpr;
using x86::ImmRef;
using x86::Instruction;
using x86::MemRef;
using x86::Mn;
using x86::RegRef;

namespace {

constexpr uint8_t kAllFlags = 0x3F; // CF PF AF ZF SF OF as bits 0..5

// Flag sets read by each condition code (cc >> 1 selects the base test).
uint8_t cc_flag_reads(uint8_t cc)
{
    switch (cc >> 1) {
        case 0: return 0x20;        // OF
        case 1: return 0x01;        // CF
        case 2: return 0x08;        // ZF
        case 3: return 0x09;        // CF|ZF
        case 4: return 0x10;        // SF
        case 5: return 0x02;        // PF
        case 6: return 0x30;        // SF|OF
        case 7: return 0x38;        // ZF|SF|OF
    }
    return kAllFlags;
}

struct Entry {
    uint32_t id;
    Instruction ins;
    int target = -1; // id of the branch target, -1 when none/external
};

// The function as a label graph: ids are stable across insertions, and
// branch operands are re-materialized from `target` at encode time.
struct Program {
    std::vector<Entry> entries;
    uint32_t next_id = 0;
    uint32_t entry_id = 0;
};

bool is_uncond_transfer(Mn m) { return m == Mn::Jmp || m == Mn::Ret; }

struct FlowInfo {
    std::vector<bool> reachable;
    std::vector<uint8_t> live_in;  // flags live before each entry
    std::vector<uint8_t> live_out; // flags live after each entry
};

uint8_t flags_written(const Instruction& ins)
{
    switch (ins.mnemonic) {
        case Mn::Add: case Mn::Sub: case Mn::And: case Mn::Or: case Mn::Xor:
        case Mn::Cmp: case Mn::Test: case Mn::Neg:
            return kAllFlags;
        case Mn::Inc: case Mn::Dec:
            return kAllFlags & ~0x01; // CF preserved
        case Mn::Shl: case Mn::Shr: case Mn::Sar:
            // An immediate count > 0 always writes; a CL count may be zero
            // and leave flags alone, so treat it as writing nothing.
            if (auto* imm = std::get_if<ImmRef>(&ins.operands[1]))
                return (imm->value & 31) ? kAllFlags : 0;
            return 0;
        default:
            return 0;
    }
}

uint8_t flags_read(const Instruction& ins)
{
    if (x86::is_jcc(ins.mnemonic))
        return cc_flag_reads(x86::cc_index(ins.mnemonic));
    // A CL-count shift keeps old flags when the count is zero.
    if ((ins.mnemonic == Mn::Shl || ins.mnemonic == Mn::Shr || ins.mnemonic == Mn::Sar) &&
        std::holds_alternative<RegRef>(ins.operands[1]))
        return kAllFlags;
    if (ins.mnemonic == Mn::Call)
        return kAllFlags; // unknown callee
    return 0;
}

FlowInfo analyze(const Program& p)
{
    size_t n = p.entries.size();
    std::unordered_map<uint32_t, size_t> pos;
    for (size_t i = 0; i < n; ++i)
        pos.emplace(p.entries[i].id, i);

    auto successors = [&](size_t i, size_t out[2]) -> int {
        const Entry& e = p.entries[i];
        int count = 0;
        bool falls = !is_uncond_transfer(e.ins.mnemonic);
        if (falls && i + 1 < n)
            out[count++] = i + 1;
        if (e.target >= 0 && (e.ins.mnemonic == Mn::Jmp || e.ins.mnemonic == Mn::Call ||
                              x86::is_jcc(e.ins.mnemonic))) {
            auto it = pos.find(uint32_t(e.target));
            if (it != pos.end())
                out[count++] = it->second;
        }
        return count;
    };

    FlowInfo info;
    info.reachable.assign(n, false);
    std::vector<size_t> work{pos.at(p.entry_id)};
    while (!work.empty()) {
        size_t i = work.back();
        work.pop_back();
        if (info.reachable[i])
            continue;
        info.reachable[i] = true;
        size_t succ[2];
        int c = successors(i, succ);
        for (int k = 0; k < c; ++k)
            work.push_back(succ[k]);
    }

    info.live_in.assign(n, 0);
    info.live_out.assign(n, 0);
    bool changed = true;
    int passes = 0;
    while (changed) {
        changed = false;
        // Backward-jump chains can make the fixpoint slow on huge inputs;
        // past the pass cap, everything still unsettled goes conservative
        // (all flags live), which only suppresses optional transforms.
        if (++passes > 24) {
            for (size_t i = 0; i < n; ++i) {
                info.live_in[i] = kAllFlags;
                info.live_out[i] = kAllFlags;
            }
            break;
        }
        for (size_t ri = n; ri-- > 0;) {
            size_t succ[2];
            int c = successors(ri, succ);
            uint8_t live_out = 0;
            for (int k = 0; k < c; ++k)
                live_out |= info.live_in[succ[k]];
            info.live_out[ri] = live_out;
            uint8_t li = flags_read(p.entries[ri].ins) |
                         uint8_t(live_out & ~flags_written(p.entries[ri].ins));
            if (li != info.live_in[ri]) {
                info.live_in[ri] = li;
                changed = true;
            }
        }
    }
    return info;
}

// ---- building blocks -------------------------------------------------------

Instruction make(Mn m, std::vector<x86::Operand> ops = {})
{
    Instruction ins;
    ins.mnemonic = m;
    ins.operands = std::move(ops);
    return ins;
}

RegRef r32(Gpr g) { return RegRef{g, 32, false}; }

Gpr random_gpr(std::mt19937_64& rng, bool allow_stack)
{
    static const Gpr pool[] = {Gpr::Eax, Gpr::Ecx, Gpr::Edx, Gpr::Ebx,
                               Gpr::Esi, Gpr::Edi, Gpr::Ebp, Gpr::Esp};
    size_t count = allow_stack ? 8 : 6;
    return pool[rng() % count];
}

// ---- techniques -------------------------------------------------------------

void jump_insertion(Program& p, std::mt19937_64& rng)
{
    size_t n = p.entries.size();
    if (n < 2)
        return;
    size_t want = std::max<size_t>(1, n * 2 / 3);
    want = std::min(want, n - 1);

    // Split points between entries, then reorder the tail segments.
    std::vector<size_t> cuts;
    for (size_t i = 1; i < n; ++i)
        cuts.push_back(i);
    std::shuffle(cuts.begin(), cuts.end(), rng);
    cuts.resize(want);
    std::sort(cuts.begin(), cuts.end());

    std::vector<std::vector<Entry>> segments;
    size_t prev = 0;
    for (size_t cut : cuts) {
        segments.emplace_back(p.entries.begin() + long(prev), p.entries.begin() + long(cut));
        prev = cut;
    }
    segments.emplace_back(p.entries.begin() + long(prev), p.entries.end());

    // Make every segment's fall-through explicit before reordering.
    for (size_t s = 0; s + 1 < segments.size(); ++s) {
        const Entry& last = segments[s].back();
        if (is_uncond_transfer(last.ins.mnemonic))
            continue;
        Entry jmp;
        jmp.id = p.next_id++;
        jmp.ins = make(Mn::Jmp, {ImmRef{0, 32}});
        jmp.target = int(segments[s + 1].front().id);
        segments[s].push_back(jmp);
    }

    // Keep the entry segment first so the function entry stays put.
    if (segments.size() > 2)
        std::shuffle(segments.begin() + 1, segments.end(), rng);

    std::vector<Entry> out;
    for (auto& seg : segments)
        for (Entry& e : seg)
            out.push_back(std::move(e));
    p.entries = std::move(out);
}

void opcode_mutation(Program& p, std::mt19937_64& rng)
{
    FlowInfo info = analyze(p);
    std::vector<Entry> out;
    out.reserve(p.entries.size() * 2);

    for (size_t i = 0; i < p.entries.size(); ++i) {
        Entry e = std::move(p.entries[i]);
        bool flags_dead_after = info.live_out[i] == 0;

        bool mutate = info.reachable[i] && rng() % 3 == 0;
        auto emit = [&](Instruction ins, int target = -1) {
            Entry ne;
            ne.id = p.next_id++;
            ne.ins = std::move(ins);
            ne.target = target;
            out.push_back(std::move(ne));
        };
        auto emit_first = [&](Instruction ins) {
            // Reuse the original id so branches to this entry stay valid.
            Entry ne;
            ne.id = e.id;
            ne.ins = std::move(ins);
            out.push_back(std::move(ne));
        };

        const auto* reg0 = e.ins.operands.size() > 0
                               ? std::get_if<RegRef>(&e.ins.operands[0])
                               : nullptr;
        const auto* reg1 = e.ins.operands.size() > 1
                               ? std::get_if<RegRef>(&e.ins.operands[1])
                               : nullptr;
        const auto* imm1 = e.ins.operands.size() > 1
                               ? std::get_if<ImmRef>(&e.ins.operands[1])
                               : nullptr;
        bool wide0 = reg0 && reg0->size_bits == 32;

        if (mutate && e.ins.mnemonic == Mn::Mov && wide0 && reg1 &&
            reg1->size_bits == 32) {
            emit_first(make(Mn::Push, {*reg1}));
            emit(make(Mn::Pop, {*reg0}));
            continue;
        }
        if (mutate && e.ins.mnemonic == Mn::Mov && wide0 && imm1 &&
            imm1->size_bits == 32) {
            emit_first(make(Mn::Push, {*imm1}));
            emit(make(Mn::Pop, {*reg0}));
            continue;
        }
        if (mutate && e.ins.mnemonic == Mn::Xor && wide0 && imm1) {
            uint32_t k = uint32_t(rng());
            emit_first(make(Mn::Xor, {*reg0, ImmRef{k, 32}}));
            emit(make(Mn::Xor, {*reg0, ImmRef{imm1->value ^ k, 32}}));
            continue;
        }
        if (mutate && e.ins.mnemonic == Mn::And && wide0 && imm1) {
            uint32_t k = uint32_t(rng());
            emit_first(make(Mn::And, {*reg0, ImmRef{imm1->value | k, 32}}));
            emit(make(Mn::And, {*reg0, ImmRef{imm1->value | ~k, 32}}));
            continue;
        }
        if (mutate && flags_dead_after && imm1 && wide0 &&
            (e.ins.mnemonic == Mn::Add || e.ins.mnemonic == Mn::Sub)) {
            if (rng() % 2 == 0) {
                // add r, c == sub r, -c (flags differ, hence the liveness gate)
                Mn opposite = e.ins.mnemonic == Mn::Add ? Mn::Sub : Mn::Add;
                emit_first(make(opposite, {*reg0, ImmRef{uint32_t(-int64_t(imm1->value)), 32}}));
            } else {
                uint32_t a = uint32_t(rng());
                emit_first(make(e.ins.mnemonic, {*reg0, ImmRef{a, 32}}));
                emit(make(e.ins.mnemonic, {*reg0, ImmRef{imm1->value - a, 32}}));
            }
            continue;
        }
        if (mutate && flags_dead_after && e.ins.mnemonic == Mn::Inc && wide0) {
            emit_first(make(Mn::Add, {*reg0, ImmRef{1, 32}}));
            continue;
        }
        out.push_back(std::move(e));
    }
    p.entries = std::move(out);
}

void dead_code(Program& p, std::mt19937_64& rng)
{
    std::vector<Entry> out;
    out.reserve(p.entries.size() * 2);

    auto junk = [&](std::mt19937_64& r) -> Instruction {
        Gpr g = random_gpr(r, false);
        Gpr h = random_gpr(r, false);
        switch (r() % 6) {
            case 0: return make(Mn::Mov, {r32(g), ImmRef{uint32_t(r()), 32}});
            case 1: return make(Mn::Add, {r32(g), r32(h)});
            case 2: return make(Mn::Xor, {r32(g), ImmRef{uint32_t(r()), 32}});
            case 3: return make(Mn::Cmp, {r32(g), r32(h)});
            case 4: return make(Mn::Nop);
            default: return make(Mn::Push, {r32(g)});
        }
    };

    for (size_t i = 0; i < p.entries.size(); ++i) {
        bool barrier = is_uncond_transfer(p.entries[i].ins.mnemonic);
        out.push_back(std::move(p.entries[i]));
        if (!barrier)
            continue;
        size_t count = 2 + rng() % 5;
        for (size_t k = 0; k < count; ++k) {
            Entry e;
            e.id = p.next_id++;
            if (rng() % 4 == 0 && !p.entries.empty()) {
                // Fake conditional edge into real code; never executed.
                e.ins = make(x86::jcc_from_cc(uint8_t(rng() % 16)), {ImmRef{0, 32}});
                e.target = int(p.entries[rng() % p.entries.size()].id);
            } else {
                e.ins = junk(rng);
            }
            out.push_back(std::move(e));
        }
    }
    p.entries = std::move(out);
}

void opposite_jump_pair(Program& p, std::mt19937_64& rng)
{
    FlowInfo info = analyze(p);
    std::vector<Entry> out;
    out.reserve(p.entries.size() * 2);

    for (size_t i = 0; i < p.entries.size(); ++i) {
        bool site = info.reachable[i] && info.live_in[i] == 0 &&
                    p.entries[i].id != p.entry_id && rng() % 4 == 0;
        if (site) {
            int land = int(p.entries[i].id);
            // Pin the flags to concrete values first (ESP is concrete), so
            // the opposite pair never forks symbolically.
            Entry test;
            test.id = p.next_id++;
            test.ins = make(Mn::Test, {r32(Gpr::Esp), r32(Gpr::Esp)});
            out.push_back(std::move(test));

            uint8_t cc = uint8_t(rng() % 16);
            Entry j1;
            j1.id = p.next_id++;
            j1.ins = make(x86::jcc_from_cc(cc), {ImmRef{0, 32}});
            j1.target = land;
            out.push_back(std::move(j1));

            Entry j2;
            j2.id = p.next_id++;
            j2.ins = make(x86::opposite_jcc(x86::jcc_from_cc(cc)), {ImmRef{0, 32}});
            j2.target = land;
            out.push_back(std::move(j2));
        }
        out.push_back(std::move(p.entries[i]));
    }
    p.entries = std::move(out);
}

void junk_insertion(Program& p, std::mt19937_64& rng)
{
    FlowInfo info = analyze(p);
    std::vector<Entry> out;
    out.reserve(p.entries.size() * 2);

    for (size_t i = 0; i < p.entries.size(); ++i) {
        bool site = info.reachable[i] && p.entries[i].id != p.entry_id && rng() % 3 == 0;
        if (site) {
            bool flags_dead = info.live_in[i] == 0;
            Gpr g = random_gpr(rng, false);
            auto emit = [&](Instruction ins) {
                Entry e;
                e.id = p.next_id++;
                e.ins = std::move(ins);
                out.push_back(std::move(e));
            };
            switch (rng() % (flags_dead ? 4 : 2)) {
                case 0:
                    emit(make(Mn::Push, {r32(g)}));
                    emit(make(Mn::Pop, {r32(g)}));
                    break;
                case 1:
                    emit(make(Mn::Mov, {r32(g), r32(g)}));
                    break;
                case 2: // flag-clobbering junk, liveness-gated
                    emit(make(Mn::Test, {r32(g), r32(g)}));
                    break;
                default:
                    emit(make(Mn::Cmp, {r32(g), r32(g)}));
                    break;
            }
        }
        out.push_back(std::move(p.entries[i]));
    }
    p.entries = std::move(out);
}

// ---- encode with branch relaxation -----------------------------------------

ObfResult encode_program(Program& p, uint32_t base_addr)
{
    size_t n = p.entries.size();
    std::unordered_map<uint32_t, size_t> pos;
    for (size_t i = 0; i < n; ++i)
        pos.emplace(p.entries[i].id, i);

    std::vector<uint32_t> sizes(n, 2); // optimistic short branches
    for (size_t i = 0; i < n; ++i) {
        Entry& e = p.entries[i];
        if (e.target < 0) {
            e.ins.addr = 0;
            sizes[i] = uint32_t(x86::encode(e.ins).size());
        }
    }

    std::vector<uint32_t> addrs(n, 0);
    std::vector<std::vector<uint8_t>> bytes(n);
    // Short forms may only grow to near forms, so the layout converges.
    for (int round = 0;; ++round) {
        uint32_t at = base_addr;
        for (size_t i = 0; i < n; ++i) {
            addrs[i] = at;
            at += sizes[i];
        }
        bool stable = true;
        for (size_t i = 0; i < n; ++i) {
            Entry& e = p.entries[i];
            e.ins.addr = addrs[i];
            if (e.target >= 0) {
                auto it = pos.find(uint32_t(e.target));
                if (it == pos.end())
                    fail(Err::ObfuscationFailed, "branch to removed label");
                e.ins.operands[0] = ImmRef{addrs[it->second], 32};
            }
            bytes[i] = x86::encode(e.ins, /*force_near_branches=*/sizes[i] > 2 &&
                                              e.target >= 0);
            if (bytes[i].size() > sizes[i]) {
                sizes[i] = uint32_t(bytes[i].size());
                stable = false;
            }
        }
        if (stable)
            break;
        if (round >= 256)
            fail(Err::ObfuscationFailed, "branch relaxation did not converge");
    }

    std::vector<uint8_t> blob;
    for (size_t i = 0; i < n; ++i)
        blob.insert(blob.end(), bytes[i].begin(), bytes[i].end());

    ObfResult result;
    result.image = make_image(std::move(blob), base_addr);
    result.entry = addrs[pos.at(p.entry_id)];
    return result;
}

} // namespace

const char* technique_name(Technique t)
{
    switch (t) {
        case Technique::JumpInsertion: return "jump-insertion";
        case Technique::OpcodeMutation: return "opcode-mutation";
        case Technique::DeadCode: return "dead-code";
        case Technique::OppositeJumpPair: return "opposite-jump-pair";
        case Technique::JunkInsertion: return "junk-insertion";
    }
    return "?";
}

size_t linear_instruction_count(const FunctionImage& image)
{
    size_t count = 0;
    uint32_t pc = image.base_addr;
    while (image.contains(pc)) {
        x86::Instruction ins = x86::decode_one(image, pc);
        pc += ins.length;
        ++count;
    }
    return count;
}

ObfResult obfuscate(const FunctionImage& image, uint32_t entry, const ObfConfig& config)
{
    if (config.iterations < 1)
        fail(Err::ObfuscationFailed, "iterations must be >= 1");
    if (config.techniques.empty())
        fail(Err::ObfuscationFailed, "technique set must not be empty");
    if (!image.contains(entry))
        fail(Err::EntryOutOfRange, "entry address outside the image");

    // Linear decode into the label graph.
    Program p;
    std::unordered_map<uint32_t, uint32_t> id_at_addr;
    uint32_t pc = image.base_addr;
    while (image.contains(pc)) {
        Entry e;
        e.id = p.next_id++;
        try {
            e.ins = x86::decode_one(image, pc);
        } catch (const Error& err) {
            fail(Err::ObfuscationFailed,
                 std::string("input image does not decode linearly: ") + err.what());
        }
        id_at_addr.emplace(pc, e.id);
        pc += e.ins.length;
        p.entries.push_back(std::move(e));
    }
    for (Entry& e : p.entries) {
        if (!e.ins.is_branch())
            continue;
        uint32_t tgt = e.ins.branch_target();
        auto it = id_at_addr.find(tgt);
        if (it == id_at_addr.end())
            fail(Err::ObfuscationFailed, "branch target is not an instruction boundary");
        e.target = int(it->second);
    }
    auto at = id_at_addr.find(entry);
    if (at == id_at_addr.end())
        fail(Err::ObfuscationFailed, "entry is not an instruction boundary");
    p.entry_id = at->second;

    std::mt19937_64 rng(config.seed);
    auto enabled = [&](Technique t) {
        return std::find(config.techniques.begin(), config.techniques.end(), t) !=
               config.techniques.end();
    };

    for (uint32_t round = 0; round < config.iterations; ++round) {
        if (enabled(Technique::JumpInsertion))
            jump_insertion(p, rng);
        if (enabled(Technique::OpcodeMutation))
            opcode_mutation(p, rng);
        if (enabled(Technique::DeadCode))
            dead_code(p, rng);
        if (enabled(Technique::OppositeJumpPair))
            opposite_jump_pair(p, rng);
        if (enabled(Technique::JunkInsertion))
            junk_insertion(p, rng);
    }

    return encode_program(p, image.base_addr);
}

} // namespace resmt::obf
