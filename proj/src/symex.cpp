#include "resmt/symex.hpp"

#include <algorithm>
#include <chrono>
#include <cassert>
#include <sstream>

#include "resmt/errors.hpp"

namespace resmt::symex {

using smt::TermId;
using smt::TOp;

namespace {

const char* kStepNames[il::kRegCount] = {
    "eax", "ebx", "ecx", "edx", "esi", "edi", "ebp", "esp",
    "eip", "cf", "pf", "af", "zf", "sf", "of",
};

const char* kInitNames[il::kRegCount] = {
    "EAX", "EBX", "ECX", "EDX", "ESI", "EDI", "EBP", "ESP",
    "EIP", "CF", "PF", "AF", "ZF", "SF", "OF",
};

TOp to_term_op(il::Op op)
{
    switch (op) {
        case il::Op::Add: return TOp::Add;
        case il::Op::Sub: return TOp::Sub;
        case il::Op::Mul: return TOp::Mul;
        case il::Op::Div: return TOp::Udiv;
        case il::Op::Mod: return TOp::Urem;
        case il::Op::Shl: return TOp::Shl;
        case il::Op::Shr: return TOp::Lshr;
        case il::Op::And: return TOp::And;
        case il::Op::Or: return TOp::Or;
        case il::Op::Xor: return TOp::Xor;
        case il::Op::Eq: return TOp::Eq;
        case il::Op::Lt: return TOp::Ult;
        default: fail(Err::Internal, "not a binary IL op");
    }
}

} // namespace

const char* path_status_name(PathStatus s)
{
    switch (s) {
        case PathStatus::Returned: return "Returned";
        case PathStatus::StepLimit: return "StepLimit";
        case PathStatus::PathLimitDropped: return "PathLimitDropped";
        case PathStatus::DecodeFailure: return "DecodeFailure";
        case PathStatus::UnliftableFailure: return "UnliftableFailure";
        case PathStatus::SymbolicJump: return "SymbolicJump";
    }
    return "?";
}

Engine::Engine(smt::TermStore& store) : Engine(store, Options{}) {}

Engine::Engine(smt::TermStore& store, Options opts)
    : m_store(store), m_opts(std::move(opts))
{
}

MachineState Engine::init_state(const REQuery& query, const Abi& abi, uint32_t entry)
{
    MachineState s;
    m_init_decls.clear();

    for (const std::string& name : query.input) {
        for (int r = 0; r < il::kRegCount; ++r)
            if (name == kInitNames[r])
                fail(Err::QueryParseError,
                     "input name '" + name + "' collides with a register variable");
        if (name == "MEM")
            fail(Err::QueryParseError, "input name 'MEM' is reserved");
    }

    // Symbolic inputs first, then initial register variables, then memory.
    std::vector<TermId> args;
    for (const std::string& name : query.input) {
        TermId v = m_store.var(name, 32);
        args.push_back(v);
        m_init_decls.push_back(v);
    }

    auto reg = [&](il::Reg r) -> TermId& { return s.regs[size_t(r)]; };

    if (abi.kind == Abi::Kind::RegisterArgs && args.size() > abi.regs.size())
        fail(Err::TooManyArgs, std::to_string(args.size()) + " inputs for " +
                                   std::to_string(abi.regs.size()) + " argument registers");

    for (int r = 0; r < il::kRegCount; ++r) {
        il::Reg rr = il::Reg(r);
        if (rr == il::Reg::Esp || rr == il::Reg::Eip)
            continue;
        TermId v = m_store.var(kInitNames[r], il::reg_width(rr));
        s.regs[r] = v;
        m_init_decls.push_back(v);
    }
    reg(il::Reg::Esp) = m_store.constant(32, m_opts.stack_base);
    reg(il::Reg::Eip) = m_store.constant(32, entry);

    s.mem = m_store.array_var("MEM");
    m_init_decls.push_back(s.mem);

    auto store_u32 = [&](uint32_t addr, TermId value) {
        for (int i = 0; i < 4; ++i) {
            TermId byte = m_store.extract(value, uint16_t(8 * i + 7), uint16_t(8 * i));
            s.mem = m_store.store(s.mem, m_store.constant(32, addr + uint32_t(i)), byte);
        }
    };

    store_u32(m_opts.stack_base, m_store.constant(32, m_opts.return_sentinel));

    if (abi.kind == Abi::Kind::StackArgs) {
        for (size_t i = 0; i < args.size(); ++i)
            store_u32(m_opts.stack_base + 4 + uint32_t(4 * i), args[i]);
    } else {
        for (size_t i = 0; i < args.size(); ++i) {
            // Replace the register's unconstrained initial variable.
            s.regs[size_t(abi.regs[i])] = args[i];
        }
    }
    return s;
}

TermId Engine::read_operand(const MachineState& s, const il::Operand& op) const
{
    switch (op.kind) {
        case il::Operand::Kind::Reg:
            return s.regs[size_t(op.reg)];
        case il::Operand::Kind::Temp: {
            auto it = s.temps.find(op.temp);
            if (it == s.temps.end())
                fail(Err::Internal, "read of unwritten temp in " + il::to_string(op));
            return it->second;
        }
        case il::Operand::Kind::Const:
            return m_store.constant(op.size_bits, op.value);
        case il::Operand::Kind::None:
            break;
    }
    fail(Err::Internal, "read of empty IL operand");
}

void Engine::bind_dest(MachineState& s, const il::Instruction& ins, TermId value) const
{
    const il::Operand& dst = ins.c;
    value = m_store.resize(value, dst.size_bits);

    std::ostringstream name;
    if (dst.kind == il::Operand::Kind::Reg) {
        size_t r = size_t(dst.reg);
        name << kStepNames[r] << "_step" << ++s.reg_writes[r];
        s.regs[r] = value;
    } else {
        name << "V_" << (dst.temp < 10 ? "0" : "") << int(dst.temp) << "_"
             << ins.addr.native << "_" << ins.addr.sub;
        s.temps[dst.temp] = value;
    }
    TermId var = m_store.var(name.str(), dst.size_bits);
    s.decls.push_back(var);
    s.trace.push_back(Binding{var, value});
}

StepEffect Engine::step_il(MachineState state, const il::Instruction& ins) const
{
    if (ins.addr.sub == 0)
        state.temps.clear();
    state.step += 1;

    StepEffect eff;
    switch (ins.op) {
        case il::Op::Nop:
        case il::Op::Unkn:
            break;

        case il::Op::Undef: {
            std::ostringstream name;
            name << "undef_" << state.step;
            TermId v = m_store.var(name.str(), ins.c.size_bits);
            state.decls.push_back(v);
            bind_dest(state, ins, v);
            break;
        }

        case il::Op::Str:
            bind_dest(state, ins, read_operand(state, ins.a));
            break;

        case il::Op::Not:
            bind_dest(state, ins,
                      m_store.resize(m_store.op_not(read_operand(state, ins.a)),
                                     ins.c.size_bits));
            break;

        case il::Op::Add: case il::Op::Sub: case il::Op::Mul: case il::Op::Div:
        case il::Op::Mod: case il::Op::Shl: case il::Op::Shr: case il::Op::And:
        case il::Op::Or: case il::Op::Xor: case il::Op::Eq: case il::Op::Lt: {
            TermId a = read_operand(state, ins.a);
            TermId b = read_operand(state, ins.b);
            // A constant operand adopts its partner's width.
            if (m_store.width(a) != m_store.width(b)) {
                if (ins.a.kind == il::Operand::Kind::Const)
                    a = m_store.resize(a, m_store.width(b));
                else
                    b = m_store.resize(b, m_store.width(a));
            }
            bind_dest(state, ins, m_store.op2(to_term_op(ins.op), a, b));
            break;
        }

        case il::Op::Ldm: {
            TermId addr = read_operand(state, ins.a);
            int bytes = ins.c.size_bits / 8;
            TermId value = m_store.select(state.mem, addr);
            for (int i = 1; i < bytes; ++i) {
                TermId next = m_store.select(
                    state.mem, m_store.op2(TOp::Add, addr, m_store.constant(32, uint32_t(i))));
                value = m_store.concat(next, value); // little-endian
            }
            bind_dest(state, ins, value);
            break;
        }

        case il::Op::Stm: {
            TermId value = read_operand(state, ins.a);
            TermId addr = read_operand(state, ins.c);
            int bytes = ins.a.size_bits / 8;
            TermId mem = state.mem;
            for (int i = 0; i < bytes; ++i) {
                TermId byte = m_store.extract(value, uint16_t(8 * i + 7), uint16_t(8 * i));
                TermId at = i == 0 ? addr
                                   : m_store.op2(TOp::Add, addr,
                                                 m_store.constant(32, uint32_t(i)));
                mem = m_store.store(mem, at, byte);
            }
            state.mem = mem;
            std::ostringstream name;
            name << "mem_" << ++state.mem_writes;
            // The version variable observes the store chain; reads keep
            // using the chain itself so constant folding still fires.
            TermId var = m_store.array_var(name.str());
            state.decls.push_back(var);
            state.trace.push_back(Binding{var, mem});
            break;
        }

        case il::Op::Jcc: {
            TermId cond = read_operand(state, ins.a);
            TermId target = read_operand(state, ins.c);

            auto jump_to = [&](MachineState&& st, TermId tgt) -> StepEffect {
                if (!m_store.is_const(tgt))
                    fail(Err::SymbolicJumpTarget,
                         "jump target is symbolic at native " +
                             std::to_string(ins.addr.native));
                size_t eip_idx = size_t(il::Reg::Eip);
                std::ostringstream name;
                name << "eip_step" << ++st.reg_writes[eip_idx];
                TermId var = m_store.var(name.str(), 32);
                st.decls.push_back(var);
                st.trace.push_back(Binding{var, tgt});
                st.regs[eip_idx] = tgt;

                StepEffect out;
                uint32_t dest = uint32_t(m_store.const_value(tgt));
                out.kind = dest == m_opts.return_sentinel ? StepEffect::Kind::Halt
                                                          : StepEffect::Kind::Continue;
                out.jumped = true;
                out.state = std::move(st);
                return out;
            };

            if (m_store.is_const(cond)) {
                if (m_store.const_value(cond) != 0)
                    return jump_to(std::move(state), target);
                break; // fall through sequentially
            }

            // Symbolic condition: fork.
            MachineState taken = state;
            taken.path_condition.push_back(cond);
            MachineState fall = std::move(state);
            fall.path_condition.push_back(m_store.op_not(cond));

            StepEffect out = jump_to(std::move(taken), target);
            if (out.kind == StepEffect::Kind::Halt) {
                // A conditional jump straight to the sentinel still forks;
                // the taken side is a completed path.
                StepEffect branch;
                branch.kind = StepEffect::Kind::Branch;
                branch.state = std::move(out.state);
                branch.fallthrough = std::move(fall);
                return branch;
            }
            out.kind = StepEffect::Kind::Branch;
            out.fallthrough = std::move(fall);
            return out;
        }
    }

    eff.kind = StepEffect::Kind::Continue;
    eff.state = std::move(state);
    return eff;
}

std::vector<Path> Engine::run(const FunctionImage& image, uint32_t entry,
                              const REQuery& query, const Abi& abi,
                              const ExecLimits& limits, RunStats* stats)
{
    if (!image.contains(entry))
        fail(Err::EntryOutOfRange, "entry address outside the image");

    using Clock = std::chrono::steady_clock;
    auto seconds_since = [](Clock::time_point t0) {
        return std::chrono::duration<double>(Clock::now() - t0).count();
    };

    struct Work {
        MachineState state;
        std::shared_ptr<const LiftedBlock> block; // in-progress block, or null
        size_t index = 0;
    };

    std::vector<Path> paths;
    std::vector<Work> stack;

    MachineState init = init_state(query, abi, entry);
    stack.push_back(Work{std::move(init), nullptr, 0});

    auto finish = [&](MachineState&& st, PathStatus status, std::string note = {}) {
        Path p;
        p.return_value = st.regs[size_t(il::Reg::Eax)];
        p.il_executed = st.step;
        p.final_state = std::move(st);
        p.status = status;
        p.note = std::move(note);
        paths.push_back(std::move(p));
    };

    while (!stack.empty()) {
        if (paths.size() >= limits.max_paths) {
            for (Work& w : stack)
                finish(std::move(w.state), PathStatus::PathLimitDropped);
            break;
        }
        Work w = std::move(stack.back());
        stack.pop_back();

        MachineState state = std::move(w.state);
        std::shared_ptr<const LiftedBlock> block = std::move(w.block);
        size_t index = w.index;
        bool done = false;

        while (!done) {
            if (!block) {
                TermId eip = state.eip();
                assert(m_store.is_const(eip));
                uint32_t pc = uint32_t(m_store.const_value(eip));
                if (pc == m_opts.return_sentinel) {
                    finish(std::move(state), PathStatus::Returned);
                    break;
                }
                if (state.step >= limits.max_steps) {
                    finish(std::move(state), PathStatus::StepLimit);
                    break;
                }
                try {
                    auto t0 = Clock::now();
                    x86::Instruction ins = x86::decode_one(image, pc);
                    if (stats)
                        stats->decode_seconds += seconds_since(t0);
                    auto t1 = Clock::now();
                    block = std::make_shared<const LiftedBlock>(lift(ins));
                    if (stats) {
                        stats->lift_seconds += seconds_since(t1);
                        stats->blocks_lifted += 1;
                    }
                    index = 0;
                } catch (const Error& e) {
                    PathStatus st = e.code() == Err::UnliftableInstruction
                                        ? PathStatus::UnliftableFailure
                                        : PathStatus::DecodeFailure;
                    finish(std::move(state), st, e.what());
                    break;
                }
                state.executed.push_back(block);
            }

            struct ExecTimer {
                RunStats* stats;
                Clock::time_point t0 = Clock::now();
                ~ExecTimer()
                {
                    if (stats)
                        stats->exec_seconds +=
                            std::chrono::duration<double>(Clock::now() - t0).count();
                }
            } exec_timer{stats};

            bool jumped = false;
            while (index < block->il.size()) {
                if (state.step >= limits.max_steps) {
                    finish(std::move(state), PathStatus::StepLimit);
                    done = true;
                    break;
                }
                const il::Instruction& ins = block->il[index];
                // Catch symbolic jump targets before the state is consumed,
                // so the failed path keeps its trace.
                if (ins.op == il::Op::Jcc && !m_store.is_const(read_operand(state, ins.c))) {
                    finish(std::move(state), PathStatus::SymbolicJump,
                           "jump target is symbolic at native " +
                               std::to_string(ins.addr.native));
                    done = true;
                    break;
                }
                StepEffect eff = step_il(std::move(state), ins);
                ++index;

                if (eff.kind == StepEffect::Kind::Halt) {
                    finish(std::move(eff.state), PathStatus::Returned);
                    done = true;
                    break;
                }
                if (eff.kind == StepEffect::Kind::Branch) {
                    bool keep_fall = true, keep_taken = true;
                    if (limits.fork_feasibility_check && m_opts.feasible) {
                        keep_taken = m_opts.feasible(eff.state);
                        keep_fall = m_opts.feasible(*eff.fallthrough);
                    }
                    if (keep_fall)
                        stack.push_back(Work{std::move(*eff.fallthrough), block, index});
                    if (!keep_taken) {
                        done = true; // dropped as infeasible
                        break;
                    }
                    bool taken_halts =
                        uint32_t(m_store.const_value(eff.state.eip())) ==
                        m_opts.return_sentinel;
                    if (taken_halts) {
                        finish(std::move(eff.state), PathStatus::Returned);
                        done = true;
                        break;
                    }
                    state = std::move(eff.state);
                    jumped = true;
                    break; // taken side leaves the block
                }
                state = std::move(eff.state);
                if (eff.jumped) {
                    jumped = true;
                    break;
                }
            }
            if (done)
                break;

            if (!jumped && index >= block->il.size()) {
                // Sequential fall-through to the next native instruction.
                uint32_t next = block->source.addr + block->source.length;
                state.regs[size_t(il::Reg::Eip)] = m_store.constant(32, next);
            }
            block = nullptr;
            index = 0;
        }
    }
    return paths;
}

} // namespace resmt::symex
