#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "resmt/buildcfg.hpp"
#include "resmt/errors.hpp"
#include "resmt/smtlib.hpp"

namespace resmt::smt {

namespace {

bool file_exists(const std::string& path)
{
    struct stat st{};
    return ::stat(path.c_str(), &st) == 0 && S_ISREG(st.st_mode);
}

bool on_path(const std::string& name)
{
    const char* path = ::getenv("PATH");
    if (!path)
        return false;
    std::istringstream in(path);
    std::string dir;
    while (std::getline(in, dir, ':')) {
        if (dir.empty())
            continue;
        std::string full = dir + "/" + name;
        if (::access(full.c_str(), X_OK) == 0)
            return true;
    }
    return false;
}

std::vector<std::string> split_command(const std::string& command,
                                       const std::string& file)
{
    std::vector<std::string> argv;
    std::istringstream in(command);
    std::string tok;
    bool substituted = false;
    while (in >> tok) {
        size_t at = tok.find("{file}");
        if (at != std::string::npos) {
            tok.replace(at, 6, file);
            substituted = true;
        }
        argv.push_back(tok);
    }
    if (argv.empty())
        fail(Err::SolverNotFound, "empty solver command");
    if (!substituted)
        argv.push_back(file);
    return argv;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents)
    {
        char name[] = "/tmp/resmt_XXXXXX.smt2";
        int fd = ::mkstemps(name, 5);
        if (fd < 0)
            fail(Err::Internal, "mkstemps failed");
        path = name;
        ssize_t n = ::write(fd, contents.data(), contents.size());
        ::close(fd);
        if (n != ssize_t(contents.size()))
            fail(Err::Internal, "short write to " + path);
    }
    ~TempFile() { ::unlink(path.c_str()); }
};

} // namespace

SolverConfig default_solver_config()
{
    SolverConfig cfg;
    if (const char* env = ::getenv("RESMT_SOLVER_CMD"); env && *env) {
        cfg.command = env;
        return cfg;
    }
    if (on_path("z3")) {
        cfg.command = "z3";
        return cfg;
    }
    std::string bundled = std::string(RESMT_BUNDLED_SOLVER_DIR) + "/z3cli.js";
    if (file_exists(bundled)) {
        cfg.command = "node " + bundled;
        return cfg;
    }
    cfg.command.clear(); // resolved lazily; solve() reports SolverNotFound
    return cfg;
}

SolveResult solve(const std::string& script, const SolverConfig& config)
{
    if (config.command.empty())
        fail(Err::SolverNotFound,
             "no solver configured; set RESMT_SOLVER_CMD or install the bundled wrapper");

    TempFile file(script);
    std::vector<std::string> argv = split_command(config.command, file.path);

    int out_pipe[2];
    if (::pipe(out_pipe) != 0)
        fail(Err::Internal, "pipe failed");

    auto start = std::chrono::steady_clock::now();
    pid_t pid = ::fork();
    if (pid < 0)
        fail(Err::Internal, "fork failed");
    if (pid == 0) {
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(out_pipe[1], STDERR_FILENO);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        std::vector<char*> cargv;
        for (auto& a : argv)
            cargv.push_back(a.data());
        cargv.push_back(nullptr);
        ::execvp(cargv[0], cargv.data());
        ::_exit(127);
    }
    ::close(out_pipe[1]);

    std::string output;
    char buf[4096];
    bool timed_out = false;
    double deadline_ms = config.timeout_sec * 1000.0;

    for (;;) {
        auto elapsed = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        int wait_ms = int(deadline_ms - elapsed);
        if (wait_ms <= 0) {
            timed_out = true;
            break;
        }
        struct pollfd pfd{out_pipe[0], POLLIN, 0};
        int rc = ::poll(&pfd, 1, wait_ms > 200 ? 200 : wait_ms);
        if (rc < 0 && errno != EINTR)
            break;
        if (rc > 0) {
            ssize_t n = ::read(out_pipe[0], buf, sizeof buf);
            if (n <= 0)
                break; // eof
            output.append(buf, size_t(n));
        }
    }
    ::close(out_pipe[0]);

    int status = 0;
    if (timed_out) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
    } else {
        ::waitpid(pid, &status, 0);
    }

    SolveResult result;
    result.solver_time = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    if (timed_out) {
        result.verdict = Verdict::Timeout;
        return result;
    }
    if (WIFEXITED(status) && WEXITSTATUS(status) == 127)
        fail(Err::SolverNotFound, "cannot execute '" + argv[0] + "'");

    // First sat/unsat/unknown token decides the verdict.
    std::istringstream in(output);
    std::string tok;
    bool found = false;
    while (in >> tok) {
        if (tok == "sat") {
            result.verdict = Verdict::Sat;
            found = true;
            break;
        }
        if (tok == "unsat") {
            result.verdict = Verdict::Unsat;
            found = true;
            break;
        }
        if (tok == "unknown" || tok == "timeout") {
            result.verdict = Verdict::Unknown;
            found = true;
            break;
        }
    }
    if (!found) {
        std::string head = output.substr(0, 200);
        fail(Err::SolverProtocolError,
             "no verdict in solver output (exit " +
                 std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : -1) +
                 "): " + head);
    }
    if (result.verdict == Verdict::Sat)
        result.model = parse_model(output);
    return result;
}

std::map<std::string, uint64_t> parse_model(const std::string& text)
{
    // Light s-expression scan: after each `define-fun <name>`, take the
    // first bit-vector literal before the closing paren at its depth.
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (ch == '(' || ch == ')') {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
            tokens.push_back(std::string(1, ch));
        } else if (isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty())
        tokens.push_back(cur);

    auto parse_literal = [](const std::string& tok, uint64_t& value) -> bool {
        if (tok.size() > 2 && tok[0] == '#' && tok[1] == 'x') {
            value = 0;
            for (size_t i = 2; i < tok.size(); ++i) {
                char c = char(tolower(static_cast<unsigned char>(tok[i])));
                int d = c >= '0' && c <= '9' ? c - '0'
                        : c >= 'a' && c <= 'f' ? c - 'a' + 10
                                               : -1;
                if (d < 0)
                    return false;
                value = value << 4 | uint64_t(d);
            }
            return true;
        }
        if (tok.size() > 2 && tok[0] == '#' && tok[1] == 'b') {
            value = 0;
            for (size_t i = 2; i < tok.size(); ++i) {
                if (tok[i] != '0' && tok[i] != '1')
                    return false;
                value = value << 1 | uint64_t(tok[i] - '0');
            }
            return true;
        }
        if (tok.size() > 2 && tok[0] == 'b' && tok[1] == 'v') {
            for (size_t i = 2; i < tok.size(); ++i)
                if (!isdigit(static_cast<unsigned char>(tok[i])))
                    return false;
            value = std::strtoull(tok.c_str() + 2, nullptr, 10);
            return true;
        }
        return false;
    };

    std::map<std::string, uint64_t> model;
    for (size_t i = 0; i + 1 < tokens.size(); ++i) {
        if (tokens[i] != "define-fun")
            continue;
        const std::string& name = tokens[i + 1];
        if (name == "(" || name == ")")
            fail(Err::ModelParseError, "malformed define-fun");
        int depth = 1; // inside the (define-fun ...) form
        for (size_t j = i + 2; j < tokens.size() && depth > 0; ++j) {
            if (tokens[j] == "(")
                ++depth;
            else if (tokens[j] == ")")
                --depth;
            else if (tokens[j] == "Array")
                break; // not a bit-vector constant
            else {
                uint64_t value = 0;
                if (parse_literal(tokens[j], value)) {
                    model[name] = value;
                    break;
                }
            }
        }
    }
    return model;
}

} // namespace resmt::smt
