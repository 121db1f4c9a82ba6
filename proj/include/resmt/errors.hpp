#pragma once

#include <stdexcept>
#include <string>

namespace resmt {

enum class Err {
    FileNotFound,
    RangeOutOfBounds,
    MalformedHex,
    UnsupportedOpcode,
    TruncatedInstruction,
    UnencodableForm,
    ValidationError,
    UnliftableInstruction,
    TooManyArgs,
    EntryOutOfRange,
    SymbolicJumpTarget,
    QueryParseError,
    SolverNotFound,
    SolverProtocolError,
    ModelParseError,
    DivideByZero,
    ObfuscationFailed,
    UsageError,
    Internal,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
  public:
    Error(Err code, const std::string& msg);
    Err code() const { return m_code; }

  private:
    Err m_code;
};

[[noreturn]] void fail(Err code, const std::string& msg);

} // namespace resmt
