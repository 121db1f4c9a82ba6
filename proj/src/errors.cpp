#include "resmt/errors.hpp"

namespace resmt {

const char* err_name(Err e)
{
    switch (e) {
        case Err::FileNotFound: return "FileNotFound";
        case Err::RangeOutOfBounds: return "RangeOutOfBounds";
        case Err::MalformedHex: return "MalformedHex";
        case Err::UnsupportedOpcode: return "UnsupportedOpcode";
        case Err::TruncatedInstruction: return "TruncatedInstruction";
        case Err::UnencodableForm: return "UnencodableForm";
        case Err::ValidationError: return "ValidationError";
        case Err::UnliftableInstruction: return "UnliftableInstruction";
        case Err::TooManyArgs: return "TooManyArgs";
        case Err::EntryOutOfRange: return "EntryOutOfRange";
        case Err::SymbolicJumpTarget: return "SymbolicJumpTarget";
        case Err::QueryParseError: return "QueryParseError";
        case Err::SolverNotFound: return "SolverNotFound";
        case Err::SolverProtocolError: return "SolverProtocolError";
        case Err::ModelParseError: return "ModelParseError";
        case Err::DivideByZero: return "DivideByZero";
        case Err::ObfuscationFailed: return "ObfuscationFailed";
        case Err::UsageError: return "UsageError";
        case Err::Internal: return "Internal";
    }
    return "Unknown";
}

Error::Error(Err code, const std::string& msg)
    : std::runtime_error(std::string(err_name(code)) + ": " + msg), m_code(code)
{
}

void fail(Err code, const std::string& msg) { throw Error(code, msg); }

} // namespace resmt
