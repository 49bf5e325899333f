#include "ormlens/error.hpp"

namespace ormlens {

const char* error_code_name(ErrorCode code)
{
    switch (code) {
    case ErrorCode::Syntax: return "SyntaxError";
    case ErrorCode::UnresolvedReference: return "UnresolvedReference";
    case ErrorCode::DuplicateDeclaration: return "DuplicateDeclaration";
    case ErrorCode::UnknownAction: return "UnknownAction";
    case ErrorCode::UnroutedTarget: return "UnroutedTarget";
    case ErrorCode::UnboundParameter: return "UnboundParameter";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::NothingToPrune: return "NothingToPrune";
    case ErrorCode::NotCombinable: return "NotCombinable";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Analysis: return "AnalysisError";
    }
    return "Error";
}

SyntaxError::SyntaxError(SourceLoc loc, std::string expected, std::string found)
    : Error(ErrorCode::Syntax,
            "syntax error at " + to_string(loc) + ": expected " + expected + ", found " + found, loc),
      expected_(std::move(expected))
{
}

UnresolvedReference::UnresolvedReference(std::string name, SourceLoc loc)
    : Error(ErrorCode::UnresolvedReference, "unresolved reference '" + name + "' at " + to_string(loc), loc),
      name_(std::move(name))
{
}

DuplicateDeclaration::DuplicateDeclaration(std::string name, SourceLoc loc)
    : Error(ErrorCode::DuplicateDeclaration, "duplicate declaration '" + name + "' at " + to_string(loc), loc),
      name_(std::move(name))
{
}

} // namespace ormlens
