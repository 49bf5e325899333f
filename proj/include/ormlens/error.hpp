#pragma once

#include "ormlens/value.hpp"

#include <stdexcept>
#include <string>

namespace ormlens {

enum class ErrorCode {
    Syntax,
    UnresolvedReference,
    DuplicateDeclaration,
    UnknownAction,
    UnroutedTarget,
    UnboundParameter,
    UnknownColumn,
    NothingToPrune,
    NotCombinable,
    InvalidArgument,
    UnsupportedFormat,
    Io,
    Analysis,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message, SourceLoc loc = {})
        : std::runtime_error(std::move(message)), code_(code), loc_(loc) {}

    ErrorCode code() const noexcept { return code_; }
    const SourceLoc& location() const noexcept { return loc_; }

private:
    ErrorCode code_;
    SourceLoc loc_;
};

class SyntaxError : public Error {
public:
    SyntaxError(SourceLoc loc, std::string expected, std::string found);
    const std::string& expected() const noexcept { return expected_; }

private:
    std::string expected_;
};

class UnresolvedReference : public Error {
public:
    UnresolvedReference(std::string name, SourceLoc loc);
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

class DuplicateDeclaration : public Error {
public:
    DuplicateDeclaration(std::string name, SourceLoc loc);
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

} // namespace ormlens
