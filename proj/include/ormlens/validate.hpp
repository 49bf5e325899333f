#pragma once

#include "ormlens/app_model.hpp"

#include <string>
#include <vector>

namespace ormlens {

enum class DiagnosticKind { UnresolvedReference, InvalidDeclaration };

struct Diagnostic {
    DiagnosticKind kind = DiagnosticKind::UnresolvedReference;
    std::string name;
    std::string message;
    SourceLoc loc;
    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

/// Check every AppIR invariant. Empty result iff the IR is well formed.
std::vector<Diagnostic> validate(const AppIR& ir);

} // namespace ormlens
