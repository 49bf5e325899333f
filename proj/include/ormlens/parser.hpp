#pragma once

#include "ormlens/app_model.hpp"

#include <string_view>

namespace ormlens {

/// Parse RailLite source into an application IR and validate it.
/// Throws SyntaxError, DuplicateDeclaration, or UnresolvedReference (first diagnostic).
AppIR parse_app(std::string_view source, std::string_view appName = "app");

/// Parse without running validation. Syntax and duplicate-declaration errors still throw.
AppIR parse_app_unchecked(std::string_view source, std::string_view appName = "app");

} // namespace ormlens
