#pragma once

// Lightweight model typing for RailLite expressions: which model (if any) a value holds
// records of. Shared by validation and AFG construction.

#include "ormlens/app_model.hpp"

#include <map>
#include <string>

namespace ormlens::detail {

using TypeEnv = std::map<std::string, std::string>; // variable -> model name

/// Model whose records (or relation) `e` evaluates to, or "" for scalars and unknowns.
std::string expr_model(const AppIR& ir, const Expr& e, const TypeEnv& env, int depth = 0);

/// Extend `env` with the types of variables bound in `body` (flow-insensitive).
void collect_types(const AppIR& ir, const Block& body, TypeEnv& env, int depth = 0);

} // namespace ormlens::detail
