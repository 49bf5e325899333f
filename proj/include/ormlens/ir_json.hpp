#pragma once

#include "ormlens/app_model.hpp"

#include <json.hpp>

namespace ormlens {

inline constexpr int kIrVersion = 1;

/// Canonical IR interchange document (`"irVersion": 1`).
nlohmann::json app_to_json(const AppIR& ir);

/// Throws Error(InvalidArgument) on schema mismatch or unsupported version.
AppIR app_from_json(const nlohmann::json& doc);

nlohmann::json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);

} // namespace ormlens
