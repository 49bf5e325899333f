#pragma once

#include "ormlens/afg.hpp"
#include "ormlens/parser.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace testing {

inline std::string read_fixture(const std::string& name)
{
    std::ifstream in(std::string(ORMLENS_FIXTURES) + "/" + name);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline ormlens::AppIR load(const std::string& name) { return ormlens::parse_app(read_fixture(name), name); }

inline std::vector<int> nodes_of(const ormlens::Afg& g, ormlens::NodeKind k) { return g.nodes_of_kind(k); }

} // namespace testing
