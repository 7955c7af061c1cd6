#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idiomgen/gradcheck.hpp"

namespace idiomgen {

inline constexpr double kGradCheckTolerance = 1e-4;

/// Modules with a toy gradient check: retrieval, extractor, generator.
const std::vector<std::string>& gradcheck_modules();

/// Finite-difference check of one module's training loss on a toy model
/// (vocabulary of 20, generator hidden 8, 5-token input). Throws
/// std::invalid_argument for an unknown module.
GradCheckResult gradcheck_module(const std::string& module, std::uint64_t seed = 7);

}  // namespace idiomgen
