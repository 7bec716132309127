#pragma once

#include <stdexcept>
#include <string>

namespace fslab {

/// Bad experiment configuration or inconsistent inputs (CLI exit code 2).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Solver blow-up: non-finite amplitudes or norm over the divergence bound
/// (CLI exit code 3).
struct divergence_error : std::runtime_error {
    explicit divergence_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fslab
