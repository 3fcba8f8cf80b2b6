#pragma once

#include <stdexcept>
#include <string>

namespace twinmix {

// Base class for all library errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid parameter or precondition violation (bad rho, sigma2, level, ...).
struct invalid_argument : error {
    using error::error;
};

// Input file could not be parsed; carries the 1-based line number.
struct parse_error : error {
    parse_error(const std::string& msg, long line_number)
        : error(msg + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
    long line;
};

// Data carry no usable variation (all values identical, sigma2 below floor).
struct degenerate_data_error : error {
    using error::error;
};

// An optimizer could not produce a usable fit.
struct convergence_error : error {
    using error::error;
};

}  // namespace twinmix
