#pragma once

#include <stdexcept>
#include <string>

namespace green_route {

/// Shapes that do not line up (player/route counts, vector lengths).
class StructuralError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Values outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace green_route
