#ifndef COCKTAIL_ERRORS_HPP
#define COCKTAIL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cocktail {

// Broken precondition or API contract; a bug at the call site, not bad user input.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Unusable input data: malformed files, undeclared columns, degenerate datasets.
class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Experiment-level misuse: refit without an incumbent, inconsistent journals.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

} // namespace cocktail

#endif
