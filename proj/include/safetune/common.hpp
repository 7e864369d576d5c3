#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace safetune {

inline constexpr std::size_t kDims = 3;

// (Kp, Kv, Ti)
using Point = std::array<double, kDims>;
using ControllerParams = Point;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Interval {
    double lo = -kInf;
    double hi = kInf;
    double width() const { return hi - lo; }
};

class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Gram matrix could not be factorized even after jitter.
class DegenerateModel : public std::runtime_error {
public:
    DegenerateModel(const std::string& what, std::size_t i, std::size_t j)
        : std::runtime_error(what), first(i), second(j) {}
    std::size_t first;
    std::size_t second;
};

// Raw confidence interval became disjoint from the cached one.
class ModelInconsistency : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SimulationError : public std::runtime_error {
public:
    SimulationError(const std::string& what, std::size_t iteration)
        : std::runtime_error(what), iteration(iteration) {}
    std::size_t iteration;
};

class EmptyFeasibleSet : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace safetune
