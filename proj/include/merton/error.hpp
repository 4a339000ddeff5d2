#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace merton {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

#define MERTON_ERROR_TYPE(Name, tag)                        \
    class Name : public Error {                             \
    public:                                                 \
        using Error::Error;                                 \
        const char* kind() const noexcept override { return tag; } \
    };

MERTON_ERROR_TYPE(BankruptcyError, "bankruptcy")
MERTON_ERROR_TYPE(SingularBridgeError, "singular_bridge")
MERTON_ERROR_TYPE(BlowUpError, "blow_up")
MERTON_ERROR_TYPE(UndefinedGradientError, "undefined_gradient")
MERTON_ERROR_TYPE(CorruptedCriticError, "corrupted_critic")
MERTON_ERROR_TYPE(ValidationError, "validation")
MERTON_ERROR_TYPE(TrainingAbortedError, "training_aborted")

#undef MERTON_ERROR_TYPE

class SimulationDivergenceError : public Error {
public:
    SimulationDivergenceError(const std::string& what, std::size_t step)
        : Error(what + " at step " + std::to_string(step)), step_(step) {}
    const char* kind() const noexcept override { return "simulation_divergence"; }
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    const char* kind() const noexcept override { return "parse"; }
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace merton
