#pragma once

#include <stdexcept>
#include <string>

namespace hitgeo {

// Base for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error("shape mismatch: " + msg) {}
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& msg) : Error("invalid argument: " + msg) {}
};

struct InvalidEdge : Error {
    explicit InvalidEdge(const std::string& msg) : Error("invalid edge: " + msg) {}
};

struct NotStronglyConnected : Error {
    explicit NotStronglyConnected(const std::string& msg) : Error("not strongly connected: " + msg) {}
};

struct GenerationFailed : Error {
    explicit GenerationFailed(const std::string& msg) : Error("generation failed: " + msg) {}
};

struct TrajectoryTooShort : Error {
    explicit TrajectoryTooShort(const std::string& msg) : Error("trajectory too short: " + msg) {}
};

struct GoalUnreachable : Error {
    explicit GoalUnreachable(const std::string& msg) : Error("goal unreachable: " + msg) {}
};

struct NonFiniteInput : Error {
    explicit NonFiniteInput(const std::string& msg) : Error("non-finite input: " + msg) {}
};

struct NoTape : Error {
    explicit NoTape(const std::string& msg) : Error("no tape: " + msg) {}
};

struct FrozenViolation : Error {
    explicit FrozenViolation(const std::string& msg) : Error("frozen violation: " + msg) {}
};

struct NotFrozen : Error {
    explicit NotFrozen(const std::string& msg) : Error("not frozen: " + msg) {}
};

struct PhaseOrderViolation : Error {
    explicit PhaseOrderViolation(const std::string& msg) : Error("phase order violation: " + msg) {}
};

struct TooFewCandidates : Error {
    explicit TooFewCandidates(const std::string& msg) : Error("too few candidates: " + msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

struct VerificationFailure : Error {
    explicit VerificationFailure(const std::string& msg) : Error("verification failure: " + msg) {}
};

}  // namespace hitgeo
