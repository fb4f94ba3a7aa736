#pragma once

#include <stdexcept>
#include <string>

namespace jetsym {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SyntaxError : Error {
    std::size_t offset;
    SyntaxError(const std::string& msg, std::size_t off)
        : Error(msg + " (at offset " + std::to_string(off) + ")"), offset(off) {}
};

struct UnknownSymbol : Error {
    using Error::Error;
};

struct JetOrderExceeded : Error {
    using Error::Error;
};

struct PoleError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

struct NotVertical : Error {
    using Error::Error;
};

struct NotInvariant : Error {
    using Error::Error;
};

struct ConstantRankViolation : Error {
    using Error::Error;
};

struct NoSolvedForm : Error {
    using Error::Error;
};

struct NotStandardSymmetry : Error {
    using Error::Error;
};

struct ZeroScaling : Error {
    using Error::Error;
};

struct WrongCount : Error {
    using Error::Error;
};

struct NotExpressible : Error {
    using Error::Error;
};

struct NoCommonFactor : Error {
    using Error::Error;
};

struct NotFound : Error {
    using Error::Error;
};

struct RankDeficientChain : Error {
    using Error::Error;
};

struct NewtonDivergence : Error {
    using Error::Error;
};

struct ProblemFileError : Error {
    using Error::Error;
};

} // namespace jetsym
