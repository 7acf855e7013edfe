#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vdss {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A typed value or call violated a message contract.
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class UnknownModeError : public Error {
public:
    explicit UnknownModeError(std::string mode)
        : Error("unknown ventilation mode '" + mode + "'"), mode_(std::move(mode)) {}
    const std::string& mode() const noexcept { return mode_; }

private:
    std::string mode_;
};

/// Every attempt of an agent call produced output that failed its schema.
class RoleFailure : public Error {
public:
    RoleFailure(std::string role, int attempts)
        : Error("agent role '" + role + "' produced no valid output after " +
                std::to_string(attempts) + " attempts"),
          role_(std::move(role)), attempts_(attempts) {}
    const std::string& role() const noexcept { return role_; }
    int attempts() const noexcept { return attempts_; }

private:
    std::string role_;
    int attempts_;
};

class BackendUnavailable : public Error {
public:
    using Error::Error;
};

/// No candidate plan satisfies bounds, delta limits and revision constraints.
class FeasibilityExhausted : public Error {
public:
    using Error::Error;
};

class IntegrityError : public Error {
public:
    IntegrityError(std::uint64_t offset, const std::string& what)
        : Error("log integrity error at offset " + std::to_string(offset) + ": " + what),
          offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class PersistenceError : public Error {
public:
    using Error::Error;
};

class DatasetError : public Error {
public:
    using Error::Error;
};

}  // namespace vdss
