#ifndef DRBL_ERRORS_HPP
#define DRBL_ERRORS_HPP

#include <iostream>
#include <stdexcept>
#include <string>

namespace drbl {

/// Base class for every error raised by the library. `module()` names the
/// subsystem so the CLI can report where a failure originated.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& what)
        : std::runtime_error(what), module_(std::move(module)) {}
    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("numerics", what) {}
    DimensionError(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
    ConfigError(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

class LabelError : public Error {
public:
    LabelError(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

class NumericError : public Error {
public:
    NumericError(std::string module, const std::string& what) : Error(std::move(module), what) {}
};

/// Missing files, ragged rows, row-count disagreements.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error("data", what) {}
};

inline void warn(const std::string& message) { std::clog << "warning: " << message << '\n'; }

} // namespace drbl

#endif // DRBL_ERRORS_HPP
