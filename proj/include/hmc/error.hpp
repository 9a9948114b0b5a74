#ifndef HMC_ERROR_HPP
#define HMC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hmc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class EmptyMeshError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DegenerateError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class TargetTooSmallError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class MisuseError : public Error {
public:
    using Error::Error;
};

class NanLossError : public Error {
public:
    NanLossError(int epoch, const std::string& term)
        : Error("non-finite loss at epoch " + std::to_string(epoch) + " in term '" + term + "'"),
          epoch_(epoch), term_(term) {}
    int epoch() const noexcept { return epoch_; }
    const std::string& term() const noexcept { return term_; }

private:
    int epoch_;
    std::string term_;
};

}  // namespace hmc

#endif  // HMC_ERROR_HPP
