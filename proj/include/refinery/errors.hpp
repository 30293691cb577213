#pragma once

#include <stdexcept>
#include <string>

namespace refinery {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed corpus or result file; carries the 1-based line number.
class CorpusError : public Error {
public:
    CorpusError(const std::string& msg, long line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

// Model output that could not be parsed even after repair.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg, std::string raw = {})
        : Error(msg), raw_(std::move(raw)) {}
    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

// Parsed output whose element count does not match the expected cardinality.
class CardinalityError : public Error {
public:
    using Error::Error;
};

// Network or protocol failure after the retry budget is exhausted.
class TransportError : public Error {
public:
    using Error::Error;
};

// Strict replay asked for a request digest that is not on the tape.
class ReplayMissError : public Error {
public:
    explicit ReplayMissError(const std::string& digest)
        : Error("replay miss for request digest " + digest), digest_(digest) {}
    const std::string& digest() const { return digest_; }

private:
    std::string digest_;
};

// Corrupt record/replay tape; carries the 1-based line number.
class TapeError : public Error {
public:
    TapeError(const std::string& msg, long line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

// Invalid configuration, plan file, or command-line usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace refinery
