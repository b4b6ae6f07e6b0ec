#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mavqa {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(std::string message) : std::runtime_error(std::move(message)) {}
};

// ── questions & datasets ────────────────────────────────────────

class EmptyQuestionError : public Error {
public:
    using Error::Error;
};

class DuplicateOptionsError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    SchemaError(std::size_t record_index, std::string field, const std::string& detail)
        : Error("dataset record " + std::to_string(record_index) + ", field '" + field +
                "': " + detail),
          record_index(record_index),
          field(std::move(field)) {}

    std::size_t record_index;
    std::string field;
};

class MissingGoldError : public Error {
public:
    using Error::Error;
};

class EmptyRunError : public Error {
public:
    using Error::Error;
};

class QuestionSetMismatchError : public Error {
public:
    using Error::Error;
};

// ── captioning ──────────────────────────────────────────────────

class InvalidWindowConfigError : public Error {
public:
    using Error::Error;
};

class NoCaptionsError : public Error {
public:
    using Error::Error;
};

// ── scene graphs ────────────────────────────────────────────────

class MalformedTripletError : public Error {
public:
    MalformedTripletError(std::size_t line_number, std::string content)
        : Error("malformed triplet at line " + std::to_string(line_number) + ": " + content),
          line_number(line_number),
          content(std::move(content)) {}

    std::size_t line_number;  // 1-based
    std::string content;
};

class NoGraphsError : public Error {
public:
    using Error::Error;
};

class InvalidSpanError : public Error {
public:
    using Error::Error;
};

// ── agents ──────────────────────────────────────────────────────

class EmptyQueryError : public Error {
public:
    using Error::Error;
};

class UnknownToolError : public Error {
public:
    using Error::Error;
};

class InvalidOptionError : public Error {
public:
    using Error::Error;
};

class BudgetExceededNoAnswerError : public Error {
public:
    using Error::Error;
};

class MalformedModelOutputError : public Error {
public:
    using Error::Error;
};

// ── backends ────────────────────────────────────────────────────

class BackendFailureError : public Error {
public:
    explicit BackendFailureError(const std::string& message, bool retryable = false,
                                 int window = -1)
        : Error(message), retryable(retryable), window(window) {}

    bool retryable;
    int window;  // caption window index when raised mid-captioning, else -1
};

class CassetteMissError : public Error {
public:
    explicit CassetteMissError(std::string key)
        : Error("cassette miss for request key " + key), key(std::move(key)) {}

    std::string key;
};

// ── organizer & runs ────────────────────────────────────────────

class UnmatchableAnswerError : public Error {
public:
    using Error::Error;
};

class RunFailedError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace mavqa
