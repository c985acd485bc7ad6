#pragma once

#include <stdexcept>
#include <string>

namespace rationalets {

// Base for every error raised by the library. Subclasses name the failure
// category so callers (and tests) can dispatch on it.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define RATIONALETS_DEFINE_ERROR(Name)          \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

// data
RATIONALETS_DEFINE_ERROR(SchemaError);
RATIONALETS_DEFINE_ERROR(ParseError);
RATIONALETS_DEFINE_ERROR(OrderingError);
RATIONALETS_DEFINE_ERROR(InsufficientDataError);
RATIONALETS_DEFINE_ERROR(TaskError);

// chart
RATIONALETS_DEFINE_ERROR(RenderError);

// backend
RATIONALETS_DEFINE_ERROR(TransportError);
RATIONALETS_DEFINE_ERROR(ReplayMissError);
RATIONALETS_DEFINE_ERROR(PreconditionError);

class RequestError : public Error {
public:
    RequestError(int status, std::string body)
        : Error("request rejected with HTTP " + std::to_string(status) + ": " + body),
          status_(status),
          body_(std::move(body)) {}

    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

// rationale base / retrieval / inference / eval
RATIONALETS_DEFINE_ERROR(FormatError);
RATIONALETS_DEFINE_ERROR(ShapeError);
RATIONALETS_DEFINE_ERROR(ParameterError);
RATIONALETS_DEFINE_ERROR(StateError);
RATIONALETS_DEFINE_ERROR(ConsistencyError);
RATIONALETS_DEFINE_ERROR(ModeError);
RATIONALETS_DEFINE_ERROR(ConfigError);
RATIONALETS_DEFINE_ERROR(SummaryError);

#undef RATIONALETS_DEFINE_ERROR

}  // namespace rationalets
