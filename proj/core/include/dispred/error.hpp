#ifndef DISPRED_ERROR_HPP
#define DISPRED_ERROR_HPP

#include <stdexcept>
#include <string>

namespace dispred {

// Error taxonomy mirrors the CLI exit codes: usage -> 1, data/format -> 2,
// numeric failure -> 3.
enum class ErrorKind { Usage = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }
    const char* kind_name() const {
        switch (kind_) {
        case ErrorKind::Usage: return "usage";
        case ErrorKind::Data: return "data";
        case ErrorKind::Numeric: return "numeric";
        }
        return "unknown";
    }

private:
    ErrorKind kind_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct ParameterError : Error {
    explicit ParameterError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct CheckpointError : Error {
    explicit CheckpointError(const std::string& msg) : Error(ErrorKind::Data, msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(ErrorKind::Numeric, msg) {}
};

} // namespace dispred

#endif
