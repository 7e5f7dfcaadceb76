#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace evidencesql {

/// Root of every error the engine raises. `kind()` is a stable identifier
/// used in machine-readable error payloads.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define EVIDENCESQL_ERROR(Name)                                   \
    class Name : public Error {                                   \
    public:                                                       \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    }

// feature store
EVIDENCESQL_ERROR(ParseError);
EVIDENCESQL_ERROR(ManifestError);
EVIDENCESQL_ERROR(TypeMismatch);
EVIDENCESQL_ERROR(DomainViolation);
EVIDENCESQL_ERROR(CardinalityError);
EVIDENCESQL_ERROR(SidecarError);

// execution
EVIDENCESQL_ERROR(TableNotInBundle);

// agents
EVIDENCESQL_ERROR(BackendError);
EVIDENCESQL_ERROR(EmptyGeneration);

// knowledge validation
EVIDENCESQL_ERROR(MissingLabel);
EVIDENCESQL_ERROR(NonFiniteObservation);
EVIDENCESQL_ERROR(NoEvidence);
EVIDENCESQL_ERROR(PreconditionViolation);

// fusion / report
EVIDENCESQL_ERROR(OptionMismatch);
EVIDENCESQL_ERROR(DanglingQueryId);

// cli
EVIDENCESQL_ERROR(ConfigError);

#undef EVIDENCESQL_ERROR

/// Wraps an ingestion failure with the case it came from.
class CaseLoadError : public Error {
public:
    CaseLoadError(std::string case_id, std::string inner_kind, const std::string& message)
        : Error("CaseLoadError", "case '" + case_id + "': " + message),
          case_id_(std::move(case_id)),
          inner_kind_(std::move(inner_kind)) {}
    const std::string& case_id() const noexcept { return case_id_; }
    const std::string& inner_kind() const noexcept { return inner_kind_; }

private:
    std::string case_id_;
    std::string inner_kind_;
};

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t offset, std::vector<std::string> expected, const std::string& message)
        : Error("SyntaxError", message), offset_(offset), expected_(std::move(expected)) {}
    std::size_t offset() const noexcept { return offset_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }

private:
    std::size_t offset_;
    std::vector<std::string> expected_;
};

class UnsupportedFeature : public Error {
public:
    UnsupportedFeature(std::size_t offset, std::string feature)
        : Error("UnsupportedFeature", "unsupported SQL feature: " + feature),
          offset_(offset),
          feature_(std::move(feature)) {}
    std::size_t offset() const noexcept { return offset_; }
    const std::string& feature() const noexcept { return feature_; }

private:
    std::size_t offset_;
    std::string feature_;
};

class ArithmeticDomain : public Error {
public:
    ArithmeticDomain(const std::string& message, std::optional<std::size_t> row)
        : Error("ArithmeticDomain", message), row_(row) {}
    /// Source row index in the queried table, when attributable to one row.
    std::optional<std::size_t> row() const noexcept { return row_; }

private:
    std::optional<std::size_t> row_;
};

}  // namespace evidencesql
