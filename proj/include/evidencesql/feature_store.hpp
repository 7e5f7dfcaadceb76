#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "evidencesql/json_util.hpp"
#include "evidencesql/value.hpp"

namespace evidencesql {

enum class Level { LocalCellular, LocalArchitecture, Global };

const char* level_name(Level level);

struct ColumnSchema {
    std::string name;
    Dtype dtype = Dtype::Real;
    std::optional<std::string> unit;
    std::optional<std::vector<std::string>> categorical_domain;

    /// Key columns (`*_id`) never hold nulls.
    bool is_key() const;
    bool operator==(const ColumnSchema&) const = default;
};

struct TableSchema {
    std::string name;
    Level level = Level::LocalCellular;
    std::vector<ColumnSchema> columns;

    const ColumnSchema* find_column(std::string_view column) const;
    std::optional<std::size_t> column_index(std::string_view column) const;
    bool is_global() const { return level == Level::Global; }
    bool operator==(const TableSchema&) const = default;
};

/// Typed description of every feature table a case carries. Construction
/// checks all invariants; instances are immutable afterwards.
class SchemaManifest {
public:
    /// Throws ManifestError on invariant violations, ParseError on shape errors.
    static SchemaManifest from_json(const Json& j);
    Json to_json() const;

    const std::string& version() const { return version_; }
    const std::vector<TableSchema>& tables() const { return tables_; }
    const TableSchema* find_table(std::string_view name) const;
    /// Tables at the given level, in manifest order.
    std::vector<const TableSchema*> tables_at(Level level) const;

    bool operator==(const SchemaManifest&) const = default;

private:
    SchemaManifest() = default;
    std::string version_;
    std::vector<TableSchema> tables_;
};

SchemaManifest load_manifest(const std::filesystem::path& path);

/// Column-major table; every stored value satisfies its column's dtype and
/// categorical domain.
class FeatureTable {
public:
    /// Validates the columns against the schema; throws TypeMismatch or
    /// DomainViolation.
    static FeatureTable create(TableSchema schema, std::vector<std::vector<Value>> columns);

    const TableSchema& schema() const { return schema_; }
    std::size_t row_count() const { return row_count_; }
    std::size_t column_count() const { return columns_.size(); }
    const std::vector<Value>& column(std::size_t index) const { return columns_.at(index); }
    const Value& at(std::size_t row, std::size_t col) const { return columns_[col][row]; }

    bool operator==(const FeatureTable&) const = default;

private:
    FeatureTable() = default;
    TableSchema schema_;
    std::vector<std::vector<Value>> columns_;
    std::size_t row_count_ = 0;
};

/// All structured data for one case. No mutation after construction.
class CaseBundle {
public:
    using ProbVector = std::vector<std::pair<std::string, double>>;

    CaseBundle(std::string case_id, std::map<std::string, FeatureTable> tables,
               std::optional<ProbVector> cnn_probs, std::optional<std::string> ground_truth);

    const std::string& case_id() const { return case_id_; }
    const std::map<std::string, FeatureTable>& tables() const { return tables_; }
    const FeatureTable* find_table(std::string_view name) const;
    /// Sorted by label.
    const std::optional<ProbVector>& cnn_probs() const { return cnn_probs_; }
    const std::optional<std::string>& ground_truth() const { return ground_truth_; }

    bool operator==(const CaseBundle&) const = default;

private:
    std::string case_id_;
    std::map<std::string, FeatureTable> tables_;
    std::optional<ProbVector> cnn_probs_;
    std::optional<std::string> ground_truth_;
};

struct Sidecar {
    std::optional<CaseBundle::ProbVector> cnn_probs;
    std::optional<std::string> ground_truth;
};

/// Parses `{cnn_probs: {label: prob}?, ground_truth: label?}`; probabilities
/// must lie in [0,1] and sum to 1 within 1e-6 (SidecarError otherwise).
Sidecar parse_sidecar(const Json& j);

/// Parses CSV text (header row mandatory, empty unquoted field = null).
FeatureTable read_table_csv(const TableSchema& schema, std::string_view text);
/// Inverse of read_table_csv; reals use the shortest round-trip form.
std::string write_table_csv(const FeatureTable& table);

CaseBundle ingest_case(const SchemaManifest& manifest,
                       const std::map<std::string, std::filesystem::path>& table_files,
                       const std::optional<std::filesystem::path>& sidecar,
                       std::string case_id);

/// Loads `<dir>/<table>.csv` for every manifest table plus an optional
/// `<dir>/sidecar.json`; the case id is the directory name.
CaseBundle load_case_dir(const SchemaManifest& manifest, const std::filesystem::path& dir);

/// One subdirectory per case, returned in lexicographic case-id order.
/// Failures are rethrown as CaseLoadError naming the case.
std::vector<CaseBundle> load_training_split(const SchemaManifest& manifest,
                                            const std::filesystem::path& root);

}  // namespace evidencesql
