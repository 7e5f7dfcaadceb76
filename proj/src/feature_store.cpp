#include "evidencesql/feature_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "evidencesql/errors.hpp"
#include "evidencesql/sql_parser.hpp"

namespace evidencesql {

namespace fs = std::filesystem;

const char* level_name(Level level) {
    switch (level) {
        case Level::LocalCellular: return "local_cellular";
        case Level::LocalArchitecture: return "local_architecture";
        case Level::Global: return "global";
    }
    return "?";
}

namespace {

Level parse_level(const std::string& s) {
    if (s == "local_cellular") return Level::LocalCellular;
    if (s == "local_architecture") return Level::LocalArchitecture;
    if (s == "global") return Level::Global;
    throw ManifestError("unknown level '" + s + "'");
}

Dtype parse_dtype(const std::string& s) {
    if (s == "integer") return Dtype::Integer;
    if (s == "real") return Dtype::Real;
    if (s == "text") return Dtype::Text;
    throw ManifestError("unknown dtype '" + s + "'");
}

void check_name(const std::string& name, const std::string& what) {
    if (!sql::is_identifier(name)) {
        throw ManifestError(what + " '" + name + "' is not a valid identifier");
    }
    if (sql::is_reserved_word(name)) {
        throw ManifestError(what + " '" + name + "' is a reserved SQL word");
    }
}

template <class T>
T required(const Json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key)) {
        throw ParseError(context + ": missing field '" + key + "'");
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(context + ": field '" + key + "' has the wrong type");
    }
}

// Minimal RFC 4180 reader. `quoted` marks fields that were enclosed in quotes
// so that "" can be told apart from an empty (null) field.
struct CsvField {
    std::string text;
    bool quoted = false;
};

std::vector<std::vector<CsvField>> split_csv(std::string_view text) {
    std::vector<std::vector<CsvField>> rows;
    std::vector<CsvField> row;
    CsvField field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field = CsvField{};
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].text.empty() && !row[0].quoted)) {
            rows.push_back(std::move(row));
        }
        row.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.text += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.text += c;
            }
            continue;
        }
        if (c == '"') {
            if (field_started) {
                throw ParseError("line " + std::to_string(line) + ": stray quote inside unquoted field");
            }
            in_quotes = true;
            field.quoted = true;
            field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            // tolerate CRLF line endings
        } else if (c == '\n') {
            end_row();
            ++line;
        } else {
            if (field.quoted) {
                throw ParseError("line " + std::to_string(line) + ": characters after closing quote");
            }
            field.text += c;
            field_started = true;
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted field");
    if (field_started || !row.empty()) end_row();
    return rows;
}

std::string_view trim_spaces(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

Value coerce(const CsvField& f, const ColumnSchema& col, std::size_t row) {
    const std::string where = "column '" + col.name + "' row " + std::to_string(row);
    if (f.text.empty() && !f.quoted) return Value{};
    switch (col.dtype) {
        case Dtype::Text:
            return Value::text(f.text);
        case Dtype::Integer: {
            std::string_view s = trim_spaces(f.text);
            std::int64_t v = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
                throw TypeMismatch(where + ": '" + f.text + "' is not an integer");
            }
            return Value::integer(v);
        }
        case Dtype::Real: {
            std::string_view s = trim_spaces(f.text);
            double v = 0;
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
                throw TypeMismatch(where + ": '" + f.text + "' is not a finite real");
            }
            return Value::real(v);
        }
    }
    return Value{};
}

std::string csv_escape(const std::string& s) {
    if (s.empty()) return "\"\"";
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

bool ColumnSchema::is_key() const {
    return name.size() > 3 && name.compare(name.size() - 3, 3, "_id") == 0;
}

const ColumnSchema* TableSchema::find_column(std::string_view column) const {
    for (const auto& c : columns) {
        if (c.name == column) return &c;
    }
    return nullptr;
}

std::optional<std::size_t> TableSchema::column_index(std::string_view column) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == column) return i;
    }
    return std::nullopt;
}

SchemaManifest SchemaManifest::from_json(const Json& j) {
    if (!j.is_object()) throw ParseError("manifest must be a JSON object");
    SchemaManifest m;
    m.version_ = required<std::string>(j, "version", "manifest");
    if (!j.contains("tables") || !j.at("tables").is_array()) {
        throw ParseError("manifest: 'tables' must be an array");
    }
    std::set<std::string> table_names;
    for (const auto& tj : j.at("tables")) {
        TableSchema t;
        t.name = required<std::string>(tj, "name", "table");
        check_name(t.name, "table name");
        if (!table_names.insert(t.name).second) {
            throw ManifestError("duplicate table name '" + t.name + "'");
        }
        t.level = parse_level(required<std::string>(tj, "level", "table '" + t.name + "'"));
        if (!tj.contains("columns") || !tj.at("columns").is_array() || tj.at("columns").empty()) {
            throw ParseError("table '" + t.name + "': 'columns' must be a non-empty array");
        }
        std::set<std::string> column_names;
        for (const auto& cj : tj.at("columns")) {
            const std::string ctx = "table '" + t.name + "' column";
            ColumnSchema c;
            c.name = required<std::string>(cj, "name", ctx);
            check_name(c.name, "column name");
            if (!column_names.insert(c.name).second) {
                throw ManifestError("duplicate column '" + c.name + "' in table '" + t.name + "'");
            }
            c.dtype = parse_dtype(required<std::string>(cj, "dtype", ctx + " '" + c.name + "'"));
            if (cj.contains("unit") && !cj.at("unit").is_null()) c.unit = cj.at("unit").get<std::string>();
            if (cj.contains("categorical_domain") && !cj.at("categorical_domain").is_null()) {
                if (c.dtype != Dtype::Text) {
                    throw ManifestError("categorical_domain declared on non-text column '" + t.name + "." +
                                        c.name + "'");
                }
                const auto& dj = cj.at("categorical_domain");
                if (!dj.is_array() || dj.empty()) {
                    throw ManifestError("categorical_domain of '" + t.name + "." + c.name +
                                        "' must be a non-empty list");
                }
                std::vector<std::string> domain;
                std::set<std::string> seen;
                for (const auto& d : dj) {
                    if (!d.is_string()) throw ManifestError("categorical_domain entries must be strings");
                    if (!seen.insert(d.get<std::string>()).second) {
                        throw ManifestError("duplicate categorical value '" + d.get<std::string>() + "'");
                    }
                    domain.push_back(d.get<std::string>());
                }
                c.categorical_domain = std::move(domain);
            }
            t.columns.push_back(std::move(c));
        }
        m.tables_.push_back(std::move(t));
    }
    return m;
}

Json SchemaManifest::to_json() const {
    Json tables = Json::array();
    for (const auto& t : tables_) {
        Json cols = Json::array();
        for (const auto& c : t.columns) {
            Json cj = {{"name", c.name}, {"dtype", dtype_name(c.dtype)}};
            if (c.unit) cj["unit"] = *c.unit;
            if (c.categorical_domain) cj["categorical_domain"] = *c.categorical_domain;
            cols.push_back(std::move(cj));
        }
        tables.push_back({{"name", t.name}, {"level", level_name(t.level)}, {"columns", std::move(cols)}});
    }
    return {{"version", version_}, {"tables", std::move(tables)}};
}

const TableSchema* SchemaManifest::find_table(std::string_view name) const {
    for (const auto& t : tables_) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

std::vector<const TableSchema*> SchemaManifest::tables_at(Level level) const {
    std::vector<const TableSchema*> out;
    for (const auto& t : tables_) {
        if (t.level == level) out.push_back(&t);
    }
    return out;
}

SchemaManifest load_manifest(const fs::path& path) {
    const std::string text = read_text_file(path);
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("malformed manifest " + path.string() + ": " + e.what());
    }
    return SchemaManifest::from_json(j);
}

FeatureTable FeatureTable::create(TableSchema schema, std::vector<std::vector<Value>> columns) {
    if (columns.size() != schema.columns.size()) {
        throw TypeMismatch("table '" + schema.name + "': expected " + std::to_string(schema.columns.size()) +
                           " columns, got " + std::to_string(columns.size()));
    }
    const std::size_t rows = columns.empty() ? 0 : columns[0].size();
    for (std::size_t c = 0; c < columns.size(); ++c) {
        const ColumnSchema& col = schema.columns[c];
        if (columns[c].size() != rows) {
            throw TypeMismatch("table '" + schema.name + "': column '" + col.name + "' has a different length");
        }
        for (std::size_t r = 0; r < rows; ++r) {
            const Value& v = columns[c][r];
            const std::string where = "table '" + schema.name + "' column '" + col.name + "' row " + std::to_string(r);
            if (v.is_null()) {
                if (col.is_key()) throw TypeMismatch(where + ": key column may not be null");
                continue;
            }
            const bool ok = (col.dtype == Dtype::Integer && v.is_int()) || (col.dtype == Dtype::Real && v.is_real()) ||
                            (col.dtype == Dtype::Text && v.is_text());
            if (!ok) throw TypeMismatch(where + ": value does not match dtype " + dtype_name(col.dtype));
            if (col.categorical_domain) {
                const auto& dom = *col.categorical_domain;
                if (std::find(dom.begin(), dom.end(), v.as_text()) == dom.end()) {
                    throw DomainViolation(where + ": '" + v.as_text() + "' is outside the declared domain");
                }
            }
        }
    }
    FeatureTable t;
    t.schema_ = std::move(schema);
    t.columns_ = std::move(columns);
    t.row_count_ = rows;
    return t;
}

CaseBundle::CaseBundle(std::string case_id, std::map<std::string, FeatureTable> tables,
                       std::optional<ProbVector> cnn_probs, std::optional<std::string> ground_truth)
    : case_id_(std::move(case_id)),
      tables_(std::move(tables)),
      cnn_probs_(std::move(cnn_probs)),
      ground_truth_(std::move(ground_truth)) {
    if (cnn_probs_) std::sort(cnn_probs_->begin(), cnn_probs_->end());
}

const FeatureTable* CaseBundle::find_table(std::string_view name) const {
    auto it = tables_.find(std::string(name));
    return it == tables_.end() ? nullptr : &it->second;
}

Sidecar parse_sidecar(const Json& j) {
    if (!j.is_object()) throw SidecarError("sidecar must be a JSON object");
    Sidecar s;
    if (j.contains("cnn_probs") && !j.at("cnn_probs").is_null()) {
        const auto& pj = j.at("cnn_probs");
        if (!pj.is_object() || pj.empty()) throw SidecarError("cnn_probs must be a non-empty object");
        CaseBundle::ProbVector probs;
        double total = 0.0;
        for (const auto& [label, p] : pj.items()) {
            if (!p.is_number()) throw SidecarError("cnn_probs['" + label + "'] is not a number");
            const double v = p.get<double>();
            if (!(v >= 0.0 && v <= 1.0)) throw SidecarError("cnn_probs['" + label + "'] outside [0,1]");
            probs.emplace_back(label, v);
            total += v;
        }
        if (std::fabs(total - 1.0) > 1e-6) {
            throw SidecarError("cnn_probs sum to " + std::to_string(total) + ", expected 1");
        }
        s.cnn_probs = std::move(probs);
    }
    if (j.contains("ground_truth") && !j.at("ground_truth").is_null()) {
        if (!j.at("ground_truth").is_string()) throw SidecarError("ground_truth must be a string");
        s.ground_truth = j.at("ground_truth").get<std::string>();
    }
    return s;
}

FeatureTable read_table_csv(const TableSchema& schema, std::string_view text) {
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    const auto rows = split_csv(text);
    if (rows.empty()) throw ParseError("table '" + schema.name + "': missing header row");
    const auto& header = rows[0];
    bool header_ok = header.size() == schema.columns.size();
    for (std::size_t i = 0; header_ok && i < header.size(); ++i) {
        header_ok = header[i].text == schema.columns[i].name;
    }
    if (!header_ok) {
        std::string expected;
        for (const auto& c : schema.columns) expected += (expected.empty() ? "" : ",") + c.name;
        throw ParseError("table '" + schema.name + "': header does not match schema (expected " + expected + ")");
    }
    std::vector<std::vector<Value>> columns(schema.columns.size());
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != schema.columns.size()) {
            throw ParseError("table '" + schema.name + "': row " + std::to_string(r - 1) + " has " +
                             std::to_string(rows[r].size()) + " fields, expected " +
                             std::to_string(schema.columns.size()));
        }
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            columns[c].push_back(coerce(rows[r][c], schema.columns[c], r - 1));
        }
    }
    return FeatureTable::create(schema, std::move(columns));
}

std::string write_table_csv(const FeatureTable& table) {
    std::string out;
    const auto& cols = table.schema().columns;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (c) out += ',';
        out += cols[c].name;
    }
    out += '\n';
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (c) out += ',';
            const Value& v = table.at(r, c);
            if (v.is_null()) continue;
            out += v.is_text() ? csv_escape(v.as_text()) : v.to_string();
        }
        out += '\n';
    }
    return out;
}

CaseBundle ingest_case(const SchemaManifest& manifest, const std::map<std::string, fs::path>& table_files,
                       const std::optional<fs::path>& sidecar, std::string case_id) {
    std::map<std::string, FeatureTable> tables;
    for (const auto& [name, path] : table_files) {
        if (!manifest.find_table(name)) {
            throw ParseError("table '" + name + "' is not declared in the manifest");
        }
    }
    for (const auto& schema : manifest.tables()) {
        auto it = table_files.find(schema.name);
        if (it == table_files.end()) throw ParseError("no file given for table '" + schema.name + "'");
        if (!fs::exists(it->second)) throw ParseError("missing table file: " + it->second.string());
        FeatureTable t = read_table_csv(schema, read_text_file(it->second));
        if (schema.is_global() && t.row_count() != 1) {
            throw CardinalityError("global table '" + schema.name + "' has " + std::to_string(t.row_count()) +
                                   " rows, expected exactly 1");
        }
        tables.emplace(schema.name, std::move(t));
    }
    Sidecar sc;
    if (sidecar) {
        const std::string text = read_text_file(*sidecar);
        try {
            sc = parse_sidecar(Json::parse(text));
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError("malformed sidecar " + sidecar->string() + ": " + e.what());
        }
    }
    return CaseBundle(std::move(case_id), std::move(tables), std::move(sc.cnn_probs), std::move(sc.ground_truth));
}

CaseBundle load_case_dir(const SchemaManifest& manifest, const fs::path& dir) {
    if (!fs::is_directory(dir)) throw ParseError("case directory not found: " + dir.string());
    std::map<std::string, fs::path> files;
    for (const auto& t : manifest.tables()) files[t.name] = dir / (t.name + ".csv");
    std::optional<fs::path> sidecar;
    if (fs::exists(dir / "sidecar.json")) sidecar = dir / "sidecar.json";
    auto canonical = fs::weakly_canonical(dir);
    std::string case_id = canonical.filename().string();
    if (case_id.empty()) case_id = canonical.parent_path().filename().string();
    return ingest_case(manifest, files, sidecar, case_id);
}

std::vector<CaseBundle> load_training_split(const SchemaManifest& manifest, const fs::path& root) {
    if (!fs::is_directory(root)) throw ParseError("split directory not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    std::vector<CaseBundle> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) {
        try {
            out.push_back(load_case_dir(manifest, d));
        } catch (const Error& e) {
            throw CaseLoadError(d.filename().string(), e.kind(), e.what());
        }
    }
    return out;
}

}  // namespace evidencesql
