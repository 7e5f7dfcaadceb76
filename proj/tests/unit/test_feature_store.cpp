#include <gtest/gtest.h>

#include <random>

#include "evidencesql/errors.hpp"
#include "evidencesql/feature_store.hpp"
#include "test_util.hpp"

using namespace evidencesql;
using namespace evidencesql::testutil;
namespace fs = std::filesystem;

namespace {

Json manifest_json() { return Json::parse(read_text_file(kFixtures / "manifest.json")); }

// Copies the demo case into a scratch dir so individual files can be corrupted.
fs::path copy_demo(const TempDir& tmp, const std::string& name = "case_x") {
    const fs::path dst = tmp.path() / name;
    fs::create_directories(dst);
    for (const auto& e : fs::directory_iterator(kFixtures / "demo" / "case_demo")) {
        fs::copy_file(e.path(), dst / e.path().filename());
    }
    return dst;
}

}  // namespace

TEST(Manifest, CanonicalFixtureHasThreeLevels) {
    const SchemaManifest m = fixture_manifest();
    ASSERT_EQ(m.tables().size(), 3u);
    EXPECT_EQ(m.tables()[0].name, "cells");
    EXPECT_EQ(m.tables()[0].level, Level::LocalCellular);
    EXPECT_EQ(m.tables()[1].name, "structures");
    EXPECT_EQ(m.tables()[1].level, Level::LocalArchitecture);
    EXPECT_EQ(m.tables()[2].name, "global_features");
    EXPECT_EQ(m.tables()[2].level, Level::Global);
    EXPECT_EQ(m.tables()[0].find_column("area")->unit, "um2");
}

TEST(Manifest, JsonRoundTrip) {
    const SchemaManifest m = fixture_manifest();
    EXPECT_EQ(SchemaManifest::from_json(m.to_json()), m);
}

TEST(Manifest, DuplicateTableNameRejected) {
    Json j = manifest_json();
    j["tables"][1]["name"] = "cells";
    EXPECT_THROW(SchemaManifest::from_json(j), ManifestError);
}

TEST(Manifest, DuplicateColumnRejected) {
    Json j = manifest_json();
    j["tables"][0]["columns"][2]["name"] = "cell_type";
    EXPECT_THROW(SchemaManifest::from_json(j), ManifestError);
}

TEST(Manifest, CategoricalDomainOnRealColumnRejected) {
    Json j = manifest_json();
    j["tables"][0]["columns"][2]["categorical_domain"] = {"small", "large"};
    EXPECT_THROW(SchemaManifest::from_json(j), ManifestError);
}

TEST(Manifest, UnknownLevelRejected) {
    Json j = manifest_json();
    j["tables"][0]["level"] = "organ";
    EXPECT_THROW(SchemaManifest::from_json(j), ManifestError);
}

TEST(Manifest, MalformedFileIsParseError) {
    TempDir tmp("manifest");
    EXPECT_THROW(load_manifest(tmp.write("m.json", "{\"tables\": [")), ParseError);
    EXPECT_THROW(load_manifest(tmp.write("m2.json", "{\"version\": \"1\"}")), ParseError);
}

TEST(Ingest, DemoCaseRowCounts) {
    const CaseBundle b = demo_case();
    EXPECT_EQ(b.case_id(), "case_demo");
    EXPECT_EQ(b.find_table("cells")->row_count(), 6u);
    EXPECT_EQ(b.find_table("structures")->row_count(), 2u);
    EXPECT_EQ(b.find_table("global_features")->row_count(), 1u);
    ASSERT_TRUE(b.cnn_probs());
    // sorted by label
    EXPECT_EQ(b.cnn_probs()->front().first, "papillary_adenocarcinoma");
    EXPECT_DOUBLE_EQ(b.cnn_probs()->front().second, 0.3);
    EXPECT_EQ(b.ground_truth(), "tubular_adenocarcinoma");
}

TEST(Ingest, EmptyFieldIsNullAndValuesAreTyped) {
    const CaseBundle b = demo_case();
    const FeatureTable& cells = *b.find_table("cells");
    const auto intensity = *cells.schema().column_index("mean_intensity");
    EXPECT_TRUE(cells.at(4, intensity).is_null());
    EXPECT_EQ(cells.at(0, 0), Value::integer(1));
    EXPECT_EQ(cells.at(0, 1), Value::text("neoplastic"));
    EXPECT_EQ(cells.at(3, *cells.schema().column_index("centroid_x")), Value::real(130.25));
}

TEST(Ingest, CategoricalValueOutsideDomain) {
    TempDir tmp("domain");
    const fs::path dir = copy_demo(tmp);
    std::string csv = read_text_file(dir / "cells.csv");
    csv.replace(csv.find("inflammatory"), 12, "unknownX");
    tmp.write("case_x/cells.csv", csv);
    EXPECT_THROW(load_case_dir(fixture_manifest(), dir), DomainViolation);
}

TEST(Ingest, GlobalTableWithTwoRows) {
    TempDir tmp("cardinality");
    const fs::path dir = copy_demo(tmp);
    std::string csv = read_text_file(dir / "global_features.csv");
    csv += "7,0.5,410.0,0.3,0.2,15.0\n";
    tmp.write("case_x/global_features.csv", csv);
    EXPECT_THROW(load_case_dir(fixture_manifest(), dir), CardinalityError);
}

TEST(Ingest, TypeMismatchAndNullKey) {
    TempDir tmp("types");
    const fs::path dir = copy_demo(tmp);
    const std::string csv = read_text_file(dir / "cells.csv");
    std::string bad_real = csv;
    bad_real.replace(bad_real.find("380.0"), 5, "big");
    tmp.write("case_x/cells.csv", bad_real);
    EXPECT_THROW(load_case_dir(fixture_manifest(), dir), TypeMismatch);

    std::string null_key = csv;
    null_key.replace(null_key.find("\n1,neoplastic"), 2, "\n");
    tmp.write("case_x/cells.csv", null_key);
    EXPECT_THROW(load_case_dir(fixture_manifest(), dir), TypeMismatch);
}

TEST(Ingest, HeaderMustMatchSchema) {
    TempDir tmp("header");
    const fs::path dir = copy_demo(tmp);
    std::string csv = read_text_file(dir / "structures.csv");
    csv.replace(0, 12, "struct_id");
    tmp.write("case_x/structures.csv", csv);
    EXPECT_THROW(load_case_dir(fixture_manifest(), dir), ParseError);
}

TEST(Ingest, SidecarProbabilitiesMustSumToOne) {
    EXPECT_THROW(parse_sidecar(Json{{"cnn_probs", {{"A", 0.6}, {"B", 0.6}}}}), SidecarError);
    EXPECT_THROW(parse_sidecar(Json{{"cnn_probs", {{"A", 1.2}, {"B", -0.2}}}}), SidecarError);
    const Sidecar ok = parse_sidecar(Json{{"cnn_probs", {{"B", 0.4}, {"A", 0.6}}}});
    ASSERT_TRUE(ok.cnn_probs);
    EXPECT_EQ(ok.cnn_probs->front().first, "A");
    EXPECT_FALSE(ok.ground_truth);
}

TEST(Ingest, PureWithRespectToFileContent) {
    EXPECT_EQ(demo_case(), demo_case());
}

TEST(Ingest, CsvRoundTripPreservesEveryValue) {
    const CaseBundle b = demo_case();
    for (const auto& [name, table] : b.tables()) {
        const FeatureTable again = read_table_csv(table.schema(), write_table_csv(table));
        EXPECT_EQ(again, table) << name;
    }
}

TEST(Ingest, CsvRoundTripRandomReals) {
    const SchemaManifest m = fixture_manifest();
    const TableSchema& schema = *m.find_table("structures");
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    std::uniform_int_distribution<int> exp(-300, 300);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<Value>> cols(schema.columns.size());
        const int rows = trial % 7;
        for (int r = 0; r < rows; ++r) {
            cols[0].push_back(Value::integer(r));
            cols[1].push_back(r % 3 == 0 ? Value{} : Value::text(r % 2 ? "gland_like" : "cluster"));
            cols[2].push_back(r % 4 == 0 ? Value{} : Value::integer(static_cast<std::int64_t>(u(rng))));
            cols[3].push_back(Value::real(std::ldexp(u(rng), exp(rng))));
            cols[4].push_back(Value::real(u(rng) / 1e6));
        }
        const FeatureTable t = FeatureTable::create(schema, cols);
        EXPECT_EQ(read_table_csv(schema, write_table_csv(t)), t);
    }
}

TEST(Ingest, QuotedTextFields) {
    const SchemaManifest m = SchemaManifest::from_json(Json::parse(R"({"version":"1","tables":[
        {"name":"notes","level":"local_cellular","columns":[{"name":"note_id","dtype":"integer"},
         {"name":"body","dtype":"text"}]}]})"));
    const TableSchema& s = m.tables()[0];
    const FeatureTable t = read_table_csv(s, "note_id,body\n1,\"a, \"\"quoted\"\" value\"\n2,\"\"\n3,\n");
    EXPECT_EQ(t.at(0, 1), Value::text("a, \"quoted\" value"));
    EXPECT_EQ(t.at(1, 1), Value::text(""));
    EXPECT_TRUE(t.at(2, 1).is_null());
    EXPECT_EQ(read_table_csv(s, write_table_csv(t)), t);
}

TEST(TrainingSplit, TwelveCasesInLexicographicOrder) {
    const auto bundles = load_training_split(fixture_manifest(), kFixtures / "training");
    ASSERT_EQ(bundles.size(), 12u);
    for (std::size_t i = 1; i < bundles.size(); ++i) EXPECT_LT(bundles[i - 1].case_id(), bundles[i].case_id());
    EXPECT_EQ(bundles.front().case_id(), "train_01");
}

TEST(TrainingSplit, EmptyDirectoryIsEmptyList) {
    TempDir tmp("empty_split");
    EXPECT_TRUE(load_training_split(fixture_manifest(), tmp.path()).empty());
}

TEST(TrainingSplit, CorruptCaseIsNamed) {
    TempDir tmp("corrupt_split");
    for (const auto& e : fs::directory_iterator(kFixtures / "training")) {
        fs::copy(e.path(), tmp.path() / e.path().filename(), fs::copy_options::recursive);
    }
    const fs::path victim = tmp.path() / "train_07" / "global_features.csv";
    std::string csv = read_text_file(victim);
    csv += csv.substr(csv.find('\n') + 1);
    tmp.write("train_07/global_features.csv", csv);
    try {
        load_training_split(fixture_manifest(), tmp.path());
        FAIL() << "expected CaseLoadError";
    } catch (const CaseLoadError& e) {
        EXPECT_EQ(e.case_id(), "train_07");
        EXPECT_EQ(e.inner_kind(), "CardinalityError");
        EXPECT_NE(std::string(e.what()).find("train_07"), std::string::npos);
    }
}

TEST(ValueType, RealRejectsNonFinite) {
    EXPECT_THROW(Value::real(std::nan("")), std::domain_error);
    EXPECT_THROW(Value::real(INFINITY), std::domain_error);
    EXPECT_NE(Value::integer(1), Value::real(1.0));
    EXPECT_EQ(Value{}, Value{});
}

TEST(ValueType, RoundTripFormatting) {
    for (double v : {0.1, 1.0, -2.5, 1e-300, 123456789.125, 0.666667}) {
        const std::string s = format_real_roundtrip(v);
        EXPECT_EQ(std::stod(s), v) << s;
        EXPECT_NE(s.find_first_of(".e"), std::string::npos) << s;
    }
}
