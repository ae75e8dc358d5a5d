#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lmmsel/data.hpp"
#include "lmmsel/error.hpp"
#include "support.hpp"

using namespace lmmsel;
using namespace lmmsel::testing;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("lmmsel_test_" + name)).string();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

const char* kSmallCsv =
    "id,y,a,b,t\n"
    "p,1.0,0.5,2,1\n"
    "p,2.0,1.5,3,2\n"
    "p,3.0,2.5,4,3\n"
    "q,4.0,3.5,5,1\n"
    "q,5.0,4.5,6,2\n"
    "q,6.0,5.5,7,3\n";

CsvSchema small_schema() {
    CsvSchema s;
    s.subject_col = "id";
    s.response_col = "y";
    s.fixed_cols = {"a", "b"};
    s.random_cols = {"t"};
    return s;
}

} // namespace

TEST_CASE("load_csv groups rows by subject") {
    const auto path = temp_path("small.csv");
    write_file(path, kSmallCsv);
    const auto ds = load_csv(path, small_schema());
    CHECK(ds.num_subjects() == 2);
    CHECK(ds.subject(0).rows() == 3);
    CHECK(ds.subject(1).rows() == 3);
    CHECK(ds.fixed_dim() == 2);
    CHECK(ds.random_dim() == 1);
    CHECK(ds.subject(1).X(2, 1) == 7.0);
}

TEST_CASE("load_csv keeps first-appearance order for interleaved subjects") {
    const auto path = temp_path("interleaved.csv");
    write_file(path, "id,y,a\nb,1,1\na,2,2\nb,3,3\n");
    CsvSchema s;
    s.subject_col = "id";
    s.response_col = "y";
    s.fixed_cols = {"a"};
    const auto ds = load_csv(path, s);
    REQUIRE(ds.num_subjects() == 2);
    CHECK(ds.subject(0).id == "b");
    CHECK(ds.subject(0).rows() == 2);
    CHECK(ds.subject(0).y(1) == 3.0);
}

TEST_CASE("load_csv appends requested intercepts") {
    const auto path = temp_path("intercepts.csv");
    write_file(path, kSmallCsv);
    auto schema = small_schema();
    schema.add_fixed_intercept = true;
    schema.add_random_intercept = true;
    const auto ds = load_csv(path, schema);
    CHECK(ds.fixed_dim() == 3);
    CHECK(ds.random_dim() == 2);
    CHECK(ds.subject(0).X(1, 0) == 1.0);
    CHECK(ds.subject(0).Z(1, 0) == 1.0);
    CHECK(ds.subject(0).Z(1, 1) == 2.0);
}

TEST_CASE("load_csv rejects a schema without a response column") {
    const auto path = temp_path("noresp.csv");
    write_file(path, kSmallCsv);
    auto schema = small_schema();
    schema.response_col = "";
    CHECK_THROWS_AS(load_csv(path, schema), SchemaError);
    schema.response_col = "missing";
    CHECK_THROWS_AS(load_csv(path, schema), SchemaError);
}

TEST_CASE("load_csv names the row of a non-numeric cell") {
    const auto path = temp_path("bad.csv");
    std::string text = "id,y,a\n";
    for (int r = 1; r <= 9; ++r) text += "s,1," + std::string(r == 7 ? "abc" : "2") + "\n";
    write_file(path, text);
    CsvSchema s;
    s.subject_col = "id";
    s.response_col = "y";
    s.fixed_cols = {"a"};
    try {
        load_csv(path, s);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.row() == 7);
        CHECK(std::string(e.what()).find("row 7") != std::string::npos);
    }
}

TEST_CASE("write_csv then load_csv round trips") {
    Engine rng(11);
    const auto ds = random_dataset(rng, 3, 4, 2, 2);
    const auto path = temp_path("roundtrip.csv");
    const auto schema = write_csv(ds, path);
    const auto back = load_csv(path, schema);
    REQUIRE(back.num_subjects() == ds.num_subjects());
    for (int i = 0; i < ds.num_subjects(); ++i) {
        CHECK(back.subject(i).id == ds.subject(i).id);
        CHECK(max_abs(back.subject(i).y - ds.subject(i).y) <= 1e-12);
        CHECK(max_abs(back.subject(i).X - ds.subject(i).X) <= 1e-12);
        CHECK(max_abs(back.subject(i).Z - ds.subject(i).Z) <= 1e-12);
    }
    CHECK(back.fixed_names() == ds.fixed_names());
}

TEST_CASE("dataset constructor enforces shapes") {
    SubjectBlock a{"a", Vector::Ones(2), Matrix::Ones(2, 2), Matrix::Ones(2, 1)};
    SubjectBlock b{"b", Vector::Ones(2), Matrix::Ones(2, 3), Matrix::Ones(2, 1)};
    CHECK_THROWS_AS(LongitudinalDataset({a, b}, {"x1", "x2"}, {"z1"}), DimensionError);
    CHECK_THROWS_AS(LongitudinalDataset({}, {"x1", "x2"}, {"z1"}), DimensionError);
    SubjectBlock c{"c", Vector::Ones(3), Matrix::Ones(2, 2), Matrix::Ones(2, 1)};
    CHECK_THROWS_AS(LongitudinalDataset({c}, {"x1", "x2"}, {"z1"}), DimensionError);
}

TEST_CASE("standardize: column norms become sqrt(n)") {
    Engine rng(5);
    const auto ds = random_dataset(rng, 1, 5, 3, 1);
    const auto [std_ds, rec] = standardize(ds);
    const auto X = stack(std_ds).X;
    for (int j = 0; j < 3; ++j) CHECK(std::abs(X.col(j).norm() - std::sqrt(5.0)) <= 1e-10);
    CHECK(rec.applied);
    // Z is left alone.
    CHECK(max_abs(std_ds.subject(0).Z - ds.subject(0).Z) == 0.0);
    // The recorded factor is the original norm over sqrt(n).
    const auto X0 = stack(ds).X;
    for (int j = 0; j < 3; ++j) CHECK(rec.scale(j) == doctest::Approx(X0.col(j).norm() / std::sqrt(5.0)));
}

TEST_CASE("standardize: constant column scales to ones with factor |c|") {
    SubjectBlock s{"s", Vector::Zero(4), Matrix::Constant(4, 1, -2.5), Matrix::Zero(4, 0)};
    const auto [out, rec] = standardize(LongitudinalDataset({s}, {"c"}, {}));
    CHECK(rec.scale(0) == doctest::Approx(2.5));
    CHECK(max_abs(out.subject(0).X - Matrix::Constant(4, 1, -1.0)) <= 1e-15);
}

TEST_CASE("standardize: already-normalized column keeps factor 1") {
    SubjectBlock s{"s", Vector::Zero(4), Matrix::Ones(4, 1), Matrix::Zero(4, 0)};
    const auto [out, rec] = standardize(LongitudinalDataset({s}, {"c"}, {}));
    CHECK(rec.scale(0) == 1.0);
    CHECK_FALSE(rec.applied);
}

TEST_CASE("standardize is idempotent") {
    Engine rng(9);
    const auto ds = random_dataset(rng, 4, 3, 5, 2);
    const auto first = standardize(ds).first;
    const auto [second, rec] = standardize(first);
    CHECK_FALSE(rec.applied);
    for (int j = 0; j < 5; ++j) CHECK(rec.scale(j) == 1.0);
    for (int i = 0; i < 4; ++i) CHECK(max_abs(second.subject(i).X - first.subject(i).X) == 0.0);
}

TEST_CASE("standardize rejects an all-zero column by name") {
    SubjectBlock s{"s", Vector::Zero(3), Matrix::Zero(3, 2), Matrix::Zero(3, 0)};
    s.X.col(0).setOnes();
    try {
        standardize(LongitudinalDataset({s}, {"ok", "dead"}, {}));
        FAIL("expected a degenerate-column error");
    } catch (const DegenerateColumnError& e) {
        CHECK(std::string(e.what()).find("dead") != std::string::npos);
    }
}

TEST_CASE("stack: block-diagonal Z with subject-major columns") {
    std::vector<SubjectBlock> subs;
    for (int i = 0; i < 2; ++i)
        subs.push_back({"s" + std::to_string(i), Vector::Ones(2), Matrix::Ones(2, 1),
                        Matrix::Constant(2, 1, i + 1.0)});
    const auto m = stack(LongitudinalDataset(subs, {"x"}, {"z"}));
    const Matrix Z = m.Z.dense();
    CHECK(Z.rows() == 4);
    CHECK(Z.cols() == 2);
    Matrix expect = Matrix::Zero(4, 2);
    expect.block(0, 0, 2, 1).setConstant(1.0);
    expect.block(2, 1, 2, 1).setConstant(2.0);
    CHECK(max_abs(Z - expect) == 0.0);
}

TEST_CASE("stack: single subject gives Z = Z_1") {
    Engine rng(3);
    const auto ds = random_dataset(rng, 1, 4, 2, 3);
    CHECK(max_abs(stack(ds).Z.dense() - ds.subject(0).Z) == 0.0);
}

TEST_CASE("stack: structured products match a dense assembly") {
    Engine rng(21);
    const auto ds = random_dataset(rng, 3, 4, 2, 2);
    const auto m = stack(ds);
    Matrix dense = Matrix::Zero(12, 6);
    for (int i = 0; i < 3; ++i) dense.block(4 * i, 2 * i, 4, 2) = ds.subject(i).Z;
    CHECK(max_abs(m.Z.dense() - dense) == 0.0);
    const Vector g = gaussian(rng, 6);
    const Vector r = gaussian(rng, 12);
    CHECK(max_abs(m.Z.multiply(g) - dense * g) <= 1e-12);
    CHECK(max_abs(m.Z.transpose_multiply(r) - dense.transpose() * r) <= 1e-12);
    CHECK(gamma_index(2, 1, 2) == 5);
}

TEST_CASE("stack then unstack is the identity") {
    Engine rng(4);
    const auto ds = random_dataset(rng, 3, 2, 2, 1);
    const auto back = unstack(stack(ds), ds);
    for (int i = 0; i < 3; ++i) {
        CHECK(max_abs(back.subject(i).y - ds.subject(i).y) == 0.0);
        CHECK(max_abs(back.subject(i).X - ds.subject(i).X) == 0.0);
        CHECK(max_abs(back.subject(i).Z - ds.subject(i).Z) == 0.0);
    }
}

TEST_CASE("column subsets keep names aligned") {
    Engine rng(8);
    const auto ds = random_dataset(rng, 2, 3, 4, 3);
    const auto f = ds.with_fixed_columns({1, 3});
    CHECK(f.fixed_names() == std::vector<std::string>{"x2", "x4"});
    CHECK(max_abs(f.subject(1).X.col(1) - ds.subject(1).X.col(3)) == 0.0);
    const auto r = ds.with_random_columns({2});
    CHECK(r.random_names() == std::vector<std::string>{"z3"});
    CHECK_THROWS_AS(ds.with_fixed_columns({4}), DimensionError);
}

TEST_CASE("imbalance ratio is max over min subject size") {
    SubjectBlock a{"a", Vector::Ones(2), Matrix::Ones(2, 1), Matrix::Ones(2, 1)};
    SubjectBlock b{"b", Vector::Ones(6), Matrix::Ones(6, 1), Matrix::Ones(6, 1)};
    const LongitudinalDataset ds({a, b}, {"x"}, {"z"});
    CHECK(ds.imbalance_ratio() == doctest::Approx(3.0));
    CHECK(ds.total_rows() == 8);
    CHECK(ds.row_offset(1) == 2);
}
