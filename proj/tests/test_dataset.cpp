#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <glsdiag/csv.hpp>
#include <glsdiag/dataset.hpp>
#include <glsdiag/rng.hpp>

using namespace glsdiag;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("glsdiag_test_dataset_" + std::to_string(++counter));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name, const std::string& content) const {
    const std::string p = (path / name).string();
    std::ofstream out(p, std::ios::binary);
    out << content;
    return p;
  }
};

}  // namespace

TEST_CASE("single subject long CSV loads with one group") {
  TempDir tmp;
  const auto path = tmp.file("a.csv",
                             "subject,time,response\n"
                             "s1,0,1.5\n"
                             "s1,2,2.5\n"
                             "s1,4,3.5\n");
  auto data = load_long_csv(path, CsvSchema{});
  CHECK(data.n_rows() == 3);
  CHECK(data.n_subjects() == 1);
  CHECK(data.rows[1].time == 2.0);
  CHECK(data.rows[2].response == 3.5);
}

TEST_CASE("duplicate (subject, time) is rejected") {
  TempDir tmp;
  const auto path = tmp.file("dup.csv",
                             "subject,time,response\n"
                             "s1,2,1.0\n"
                             "s1,2,1.1\n");
  try {
    load_long_csv(path, CsvSchema{});
    FAIL("expected data_error");
  } catch (const data_error& err) {
    CHECK(std::string(err.what()).find("duplicate observation") != std::string::npos);
  }
}

TEST_CASE("loader canonicalizes subject and time order") {
  TempDir tmp;
  const auto path = tmp.file("shuffled.csv",
                             "subject,time,response\n"
                             "s2,1,20\n"
                             "s1,3,13\n"
                             "s1,1,11\n"
                             "s2,0,19\n");
  auto data = load_long_csv(path, CsvSchema{});
  CHECK(data.rows[0].subject == "s1");
  CHECK(data.rows[0].time == 1.0);
  CHECK(data.rows[1].time == 3.0);
  CHECK(data.rows[2].subject == "s2");
  CHECK(data.rows[2].time == 0.0);
}

TEST_CASE("missing role column is a data error") {
  TempDir tmp;
  const auto path = tmp.file("nores.csv", "subject,time,score\ns1,0,1\n");
  CHECK_THROWS_AS(load_long_csv(path, CsvSchema{}), data_error);
}

TEST_CASE("non-numeric cell is reported with its line number") {
  TempDir tmp;
  const auto path = tmp.file("bad.csv",
                             "subject,time,response\n"
                             "s1,0,1.0\n"
                             "s1,1,oops\n");
  try {
    load_long_csv(path, CsvSchema{});
    FAIL("expected data_error");
  } catch (const data_error& err) {
    const std::string what = err.what();
    CHECK(what.find("line 3") != std::string::npos);
    CHECK(what.find("oops") != std::string::npos);
  }
}

TEST_CASE("missing covariate value is rejected") {
  TempDir tmp;
  const auto path = tmp.file("na.csv",
                             "subject,time,response,dose\n"
                             "s1,0,1.0,2\n"
                             "s1,1,1.5,NA\n");
  CHECK_THROWS_AS(load_long_csv(path, CsvSchema{}), data_error);
}

TEST_CASE("long CSV round-trips through write_long_csv") {
  TempDir tmp;
  LongDataset data;
  data.response_name = "response";
  data.covariate_names = {"dose", "arm"};
  auto eng = make_engine(11);
  for (int s = 0; s < 4; ++s) {
    for (int t = 0; t < 3; ++t) {
      LongRow row;
      row.subject = "s" + std::to_string(s + 1);
      row.time = t * 1.5 + 0.25;
      row.response = standard_normal(eng) * 1e3;
      row.covariates = {std::to_string(0.1 * t + s), s % 2 == 0 ? "a" : "b"};
      data.rows.push_back(row);
    }
  }
  data.canonicalize();

  const auto path = (tmp.path / "roundtrip.csv").string();
  write_long_csv(path, data);
  auto again = load_long_csv(path, CsvSchema{});
  REQUIRE(again.n_rows() == data.n_rows());
  CHECK(again.covariate_names == data.covariate_names);
  for (size_t i = 0; i < data.rows.size(); ++i) {
    CHECK(again.rows[i].subject == data.rows[i].subject);
    CHECK(again.rows[i].time == data.rows[i].time);
    CHECK(again.rows[i].response == data.rows[i].response);
  }
}

TEST_CASE("build_design with intercept and one numeric term") {
  LongDataset data;
  data.response_name = "response";
  data.covariate_names = {"dose"};
  for (int i = 0; i < 4; ++i) {
    LongRow row;
    row.subject = "s1";
    row.time = i;
    row.response = 2.0 * i;
    row.covariates = {std::to_string(double(i))};
    data.rows.push_back(row);
  }
  data.canonicalize();

  ModelSpec spec;
  spec.response = "response";
  spec.numeric_terms = {"dose"};
  auto problem = build_design(data, spec);
  CHECK(problem.n() == 4);
  CHECK(problem.p() == 2);
  CHECK(problem.column_names[0] == "intercept");
  CHECK((problem.x.col(0).array() == 1.0).all());
  CHECK(problem.x(3, 1) == 3.0);
}

TEST_CASE("categorical term dummy-codes against the reference level") {
  LongDataset data;
  data.response_name = "response";
  data.covariate_names = {"arm"};
  const char* arms[] = {"placebo", "low", "high", "low", "placebo", "high"};
  for (int i = 0; i < 6; ++i) {
    LongRow row;
    row.subject = "s" + std::to_string(i + 1);
    row.time = 0;
    row.response = i;
    row.covariates = {arms[i]};
    data.rows.push_back(row);
  }
  data.canonicalize();

  ModelSpec spec;
  spec.response = "response";
  spec.categorical_terms = {{"arm", "placebo"}};
  auto problem = build_design(data, spec);
  CHECK(problem.p() == 3);  // intercept + 2 dummies
  CHECK(problem.column_names[1] == "arm=high");
  CHECK(problem.column_names[2] == "arm=low");
  for (Index i = 0; i < 6; ++i) {
    const auto& subj = problem.groups.blocks[size_t(problem.groups.group_of(i))].id;
    const int orig = subj[1] - '1';
    const std::string arm = arms[orig];
    CHECK(problem.x(i, 1) == (arm == "high" ? 1.0 : 0.0));
    CHECK(problem.x(i, 2) == (arm == "low" ? 1.0 : 0.0));
  }
}

TEST_CASE("unknown columns and levels are named in errors") {
  LongDataset data;
  data.response_name = "response";
  data.covariate_names = {"arm"};
  LongRow row;
  row.subject = "s1";
  row.time = 0;
  row.response = 1;
  row.covariates = {"a"};
  data.rows.push_back(row);
  LongRow row2 = row;
  row2.time = 1;
  row2.covariates = {"b"};
  data.rows.push_back(row2);
  data.canonicalize();

  ModelSpec spec;
  spec.response = "response";
  spec.numeric_terms = {"dose"};
  try {
    build_design(data, spec);
    FAIL("expected data_error");
  } catch (const data_error& err) {
    CHECK(std::string(err.what()).find("unknown column 'dose'") != std::string::npos);
  }

  ModelSpec spec2;
  spec2.response = "response";
  spec2.categorical_terms = {{"arm", "c"}};
  try {
    build_design(data, spec2);
    FAIL("expected data_error");
  } catch (const data_error& err) {
    CHECK(std::string(err.what()).find("unknown level") != std::string::npos);
  }
}

TEST_CASE("build_design is invariant to input row order") {
  auto eng = make_engine(23);
  LongDataset data;
  data.response_name = "response";
  data.covariate_names = {"dose"};
  for (int s = 0; s < 5; ++s) {
    for (int t = 0; t < 4; ++t) {
      LongRow row;
      row.subject = "p" + std::to_string(s + 1);
      row.time = t;
      row.response = standard_normal(eng);
      row.covariates = {std::to_string(uniform01(eng))};
      data.rows.push_back(row);
    }
  }

  LongDataset shuffled = data;
  std::vector<Index> order(shuffled.rows.size());
  std::iota(order.begin(), order.end(), Index(0));
  shuffle_vector(order, eng);
  std::vector<LongRow> rows;
  for (Index i : order) rows.push_back(shuffled.rows[size_t(i)]);
  shuffled.rows = std::move(rows);

  data.canonicalize();
  shuffled.canonicalize();

  ModelSpec spec;
  spec.response = "response";
  spec.numeric_terms = {"dose"};
  auto a = build_design(data, spec);
  auto b = build_design(shuffled, spec);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("design-mode triplet loads verbatim") {
  TempDir tmp;
  const auto x = tmp.file("X.csv", "1,0.5\n1,1.5\n1,2.5\n1,3.5\n1,4.5\n");
  const auto y = tmp.file("Y.csv", "1\n2\n3\n4\n5\n");
  const auto g = tmp.file("groups.csv",
                          "subject_id,time\ns1,0\ns1,1\ns1,2\ns1,3\ns1,4\n");
  auto problem = load_design_csv(x, y, g);
  CHECK(problem.n() == 5);
  CHECK(problem.p() == 2);
  CHECK(problem.x(2, 1) == 2.5);
  CHECK(problem.groups.blocks.size() == 1);
}

TEST_CASE("design-mode dimension mismatch is reported") {
  TempDir tmp;
  const auto x = tmp.file("X.csv", "1\n1\n1\n");
  const auto y = tmp.file("Y.csv", "1\n2\n");
  const auto g = tmp.file("groups.csv", "subject_id,time\ns1,0\ns1,1\ns1,2\n");
  try {
    load_design_csv(x, y, g);
    FAIL("expected data_error");
  } catch (const data_error& err) {
    CHECK(std::string(err.what()).find("dimension mismatch") != std::string::npos);
  }
}

TEST_CASE("design-mode groups must be contiguous with increasing times") {
  TempDir tmp;
  const auto x = tmp.file("X.csv", "1\n1\n1\n");
  const auto y = tmp.file("Y.csv", "1\n2\n3\n");
  const auto split = tmp.file("g1.csv", "subject_id,time\ns1,0\ns2,0\ns1,1\n");
  CHECK_THROWS_AS(load_design_csv(x, y, split), data_error);
  const auto order = tmp.file("g2.csv", "subject_id,time\ns1,0\ns1,2\ns1,1\n");
  CHECK_THROWS_AS(load_design_csv(x, y, order), data_error);
}

TEST_CASE("problem validation rejects inconsistent shapes") {
  RegressionProblemd p;
  p.y = Vector<double>::Zero(3);
  p.x = Matrix<double>::Ones(3, 1);
  p.times = Vector<double>::Zero(2);  // wrong length
  p.groups.blocks = {{"g1", 0, 3}};
  p.column_names = {"intercept"};
  CHECK_THROWS_AS(p.validate(), data_error);
}
