#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "uhr/csv_stream.hpp"

using uhr::Index;
using uhr::Mat;
using uhr::Vec;
namespace io = uhr::io;

namespace {

struct TempCsv {
  std::string path;
  explicit TempCsv(const std::string& name, const std::string& content)
      : path("uhr_io_" + name + ".csv") {
    std::ofstream out(path);
    out << content;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

io::StreamSchema plain_schema(Index n_predictors) {
  io::StreamSchema s;
  s.response.column = "y";
  s.intercept = false;
  for (Index j = 1; j <= n_predictors; ++j) {
    io::PredictorSpec p;
    p.kind = io::PredictorSpec::Kind::kNumeric;
    p.column = "x" + std::to_string(j);
    s.predictors.push_back(p);
  }
  return s;
}

std::string numbered_rows(int n) {
  std::string text = "y,x1,x2\n";
  for (int i = 1; i <= n; ++i) {
    text += std::to_string(i) + "," + std::to_string(i) + ".5," +
            std::to_string(-i) + "\n";
  }
  return text;
}

}  // namespace

TEST_CASE("hours from clock values") {
  CHECK(io::hour_of_hhmm(0) == 0);
  CHECK(io::hour_of_hhmm(5) == 0);
  CHECK(io::hour_of_hhmm(530) == 5);
  CHECK(io::hour_of_hhmm(1259) == 12);
  CHECK(io::hour_of_hhmm(2000) == 20);
  CHECK(io::hour_of_hhmm(2359) == 23);
  CHECK(io::hour_of_hhmm(2400) == 0);
  CHECK_THROWS_AS(io::hour_of_hhmm(-1), uhr::InvalidInput);
  CHECK_THROWS_AS(io::hour_of_hhmm(2500), uhr::InvalidInput);
}

TEST_CASE("flight features at hand-checked records") {
  io::AirlineRecord rec;
  rec.dep_time = 1400;
  rec.distance = 500;
  rec.day_of_week = 6;
  rec.arr_delay = 10;
  const auto [y, x] = io::airline_features(rec, -87.0);
  CHECK(y == doctest::Approx(std::log(98.0)));
  REQUIRE(x.size() == 5);
  CHECK(x[0] == 1.0);
  CHECK(x[1] == 14.0);
  CHECK(x[2] == 0.5);
  CHECK(x[3] == 0.0);
  CHECK(x[4] == 1.0);

  rec.dep_time = 2100;
  CHECK(io::airline_features(rec, -87.0).second[3] == 1.0);
  rec.dep_time = 600;
  CHECK(io::airline_features(rec, -87.0).second[3] == 0.0);
  rec.dep_time = 430;
  CHECK(io::airline_features(rec, -87.0).second[3] == 1.0);
  rec.dep_time = 500;
  CHECK(io::airline_features(rec, -87.0).second[3] == 0.0);

  rec.dep_time = 20;  // 00:20, the midnight hour reads as 24
  {
    const auto [y2, x2] = io::airline_features(rec, -87.0);
    CHECK(x2[1] == 24.0);
    CHECK(x2[3] == 1.0);
  }

  rec.day_of_week = 5;
  CHECK(io::airline_features(rec, -87.0).second[4] == 0.0);
  rec.day_of_week = 7;
  CHECK(io::airline_features(rec, -87.0).second[4] == 1.0);

  rec.arr_delay = -88.0;
  CHECK_THROWS_AS(io::airline_features(rec, -87.0), uhr::InvalidInput);
  rec.arr_delay = 0;
  rec.day_of_week = 9;
  CHECK_THROWS_AS(io::airline_features(rec, -87.0), uhr::InvalidInput);
}

TEST_CASE("the bundled flight schema matches the built-in one") {
  const auto bundled =
      io::load_schema(std::string(UHR_SOURCE_DIR) + "/configs/airline_schema.json");
  CHECK(io::to_json(bundled) == io::to_json(io::airline_schema(-87.0)));
  CHECK(bundled.p() == 5);
}

TEST_CASE("schemas serialize and back") {
  auto s = io::airline_schema(-87.0);
  io::Predicate f;
  f.kind = io::Predicate::Kind::kInSet;
  f.column = "Cancelled";
  f.args = {0};
  s.row_filters.push_back(f);
  const auto back = io::schema_from_json(io::to_json(s));
  CHECK(io::to_json(back) == io::to_json(s));
  CHECK(back.p() == 5);
  CHECK(back.row_filters.size() == 1);

  CHECK_THROWS_AS(io::schema_from_json({{"predictors", 4}}), uhr::SchemaError);
  CHECK_THROWS_AS(
      io::schema_from_json({{"response", {{"column", "y"}}},
                            {"predictors", nlohmann::json::array()}}),
      uhr::SchemaError);
}

TEST_CASE("a short remainder folds into the last full batch") {
  TempCsv file("fold", numbered_rows(10));
  io::CsvBatchReader reader(file.path, plain_schema(2), 4);
  const auto b1 = reader.next();
  REQUIRE(b1.has_value());
  CHECK(b1->n() == 4);
  CHECK(b1->batch_index == 1);
  CHECK(b1->y[0] == 1.0);
  const auto b2 = reader.next();
  REQUIRE(b2.has_value());
  CHECK(b2->n() == 6);  // 4 plus the folded remainder of 2
  CHECK(b2->y[5] == 10.0);
  CHECK_FALSE(reader.next().has_value());
  CHECK(reader.rows_accepted() == 10);
  CHECK(reader.rows_skipped() == 0);
  CHECK(reader.buffered_rows_high_water() <= 8);
}

TEST_CASE("a longer remainder stands alone") {
  TempCsv file("alone", numbered_rows(11));
  io::CsvBatchReader reader(file.path, plain_schema(2), 4);
  std::vector<Index> sizes;
  while (auto b = reader.next()) sizes.push_back(b->n());
  REQUIRE(sizes.size() == 3);
  CHECK(sizes[0] == 4);
  CHECK(sizes[1] == 4);
  CHECK(sizes[2] == 3);
}

TEST_CASE("a file smaller than one batch still comes through") {
  TempCsv file("small", numbered_rows(3));
  io::CsvBatchReader reader(file.path, plain_schema(2), 100);
  const auto b = reader.next();
  REQUIRE(b.has_value());
  CHECK(b->n() == 3);
  CHECK_FALSE(reader.next().has_value());
}

TEST_CASE("feature columns come out in schema order with intercept first") {
  TempCsv file("feat",
               "DepTime,Distance,DayOfWeek,ArrDelay\n"
               "1400,500,6,10\n"
               "600,1000,3,-5\n"
               "2100,250,7,0\n");
  io::CsvBatchReader reader(file.path, io::airline_schema(-87.0), 3);
  const auto b = reader.next();
  REQUIRE(b.has_value());
  REQUIRE(b->n() == 3);
  REQUIRE(b->p() == 5);
  CHECK(b->X(0, 0) == 1.0);
  CHECK(b->X(0, 1) == 14.0);
  CHECK(b->X(0, 2) == 0.5);
  CHECK(b->X(0, 3) == 0.0);
  CHECK(b->X(0, 4) == 1.0);
  CHECK(b->y[0] == doctest::Approx(std::log(98.0)));
  CHECK(b->X(1, 1) == 6.0);
  CHECK(b->X(1, 4) == 0.0);
  CHECK(b->X(2, 1) == 21.0);
  CHECK(b->X(2, 3) == 1.0);
}

TEST_CASE("missing and malformed rows are skipped and counted") {
  TempCsv file("missing",
               "y,x1,x2\n"
               "1,2,3\n"
               ",2,3\n"
               "4,NA,6\n"
               "7,8,oops\n"
               "10,11,12\n"
               "\n"
               "13,14,15\n");
  io::CsvBatchReader reader(file.path, plain_schema(2), 100);
  const auto b = reader.next();
  REQUIRE(b.has_value());
  CHECK(b->n() == 3);
  CHECK(b->y[0] == 1.0);
  CHECK(b->y[1] == 10.0);
  CHECK(b->y[2] == 13.0);
  CHECK(reader.rows_skipped() == 3);
}

TEST_CASE("strict mode reports the offending line") {
  TempCsv file("strict",
               "y,x1,x2\n"
               "1,2,3\n"
               "2,3,4\n"
               "bad,3,4\n");
  io::CsvBatchReader reader(file.path, plain_schema(2), 100, true);
  CHECK_THROWS_WITH_AS(reader.next(), doctest::Contains("line 4"),
                       uhr::InvalidInput);
}

TEST_CASE("row filters drop rows without erroring in strict mode") {
  TempCsv file("filter",
               "y,x1,x2,keep\n"
               "1,1,1,1\n"
               "2,2,2,0\n"
               "3,3,3,1\n");
  auto schema = plain_schema(2);
  io::Predicate f;
  f.kind = io::Predicate::Kind::kInSet;
  f.column = "keep";
  f.args = {1};
  schema.row_filters.push_back(f);
  io::CsvBatchReader reader(file.path, schema, 100, true);
  const auto b = reader.next();
  REQUIRE(b.has_value());
  CHECK(b->n() == 2);
  CHECK(b->y[0] == 1.0);
  CHECK(b->y[1] == 3.0);
  CHECK(reader.rows_skipped() == 1);
}

TEST_CASE("quoted fields and CRLF line ends parse cleanly") {
  TempCsv file("quoted",
               "\"y\",\"x1\",\"x2\"\r\n"
               "\"1\",2,3\r\n"
               "4,\"5\",6\r\n");
  io::CsvBatchReader reader(file.path, plain_schema(2), 100);
  const auto b = reader.next();
  REQUIRE(b.has_value());
  CHECK(b->n() == 2);
  CHECK(b->y[0] == 1.0);
  CHECK(b->X(1, 0) == 5.0);
}

TEST_CASE("skipping accepted rows resumes mid-stream") {
  TempCsv file("skip", numbered_rows(10));
  io::CsvBatchReader reader(file.path, plain_schema(2), 4);
  reader.skip_accepted(4);
  const auto b = reader.next();
  REQUIRE(b.has_value());
  CHECK(b->n() == 6);  // remaining 6 rows, remainder folded
  CHECK(b->y[0] == 5.0);
  CHECK(reader.rows_accepted() == 6);

  io::CsvBatchReader started(file.path, plain_schema(2), 4);
  REQUIRE(started.next().has_value());
  CHECK_THROWS_AS(started.skip_accepted(1), uhr::InvalidInput);
}

TEST_CASE("limiting accepted rows truncates the stream") {
  TempCsv file("limit", numbered_rows(12));
  io::CsvBatchReader reader(file.path, plain_schema(2), 4);
  reader.limit_accepted(9);
  std::vector<Index> sizes;
  while (auto b = reader.next()) sizes.push_back(b->n());
  REQUIRE(sizes.size() == 2);
  CHECK(sizes[0] == 4);
  CHECK(sizes[1] == 5);  // 4 plus the folded single leftover
  CHECK(reader.rows_accepted() == 9);
}

TEST_CASE("the response transform is applied and guarded") {
  TempCsv file("logshift",
               "y,x1,x2\n"
               "10,1,2\n"
               "-88,3,4\n"
               "0,5,6\n");
  auto schema = plain_schema(2);
  schema.response.log_shift_min = -87.0;
  io::CsvBatchReader reader(file.path, schema, 100);
  const auto b = reader.next();
  REQUIRE(b.has_value());
  CHECK(b->n() == 2);
  CHECK(b->y[0] == doctest::Approx(std::log(98.0)));
  CHECK(b->y[1] == doctest::Approx(std::log(88.0)));
  CHECK(reader.rows_skipped() == 1);
}

TEST_CASE("reader construction validates its inputs") {
  TempCsv file("valid", numbered_rows(3));
  CHECK_THROWS_AS(io::CsvBatchReader("no_such_file.csv", plain_schema(2), 4),
                  uhr::IoError);
  CHECK_THROWS_AS(io::CsvBatchReader(file.path, plain_schema(2), 0),
                  uhr::InvalidInput);
  auto schema = plain_schema(2);
  schema.predictors[1].column = "x9";
  CHECK_THROWS_AS(io::CsvBatchReader(file.path, schema, 4), uhr::SchemaError);
  TempCsv empty("empty", "");
  CHECK_THROWS_AS(io::CsvBatchReader(empty.path, plain_schema(2), 4),
                  uhr::IoError);
}

TEST_CASE("column minimum scan ignores gaps") {
  TempCsv file("minscan",
               "y,x1,x2\n"
               "5,1,1\n"
               "NA,1,1\n"
               "-87,1,1\n"
               "3,1,1\n");
  CHECK(io::scan_column_min(file.path, "y") == -87.0);
  CHECK_THROWS_AS(io::scan_column_min(file.path, "zz"), uhr::SchemaError);
}

TEST_CASE("prediction and error metrics at hand-checked values") {
  Mat X(3, 2);
  X << 1, 0, 0, 1, 1, 1;
  Vec coef(2);
  coef << 2, 3;
  const Vec pred = io::predict(coef, X);
  CHECK(pred[0] == 2.0);
  CHECK(pred[1] == 3.0);
  CHECK(pred[2] == 5.0);
  CHECK_THROWS_AS(io::predict(Vec::Ones(3).eval(), X), uhr::InvalidInput);

  Vec actual(3);
  actual << 2, 4, 3;
  const auto [mse, mae] = io::oos_metrics(pred, actual);
  CHECK(mse == doctest::Approx(5.0 / 3.0));
  CHECK(mae == doctest::Approx(1.0));
  CHECK_THROWS_AS(io::oos_metrics(pred, Vec::Ones(2).eval()),
                  uhr::InvalidInput);
}
