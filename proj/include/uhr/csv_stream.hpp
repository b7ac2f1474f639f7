#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uhr/streaming.hpp"
#include "uhr/types.hpp"

namespace uhr::io {

// Row predicates for indicator features and row filters. Values are read
// from the named column as numbers.
struct Predicate {
  enum class Kind {
    kInSet,   // value is one of args
    kRange,   // args[0] <= value <= args[1]
    kHourIn,  // hour extracted from an hhmm time lies in [args[0], args[1]),
              // wrapping past midnight when args[0] > args[1]
  };
  Kind kind = Kind::kInSet;
  std::string column;
  std::vector<double> args;
};

struct PredictorSpec {
  enum class Kind {
    kNumeric,    // raw value times scale
    kHourOf,     // hour of an hhmm time, mapped to 1..24 (midnight hour = 24)
    kIndicator,  // 0/1 from a predicate
  };
  Kind kind = Kind::kNumeric;
  std::string column;  // unused for kIndicator (the predicate names it)
  double scale = 1.0;
  Predicate predicate;
};

struct ResponseSpec {
  std::string column;
  // When set, the response becomes log(raw - min_value + 1); rows where the
  // argument is not positive are rejected.
  std::optional<double> log_shift_min;
};

struct StreamSchema {
  ResponseSpec response;
  std::vector<PredictorSpec> predictors;
  bool intercept = true;
  std::vector<Predicate> row_filters;  // a row must satisfy all of them

  Index p() const {
    return static_cast<Index>(predictors.size()) + (intercept ? 1 : 0);
  }
};

nlohmann::json to_json(const StreamSchema& schema);
StreamSchema schema_from_json(const nlohmann::json& j);
StreamSchema load_schema(const std::string& path);

// Hour of an hhmm clock value, in 0..23 (2400 wraps to 0).
int hour_of_hhmm(double hhmm);

// Reads a CSV file in batches of batch_size rows that pass the schema.
// The reader keeps at most one finished batch plus the one being filled, so
// memory stays bounded by the batch size regardless of file length. A final
// partial batch with more than p rows is yielded on its own; a smaller
// remainder is folded into the previous batch.
class CsvBatchReader {
 public:
  CsvBatchReader(const std::string& path, const StreamSchema& schema,
                 Index batch_size, bool strict = false);
  ~CsvBatchReader();

  CsvBatchReader(const CsvBatchReader&) = delete;
  CsvBatchReader& operator=(const CsvBatchReader&) = delete;

  std::optional<streaming::BatchData> next();

  // Discards the first n rows that pass the schema, so a stream can resume
  // where a previous pass stopped. Must be called before the first next().
  void skip_accepted(long n);

  // Stops producing batches after n accepted rows (0 means no limit).
  void limit_accepted(long n);

  long rows_accepted() const;
  long rows_skipped() const;
  // Largest number of parsed rows ever held at once: at most the finished
  // batch awaiting emission plus the batch being filled.
  Index buffered_rows_high_water() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Record layout for the flight-delay model.
struct AirlineRecord {
  double dep_time = 0;    // hhmm clock value
  double distance = 0;    // miles
  int day_of_week = 0;    // 1 = Monday .. 7 = Sunday
  double arr_delay = 0;   // minutes
};

// Response and features for the flight-delay model:
//   y = log(arr_delay - min_delay + 1)
//   x = (1, departure hour in 1..24, distance in thousands of miles,
//        night flag for departures from 20:00 up to 05:00, weekend flag).
std::pair<double, Vec> airline_features(const AirlineRecord& rec,
                                        double min_delay);

// The same model as a schema over columns DepTime, Distance, DayOfWeek,
// ArrDelay.
StreamSchema airline_schema(double min_delay);

// Smallest value of a numeric column; one full pass over the file. Rows
// where the column is missing or unparseable are ignored.
double scan_column_min(const std::string& path, const std::string& column);

Vec predict(const Vec& coef, const Mat& X);

// Mean squared and mean absolute prediction error.
std::pair<double, double> oos_metrics(const Vec& predicted, const Vec& actual);

}  // namespace uhr::io
