#include "uhr/csv_stream.hpp"

#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <unordered_map>

namespace uhr::io {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r'))
    --b;
  return s.substr(a, b - a);
}

// Splits one CSV line. Quoted fields may contain commas and doubled quotes;
// embedded newlines are not supported.
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

bool is_missing(const std::string& field) {
  return field.empty() || field == "NA" || field == "na" || field == "NULL";
}

bool parse_double(const std::string& field, double& out) {
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

}  // namespace

int hour_of_hhmm(double hhmm) {
  if (!(hhmm >= 0) || hhmm > 2400)
    throw InvalidInput("hour_of_hhmm: clock value out of range");
  return static_cast<int>(hhmm / 100.0) % 24;
}

namespace {

bool eval_predicate_hour(const Predicate& pred, int hour) {
  const int a = static_cast<int>(pred.args.at(0));
  const int b = static_cast<int>(pred.args.at(1));
  return a <= b ? (hour >= a && hour < b) : (hour >= a || hour < b);
}

bool eval_predicate(const Predicate& pred, double value) {
  switch (pred.kind) {
    case Predicate::Kind::kInSet:
      for (const double v : pred.args)
        if (value == v) return true;
      return false;
    case Predicate::Kind::kRange:
      return value >= pred.args.at(0) && value <= pred.args.at(1);
    case Predicate::Kind::kHourIn:
      return eval_predicate_hour(pred, hour_of_hhmm(value));
  }
  return false;
}

std::string predicate_kind_name(Predicate::Kind k) {
  switch (k) {
    case Predicate::Kind::kInSet:
      return "in_set";
    case Predicate::Kind::kRange:
      return "range";
    case Predicate::Kind::kHourIn:
      return "hour_in";
  }
  return "?";
}

Predicate::Kind predicate_kind_from_name(const std::string& name) {
  if (name == "in_set") return Predicate::Kind::kInSet;
  if (name == "range") return Predicate::Kind::kRange;
  if (name == "hour_in") return Predicate::Kind::kHourIn;
  throw SchemaError("schema: unknown predicate kind '" + name + "'");
}

nlohmann::json predicate_to_json(const Predicate& pred) {
  return {{"kind", predicate_kind_name(pred.kind)},
          {"column", pred.column},
          {"args", pred.args}};
}

Predicate predicate_from_json(const nlohmann::json& j) {
  Predicate pred;
  pred.kind = predicate_kind_from_name(j.at("kind").get<std::string>());
  pred.column = j.at("column").get<std::string>();
  pred.args = j.at("args").get<std::vector<double>>();
  const size_t expected = pred.kind == Predicate::Kind::kInSet ? 1 : 2;
  if (pred.kind == Predicate::Kind::kInSet) {
    if (pred.args.empty())
      throw SchemaError("schema: in_set predicate needs at least one value");
  } else if (pred.args.size() != expected) {
    throw SchemaError("schema: predicate '" + predicate_kind_name(pred.kind) +
                      "' needs exactly two args");
  }
  return pred;
}

}  // namespace

nlohmann::json to_json(const StreamSchema& schema) {
  nlohmann::json j;
  nlohmann::json resp;
  resp["column"] = schema.response.column;
  if (schema.response.log_shift_min)
    resp["transform"] = {{"type", "log_shift"},
                         {"min_value", *schema.response.log_shift_min}};
  else
    resp["transform"] = {{"type", "identity"}};
  j["response"] = resp;
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : schema.predictors) {
    nlohmann::json jp;
    switch (p.kind) {
      case PredictorSpec::Kind::kNumeric:
        jp["type"] = "numeric";
        jp["column"] = p.column;
        jp["scale"] = p.scale;
        break;
      case PredictorSpec::Kind::kHourOf:
        jp["type"] = "hour_of";
        jp["column"] = p.column;
        break;
      case PredictorSpec::Kind::kIndicator:
        jp["type"] = "indicator";
        jp["predicate"] = predicate_to_json(p.predicate);
        break;
    }
    preds.push_back(std::move(jp));
  }
  j["predictors"] = preds;
  j["intercept"] = schema.intercept;
  nlohmann::json filters = nlohmann::json::array();
  for (const auto& f : schema.row_filters)
    filters.push_back(predicate_to_json(f));
  j["row_filters"] = filters;
  return j;
}

StreamSchema schema_from_json(const nlohmann::json& j) {
  try {
    StreamSchema schema;
    const auto& resp = j.at("response");
    schema.response.column = resp.at("column").get<std::string>();
    if (resp.contains("transform")) {
      const auto& tr = resp.at("transform");
      const auto type = tr.at("type").get<std::string>();
      if (type == "log_shift")
        schema.response.log_shift_min = tr.at("min_value").get<double>();
      else if (type != "identity")
        throw SchemaError("schema: unknown response transform '" + type + "'");
    }
    for (const auto& jp : j.at("predictors")) {
      PredictorSpec p;
      const auto type = jp.at("type").get<std::string>();
      if (type == "numeric") {
        p.kind = PredictorSpec::Kind::kNumeric;
        p.column = jp.at("column").get<std::string>();
        p.scale = jp.value("scale", 1.0);
        if (!(p.scale != 0) || !std::isfinite(p.scale))
          throw SchemaError("schema: numeric scale must be finite, non-zero");
      } else if (type == "hour_of") {
        p.kind = PredictorSpec::Kind::kHourOf;
        p.column = jp.at("column").get<std::string>();
      } else if (type == "indicator") {
        p.kind = PredictorSpec::Kind::kIndicator;
        p.predicate = predicate_from_json(jp.at("predicate"));
        p.column = p.predicate.column;
      } else {
        throw SchemaError("schema: unknown predictor type '" + type + "'");
      }
      schema.predictors.push_back(std::move(p));
    }
    if (schema.predictors.empty())
      throw SchemaError("schema: need at least one predictor");
    schema.intercept = j.value("intercept", true);
    if (j.contains("row_filters"))
      for (const auto& jf : j.at("row_filters"))
        schema.row_filters.push_back(predicate_from_json(jf));
    return schema;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema: ") + e.what());
  }
}

StreamSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_schema: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("load_schema: ") + e.what());
  }
  return schema_from_json(j);
}

// Rows accumulate as flat buffers; matrices are materialized only when a
// batch is emitted.
namespace {
struct RowBuf {
  std::vector<double> x;  // row-major, n * p
  std::vector<double> y;
  Index n = 0;

  void clear() {
    x.clear();
    y.clear();
    n = 0;
  }
};

streaming::BatchData materialize(const RowBuf& buf, Index p,
                                 long batch_index) {
  streaming::BatchData batch;
  batch.batch_index = batch_index;
  batch.X.resize(buf.n, p);
  batch.y.resize(buf.n);
  for (Index i = 0; i < buf.n; ++i) {
    for (Index j = 0; j < p; ++j)
      batch.X(i, j) = buf.x[static_cast<size_t>(i * p + j)];
    batch.y[i] = buf.y[static_cast<size_t>(i)];
  }
  return batch;
}
}  // namespace

struct CsvBatchReader::Impl {
  std::ifstream file;
  StreamSchema schema;
  Index batch_size = 0;
  bool strict = false;
  Index p = 0;

  int response_col = -1;
  std::vector<int> predictor_cols;  // -1 for indicator-only predictors
  std::vector<int> predicate_cols;  // per predictor, -1 unless indicator
  std::vector<int> filter_cols;

  long line_number = 0;
  long accepted = 0;
  long skipped = 0;
  long skip_remaining = 0;
  long limit = 0;
  bool started = false;
  bool eof = false;

  RowBuf filling;
  std::optional<RowBuf> pending;
  std::deque<streaming::BatchData> ready;
  long next_batch_index = 1;
  Index high_water = 0;

  void note_high_water() {
    const Index held = filling.n + (pending ? pending->n : 0);
    high_water = std::max(high_water, held);
  }
};

CsvBatchReader::CsvBatchReader(const std::string& path,
                               const StreamSchema& schema, Index batch_size,
                               bool strict)
    : impl_(std::make_unique<Impl>()) {
  if (batch_size < 1)
    throw InvalidInput("CsvBatchReader: batch_size must be positive");
  impl_->file.open(path);
  if (!impl_->file) throw IoError("CsvBatchReader: cannot open " + path);
  impl_->schema = schema;
  impl_->batch_size = batch_size;
  impl_->strict = strict;
  impl_->p = schema.p();

  std::string header;
  if (!std::getline(impl_->file, header))
    throw IoError("CsvBatchReader: " + path + " is empty");
  ++impl_->line_number;
  const auto names = split_csv_line(header);
  std::unordered_map<std::string, int> index;
  for (size_t i = 0; i < names.size(); ++i)
    index.emplace(names[i], static_cast<int>(i));
  const auto resolve = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end())
      throw SchemaError("CsvBatchReader: column '" + name +
                        "' not found in header");
    return it->second;
  };
  impl_->response_col = resolve(schema.response.column);
  for (const auto& pred : schema.predictors) {
    if (pred.kind == PredictorSpec::Kind::kIndicator) {
      impl_->predictor_cols.push_back(-1);
      impl_->predicate_cols.push_back(resolve(pred.predicate.column));
    } else {
      impl_->predictor_cols.push_back(resolve(pred.column));
      impl_->predicate_cols.push_back(-1);
    }
  }
  for (const auto& f : schema.row_filters)
    impl_->filter_cols.push_back(resolve(f.column));
}

CsvBatchReader::~CsvBatchReader() = default;

void CsvBatchReader::skip_accepted(long n) {
  if (impl_->started)
    throw InvalidInput("skip_accepted: stream already started");
  if (n < 0) throw InvalidInput("skip_accepted: negative count");
  impl_->skip_remaining = n;
}

void CsvBatchReader::limit_accepted(long n) {
  if (impl_->started)
    throw InvalidInput("limit_accepted: stream already started");
  if (n < 0) throw InvalidInput("limit_accepted: negative count");
  impl_->limit = n;
}

long CsvBatchReader::rows_accepted() const { return impl_->accepted; }
long CsvBatchReader::rows_skipped() const { return impl_->skipped; }
Index CsvBatchReader::buffered_rows_high_water() const {
  return impl_->high_water;
}

std::optional<streaming::BatchData> CsvBatchReader::next() {
  auto& im = *impl_;
  im.started = true;
  for (;;) {
    if (!im.ready.empty()) {
      auto batch = std::move(im.ready.front());
      im.ready.pop_front();
      return batch;
    }
    if (im.eof) return std::nullopt;

    std::string line;
    const bool have_line =
        (im.limit == 0 || im.accepted < im.limit) &&
        static_cast<bool>(std::getline(im.file, line));
    if (!have_line) {
      im.eof = true;
      // Fold a short remainder into the finished batch; a remainder longer
      // than p stands on its own.
      if (im.filling.n > 0) {
        if (im.pending && im.filling.n <= im.p) {
          im.pending->x.insert(im.pending->x.end(), im.filling.x.begin(),
                               im.filling.x.end());
          im.pending->y.insert(im.pending->y.end(), im.filling.y.begin(),
                               im.filling.y.end());
          im.pending->n += im.filling.n;
          im.filling.clear();
        } else if (im.pending) {
          im.ready.push_back(
              materialize(*im.pending, im.p, im.next_batch_index++));
          im.pending.reset();
        }
        if (im.filling.n > 0) {
          im.ready.push_back(
              materialize(im.filling, im.p, im.next_batch_index++));
          im.filling.clear();
        }
      }
      if (im.pending) {
        im.ready.push_back(
            materialize(*im.pending, im.p, im.next_batch_index++));
        im.pending.reset();
      }
      continue;
    }

    ++im.line_number;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    const auto field_at = [&](int col) -> const std::string& {
      static const std::string empty;
      return col >= 0 && static_cast<size_t>(col) < fields.size()
                 ? fields[static_cast<size_t>(col)]
                 : empty;
    };
    const auto bad_row = [&](const std::string& why) {
      if (im.strict)
        throw InvalidInput("line " + std::to_string(im.line_number) + ": " +
                           why);
      ++im.skipped;
    };

    // Needed numeric values first; any missing or malformed one drops the
    // row before any filter logic runs.
    double resp_raw = 0;
    {
      const auto& f = field_at(im.response_col);
      if (is_missing(f)) {
        bad_row("missing response");
        continue;
      }
      if (!parse_double(f, resp_raw)) {
        bad_row("unparseable response '" + f + "'");
        continue;
      }
    }
    bool row_ok = true;
    std::vector<double> filter_vals(im.filter_cols.size());
    for (size_t i = 0; i < im.filter_cols.size(); ++i) {
      const auto& f = field_at(im.filter_cols[i]);
      if (is_missing(f) || !parse_double(f, filter_vals[i])) {
        bad_row("missing filter column value");
        row_ok = false;
        break;
      }
    }
    if (!row_ok) continue;
    for (size_t i = 0; i < im.schema.row_filters.size(); ++i) {
      if (!eval_predicate(im.schema.row_filters[i], filter_vals[i])) {
        ++im.skipped;
        row_ok = false;
        break;
      }
    }
    if (!row_ok) continue;

    std::vector<double> feat(static_cast<size_t>(im.p));
    size_t fi = 0;
    if (im.schema.intercept) feat[fi++] = 1.0;
    for (size_t pi = 0; pi < im.schema.predictors.size() && row_ok; ++pi) {
      const auto& pred = im.schema.predictors[pi];
      const int col = pred.kind == PredictorSpec::Kind::kIndicator
                          ? im.predicate_cols[pi]
                          : im.predictor_cols[pi];
      const auto& f = field_at(col);
      double raw = 0;
      if (is_missing(f) || !parse_double(f, raw)) {
        bad_row("missing predictor column value");
        row_ok = false;
        break;
      }
      try {
        switch (pred.kind) {
          case PredictorSpec::Kind::kNumeric:
            feat[fi++] = raw * pred.scale;
            break;
          case PredictorSpec::Kind::kHourOf: {
            const int h = hour_of_hhmm(raw);
            feat[fi++] = h == 0 ? 24.0 : static_cast<double>(h);
            break;
          }
          case PredictorSpec::Kind::kIndicator:
            feat[fi++] = eval_predicate(pred.predicate, raw) ? 1.0 : 0.0;
            break;
        }
      } catch (const InvalidInput& e) {
        bad_row(e.what());
        row_ok = false;
      }
    }
    if (!row_ok) continue;

    double y = resp_raw;
    if (im.schema.response.log_shift_min) {
      const double arg = resp_raw - *im.schema.response.log_shift_min + 1.0;
      if (!(arg > 0)) {
        bad_row("log transform argument not positive");
        continue;
      }
      y = std::log(arg);
    }

    if (im.skip_remaining > 0) {
      --im.skip_remaining;
      continue;
    }
    ++im.accepted;
    im.filling.x.insert(im.filling.x.end(), feat.begin(), feat.end());
    im.filling.y.push_back(y);
    ++im.filling.n;
    im.note_high_water();
    if (im.filling.n == im.batch_size) {
      if (im.pending)
        im.ready.push_back(
            materialize(*im.pending, im.p, im.next_batch_index++));
      im.pending = std::move(im.filling);
      im.filling = RowBuf{};
    }
  }
}

std::pair<double, Vec> airline_features(const AirlineRecord& rec,
                                        double min_delay) {
  if (rec.day_of_week < 1 || rec.day_of_week > 7)
    throw InvalidInput("airline_features: day_of_week must be in 1..7");
  if (!(rec.distance >= 0))
    throw InvalidInput("airline_features: negative distance");
  const double arg = rec.arr_delay - min_delay + 1.0;
  if (!(arg > 0))
    throw InvalidInput("airline_features: log transform argument not positive");
  const int hour = hour_of_hhmm(rec.dep_time);
  Vec x(5);
  x[0] = 1.0;
  x[1] = hour == 0 ? 24.0 : static_cast<double>(hour);
  x[2] = rec.distance / 1000.0;
  x[3] = (hour >= 20 || hour < 5) ? 1.0 : 0.0;
  x[4] = (rec.day_of_week == 6 || rec.day_of_week == 7) ? 1.0 : 0.0;
  return {std::log(arg), x};
}

StreamSchema airline_schema(double min_delay) {
  StreamSchema schema;
  schema.response.column = "ArrDelay";
  schema.response.log_shift_min = min_delay;
  schema.intercept = true;
  PredictorSpec hour;
  hour.kind = PredictorSpec::Kind::kHourOf;
  hour.column = "DepTime";
  schema.predictors.push_back(hour);
  PredictorSpec dist;
  dist.kind = PredictorSpec::Kind::kNumeric;
  dist.column = "Distance";
  dist.scale = 0.001;
  schema.predictors.push_back(dist);
  PredictorSpec night;
  night.kind = PredictorSpec::Kind::kIndicator;
  night.predicate = {Predicate::Kind::kHourIn, "DepTime", {20, 5}};
  night.column = "DepTime";
  schema.predictors.push_back(night);
  PredictorSpec weekend;
  weekend.kind = PredictorSpec::Kind::kIndicator;
  weekend.predicate = {Predicate::Kind::kInSet, "DayOfWeek", {6, 7}};
  weekend.column = "DayOfWeek";
  schema.predictors.push_back(weekend);
  return schema;
}

double scan_column_min(const std::string& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw IoError("scan_column_min: cannot open " + path);
  std::string header;
  if (!std::getline(in, header))
    throw IoError("scan_column_min: " + path + " is empty");
  const auto names = split_csv_line(header);
  int col = -1;
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == column) col = static_cast<int>(i);
  if (col < 0)
    throw SchemaError("scan_column_min: column '" + column + "' not found");
  double best = std::numeric_limits<double>::infinity();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<size_t>(col) >= fields.size()) continue;
    double v = 0;
    if (!is_missing(fields[static_cast<size_t>(col)]) &&
        parse_double(fields[static_cast<size_t>(col)], v))
      best = std::min(best, v);
  }
  if (!std::isfinite(best))
    throw InvalidInput("scan_column_min: no parseable values in '" + column +
                       "'");
  return best;
}

Vec predict(const Vec& coef, const Mat& X) {
  if (X.cols() != coef.size())
    throw InvalidInput("predict: coefficient length mismatch");
  return X * coef;
}

std::pair<double, double> oos_metrics(const Vec& predicted,
                                      const Vec& actual) {
  if (predicted.size() != actual.size() || predicted.size() < 1)
    throw InvalidInput("oos_metrics: size mismatch or empty");
  const Vec d = predicted - actual;
  return {d.squaredNorm() / static_cast<double>(d.size()),
          d.cwiseAbs().sum() / static_cast<double>(d.size())};
}

}  // namespace uhr::io
