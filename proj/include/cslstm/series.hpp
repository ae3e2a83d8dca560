#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "cslstm/errors.hpp"

namespace cslstm {

// One univariate curve. All four arrays stay index-aligned; labels are
// all-zero when the source had no label column.
struct TimeSeries {
    std::vector<std::int64_t> timestamps;
    std::vector<double> values;
    std::vector<std::uint8_t> labels;   // 1 = anomaly
    std::vector<std::uint8_t> filled;   // 1 = imputed point
    bool has_labels = false;

    std::size_t size() const { return values.size(); }

    void check_invariants() const {
        if (values.size() != timestamps.size() || labels.size() != timestamps.size() ||
            filled.size() != timestamps.size()) {
            throw DataError("time series arrays have mismatched lengths");
        }
        for (std::size_t i = 1; i < timestamps.size(); ++i) {
            if (timestamps[i] <= timestamps[i - 1]) {
                throw DataError("timestamps not strictly increasing at index " +
                                std::to_string(i));
            }
        }
    }
};

struct SplitSpec {
    double train_fraction = 0.35;
    double val_fraction = 0.15;

    void validate() const {
        if (train_fraction <= 0.0 || train_fraction >= 1.0 || val_fraction <= 0.0 ||
            val_fraction >= 1.0 || train_fraction + val_fraction >= 1.0) {
            throw ConfigError("split fractions must lie in (0,1) with train + val < 1");
        }
    }
};

struct NormStats {
    double mean = 0.0;
    double std = 1.0;
};

struct CsvSchema {
    std::string timestamp_col = "timestamp";
    std::string value_col = "value";
    std::string label_col = "label";
};

namespace series_detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw DataError("row " + std::to_string(row) + ": column '" + col +
                        "' has non-numeric value '" + s + "'");
    }
    if (pos != s.size()) {
        throw DataError("row " + std::to_string(row) + ": column '" + col +
                        "' has non-numeric value '" + s + "'");
    }
    return v;
}

inline std::int64_t parse_timestamp(const std::string& s, std::size_t row,
                                    const std::string& col) {
    double v = parse_double(s, row, col);
    double r = std::round(v);
    if (std::abs(v - r) > 1e-9) {
        throw DataError("row " + std::to_string(row) + ": column '" + col +
                        "' is not an integer timestamp: '" + s + "'");
    }
    return static_cast<std::int64_t>(r);
}

}  // namespace series_detail

// Reads a UTF-8 CSV with a header row, sorts by timestamp and enforces the
// TimeSeries invariants. The label column is optional; timestamp and value
// columns are required.
inline TimeSeries ingest_csv(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path);

    std::string header;
    if (!std::getline(in, header)) throw DataError("empty file: " + path);
    auto cols = series_detail::split_line(header);
    for (auto& c : cols) c = series_detail::trim(c);

    auto col_index = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == name) return i;
        return std::nullopt;
    };
    auto ts_idx = col_index(schema.timestamp_col);
    auto val_idx = col_index(schema.value_col);
    if (!ts_idx) throw DataError(path + ": missing required column '" + schema.timestamp_col + "'");
    if (!val_idx) throw DataError(path + ": missing required column '" + schema.value_col + "'");
    auto lbl_idx = col_index(schema.label_col);

    struct Row {
        std::int64_t t;
        double v;
        std::uint8_t label;
    };
    std::vector<Row> rows;
    std::string line;
    std::size_t row_no = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row_no;
        if (series_detail::trim(line).empty()) continue;
        auto fields = series_detail::split_line(line);
        if (fields.size() != cols.size()) {
            throw DataError("row " + std::to_string(row_no) + ": expected " +
                            std::to_string(cols.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }
        Row r;
        r.t = series_detail::parse_timestamp(series_detail::trim(fields[*ts_idx]), row_no,
                                             schema.timestamp_col);
        r.v = series_detail::parse_double(series_detail::trim(fields[*val_idx]), row_no,
                                          schema.value_col);
        r.label = 0;
        if (lbl_idx) {
            double lv = series_detail::parse_double(series_detail::trim(fields[*lbl_idx]), row_no,
                                                    schema.label_col);
            if (lv != 0.0 && lv != 1.0) {
                throw DataError("row " + std::to_string(row_no) + ": label must be 0 or 1, got " +
                                std::to_string(lv));
            }
            r.label = lv == 1.0 ? 1 : 0;
        }
        rows.push_back(r);
    }

    std::stable_sort(rows.begin(), rows.end(),
                     [](const Row& a, const Row& b) { return a.t < b.t; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].t == rows[i - 1].t) {
            throw DataError(path + ": duplicate timestamp " + std::to_string(rows[i].t));
        }
    }

    TimeSeries s;
    s.has_labels = lbl_idx.has_value();
    s.timestamps.reserve(rows.size());
    s.values.reserve(rows.size());
    for (const auto& r : rows) {
        s.timestamps.push_back(r.t);
        s.values.push_back(r.v);
        s.labels.push_back(r.label);
        s.filled.push_back(0);
    }
    s.check_invariants();
    return s;
}

// Fills timestamp gaps with linearly interpolated values. Inserted points
// carry filled=1 and label=0 so they can be masked out of the loss later.
inline TimeSeries impute_missing(const TimeSeries& series, std::int64_t expected_interval,
                                 std::int64_t max_gap_intervals = 10) {
    if (series.size() < 2) throw std::invalid_argument("impute_missing: need at least 2 points");
    if (expected_interval <= 0) {
        throw std::invalid_argument("impute_missing: expected_interval must be positive");
    }
    TimeSeries out;
    out.has_labels = series.has_labels;
    for (std::size_t i = 0; i + 1 < series.size(); ++i) {
        out.timestamps.push_back(series.timestamps[i]);
        out.values.push_back(series.values[i]);
        out.labels.push_back(series.labels[i]);
        out.filled.push_back(series.filled[i]);

        const std::int64_t gap = series.timestamps[i + 1] - series.timestamps[i];
        if (gap <= expected_interval) continue;
        if (gap > max_gap_intervals * expected_interval) {
            throw DataError("gap of " + std::to_string(gap) + " (over " +
                            std::to_string(max_gap_intervals) +
                            " intervals) between timestamps " +
                            std::to_string(series.timestamps[i]) + " and " +
                            std::to_string(series.timestamps[i + 1]) +
                            "; series too sparse to impute");
        }
        for (std::int64_t t = series.timestamps[i] + expected_interval;
             t < series.timestamps[i + 1]; t += expected_interval) {
            const double frac = static_cast<double>(t - series.timestamps[i]) /
                                static_cast<double>(gap);
            out.timestamps.push_back(t);
            out.values.push_back(series.values[i] +
                                 frac * (series.values[i + 1] - series.values[i]));
            out.labels.push_back(0);
            out.filled.push_back(1);
        }
    }
    out.timestamps.push_back(series.timestamps.back());
    out.values.push_back(series.values.back());
    out.labels.push_back(series.labels.back());
    out.filled.push_back(series.filled.back());
    out.check_invariants();
    return out;
}

// Median of consecutive timestamp deltas; used when the sampling interval is
// not configured.
inline std::int64_t infer_interval(const TimeSeries& series) {
    if (series.size() < 2) return 1;
    std::vector<std::int64_t> deltas(series.size() - 1);
    for (std::size_t i = 0; i + 1 < series.size(); ++i) {
        deltas[i] = series.timestamps[i + 1] - series.timestamps[i];
    }
    std::nth_element(deltas.begin(), deltas.begin() + deltas.size() / 2, deltas.end());
    return std::max<std::int64_t>(1, deltas[deltas.size() / 2]);
}

// z-score with population (1/n) standard deviation. Constant series get a
// std floor of 1 so the output is all zeros instead of NaN.
inline std::pair<TimeSeries, NormStats> normalize(const TimeSeries& series,
                                                  std::optional<NormStats> stats = std::nullopt) {
    if (series.size() == 0) throw std::invalid_argument("normalize: empty series");
    NormStats st;
    if (stats) {
        st = *stats;
        if (st.std <= 0.0) throw std::invalid_argument("normalize: std must be positive");
    } else {
        double mean = std::accumulate(series.values.begin(), series.values.end(), 0.0) /
                      static_cast<double>(series.size());
        double var = 0.0;
        for (double v : series.values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(series.size());
        st.mean = mean;
        st.std = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    TimeSeries out = series;
    for (auto& v : out.values) v = (v - st.mean) / st.std;
    return {std::move(out), st};
}

inline std::vector<double> denormalize(std::span<const double> values, const NormStats& st) {
    std::vector<double> out(values.begin(), values.end());
    for (auto& v : out) v = v * st.std + st.mean;
    return out;
}

// Chronological, contiguous, non-overlapping split. min_piece_len guards the
// downstream window requirement.
inline std::tuple<TimeSeries, TimeSeries, TimeSeries> split(const TimeSeries& series,
                                                            const SplitSpec& spec,
                                                            std::size_t min_piece_len = 0) {
    spec.validate();
    const std::size_t n = series.size();
    const auto b1 = static_cast<std::size_t>(std::floor(static_cast<double>(n) *
                                                        spec.train_fraction));
    const auto b2 = static_cast<std::size_t>(std::floor(static_cast<double>(n) *
                                                        (spec.train_fraction + spec.val_fraction)));
    if (b1 < min_piece_len || b2 - b1 < min_piece_len || n - b2 < min_piece_len) {
        throw DataError("series of length " + std::to_string(n) +
                        " too short to split: every piece needs at least " +
                        std::to_string(min_piece_len) + " points (got " + std::to_string(b1) +
                        "/" + std::to_string(b2 - b1) + "/" + std::to_string(n - b2) + ")");
    }
    auto slice = [&](std::size_t lo, std::size_t hi) {
        TimeSeries out;
        out.has_labels = series.has_labels;
        out.timestamps.assign(series.timestamps.begin() + lo, series.timestamps.begin() + hi);
        out.values.assign(series.values.begin() + lo, series.values.begin() + hi);
        out.labels.assign(series.labels.begin() + lo, series.labels.begin() + hi);
        out.filled.assign(series.filled.begin() + lo, series.filled.begin() + hi);
        return out;
    };
    return {slice(0, b1), slice(b1, b2), slice(b2, n)};
}

// Writes timestamp,value[,label]; the denoise and synth subcommands reuse it.
inline void write_series_csv(const std::string& path, const TimeSeries& series,
                             const CsvSchema& schema = {}) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open output file: " + path);
    out << schema.timestamp_col << ',' << schema.value_col;
    if (series.has_labels) out << ',' << schema.label_col;
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", series.values[i]);
        out << series.timestamps[i] << ',' << buf;
        if (series.has_labels) out << ',' << static_cast<int>(series.labels[i]);
        out << '\n';
    }
}

}  // namespace cslstm
