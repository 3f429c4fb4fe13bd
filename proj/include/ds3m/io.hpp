#pragma once

#include <fstream>
#include <iomanip>

#include "ds3m/forecasting.hpp"
#include "ds3m/simulators.hpp"

namespace ds3m {

/// Numeric table with a header row, comma separated.
struct DataTable {
    std::vector<std::string> columns;
    Tensor values;  // rows x columns

    std::size_t column_index(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw std::runtime_error("column not found: " + name);
    }
    bool has_column(const std::string& name) const {
        for (const auto& c : columns)
            if (c == name) return true;
        return false;
    }
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    return out;
}
}  // namespace detail

inline DataTable read_table(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open data file: " + path);
    DataTable table;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty data file: " + path);
    table.columns = detail::split_csv_line(line);
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != table.columns.size())
            throw std::runtime_error("ragged row " + std::to_string(rows + 1) + " in " + path);
        for (const std::string& f : fields) {
            try {
                values.push_back(std::stod(f));
            } catch (const std::exception&) {
                throw std::runtime_error("non-numeric value '" + f + "' in " + path);
            }
        }
        ++rows;
    }
    table.values = Tensor({rows, table.columns.size()}, std::move(values));
    return table;
}

/// Labeled-series layout: y0..y{D-1}, d_true, z0..z{Z-1}.
inline void write_labeled_series(const LabeledSeries& series, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << std::setprecision(17);
    std::size_t D = series.y.cols(), Z = series.z_true.cols();
    for (std::size_t j = 0; j < D; ++j) os << "y" << j << ",";
    os << "d_true";
    for (std::size_t j = 0; j < Z; ++j) os << ",z" << j;
    os << "\n";
    for (std::size_t t = 0; t < series.y.rows(); ++t) {
        for (std::size_t j = 0; j < D; ++j) os << series.y.at(t, j) << ",";
        os << series.d_true[t];
        for (std::size_t j = 0; j < Z; ++j) os << "," << series.z_true.at(t, j);
        os << "\n";
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

/// Reads a table in labeled-series layout; z columns are optional, and a
/// missing d_true column yields an unlabeled series (labels all zero, flag
/// returned false).
inline std::pair<LabeledSeries, bool> read_labeled_series(const DataTable& table) {
    LabeledSeries out;
    std::size_t T = table.values.rows();
    std::vector<std::size_t> ycols, zcols;
    std::ptrdiff_t dcol = -1;
    for (std::size_t i = 0; i < table.columns.size(); ++i) {
        const std::string& c = table.columns[i];
        if (c == "d_true") dcol = static_cast<std::ptrdiff_t>(i);
        else if (!c.empty() && c[0] == 'z') zcols.push_back(i);
        else ycols.push_back(i);
    }
    if (ycols.empty()) throw std::runtime_error("labeled series: no observation columns");
    out.y = Tensor({T, ycols.size()});
    out.z_true = Tensor({T, std::max<std::size_t>(zcols.size(), 1)});
    out.d_true.assign(T, 0);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < ycols.size(); ++j)
            out.y.at(t, j) = table.values.at(t, ycols[j]);
        for (std::size_t j = 0; j < zcols.size(); ++j)
            out.z_true.at(t, j) = table.values.at(t, zcols[j]);
        if (dcol >= 0)
            out.d_true[t] =
                static_cast<std::size_t>(table.values.at(t, static_cast<std::size_t>(dcol)));
    }
    return {std::move(out), dcol >= 0};
}

/// Forecast rows: index, true values (NaN when the window has no successor),
/// predicted means, interval bounds, argmax regime, regime probabilities.
inline void write_forecasts(const std::vector<ForecastResult>& forecasts,
                            const std::vector<const Window*>& windows,
                            const std::string& path) {
    if (forecasts.size() != windows.size())
        throw std::invalid_argument("write_forecasts: length mismatch");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << std::setprecision(17);
    std::size_t D = forecasts.empty() ? 0 : forecasts[0].mean.size();
    std::size_t K = forecasts.empty() ? 0 : forecasts[0].regime_probs.size();
    os << "index";
    for (std::size_t j = 0; j < D; ++j) os << ",true" << j;
    for (std::size_t j = 0; j < D; ++j) os << ",mean" << j;
    for (std::size_t j = 0; j < D; ++j) os << ",lower" << j;
    for (std::size_t j = 0; j < D; ++j) os << ",upper" << j;
    os << ",regime";
    for (std::size_t k = 0; k < K; ++k) os << ",p" << k;
    os << "\n";
    for (std::size_t i = 0; i < forecasts.size(); ++i) {
        const ForecastResult& f = forecasts[i];
        os << windows[i]->pos + windows[i]->seq.y.rows();
        for (std::size_t j = 0; j < D; ++j) {
            if (windows[i]->has_target) os << "," << windows[i]->target_y[j];
            else os << ",nan";
        }
        for (std::size_t j = 0; j < D; ++j) os << "," << f.mean[j];
        for (std::size_t j = 0; j < D; ++j) os << "," << f.lower[j];
        for (std::size_t j = 0; j < D; ++j) os << "," << f.upper[j];
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (f.regime_probs[k] > f.regime_probs[best]) best = k;
        os << "," << best;
        for (std::size_t k = 0; k < K; ++k) os << "," << f.regime_probs[k];
        os << "\n";
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline void write_segmentation(const SegmentationResult& seg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << std::setprecision(17);
    std::size_t K = seg.probabilities.cols();
    os << "index,regime";
    for (std::size_t k = 0; k < K; ++k) os << ",p" << k;
    os << "\n";
    for (std::size_t t = 0; t < seg.regime_path.size(); ++t) {
        os << t << "," << seg.regime_path[t];
        for (std::size_t k = 0; k < K; ++k) os << "," << seg.probabilities.at(t, k);
        os << "\n";
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline void write_text(const std::string& content, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << content;
    if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace ds3m
