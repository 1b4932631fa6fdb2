#include "cocktail/dataset.hpp"

#include "cocktail/errors.hpp"
#include "cocktail/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace cocktail {
namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line, size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
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
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (quoted)
        throw IngestionError("line " + std::to_string(line_no) + ": unterminated quote");
    fields.push_back(cur);
    return fields;
}

std::string path_stem(const std::string& path) {
    size_t slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    size_t dot = base.find_last_of('.');
    return dot == std::string::npos || dot == 0 ? base : base.substr(0, dot);
}

double parse_numeric_cell(const std::string& token, size_t row, const std::string& col) {
    size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(token, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != token.size() || !std::isfinite(value))
        throw IngestionError("row " + std::to_string(row) + ", column '" + col +
                             "': non-numeric cell '" + token + "'");
    return value;
}

// Population statistics of one encoded column over the training rows.
void train_column_stats(const Matrix& x, size_t col, double& mean, double& stddev) {
    double sum = 0.0;
    for (size_t r = 0; r < x.rows; ++r) sum += x(r, col);
    mean = x.rows == 0 ? 0.0 : sum / static_cast<double>(x.rows);
    double ss = 0.0;
    for (size_t r = 0; r < x.rows; ++r) {
        double d = x(r, col) - mean;
        ss += d * d;
    }
    stddev = x.rows == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(x.rows));
}

} // namespace

bool RawDataset::has_missing() const {
    for (const auto& col : features) {
        if (col.kind == ColumnKind::Numeric) {
            for (const auto& cell : col.numeric)
                if (!cell.has_value()) return true;
        } else {
            for (const auto& cell : col.text)
                if (!cell.has_value()) return true;
        }
    }
    return false;
}

RawDataset load_csv(const std::string& csv_path, const std::string& meta_path) {
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw IngestionError("cannot open metadata file: " + meta_path);
    json meta = json::parse(meta_in, nullptr, false);
    if (meta.is_discarded() || !meta.is_object() || !meta.contains("target") ||
        !meta.contains("columns"))
        throw IngestionError("metadata must be a JSON object with 'target' and 'columns'");

    const std::string target_name = meta.at("target").get<std::string>();
    std::map<std::string, ColumnKind> declared;
    for (const auto& jc : meta.at("columns")) {
        const std::string name = jc.at("name").get<std::string>();
        const std::string kind = jc.at("kind").get<std::string>();
        if (kind != "numeric" && kind != "categorical")
            throw IngestionError("column '" + name + "': unknown kind '" + kind + "'");
        if (!declared.emplace(name, kind == "numeric" ? ColumnKind::Numeric
                                                      : ColumnKind::Categorical)
                 .second)
            throw IngestionError("column '" + name + "' declared twice");
    }
    auto target_decl = declared.find(target_name);
    if (target_decl == declared.end())
        throw IngestionError("target column '" + target_name + "' not declared");
    if (target_decl->second != ColumnKind::Categorical)
        throw IngestionError("target column '" + target_name + "' must be categorical");
    if (declared.size() < 2)
        throw IngestionError("need at least one feature column besides the target");

    std::ifstream in(csv_path);
    if (!in) throw IngestionError("cannot open dataset file: " + csv_path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw IngestionError("empty dataset file: " + csv_path);

    const auto header = split_csv_line(lines[0], 1);
    std::set<std::string> seen_headers;
    for (const auto& h : header) {
        if (declared.find(h) == declared.end())
            throw IngestionError("column '" + h + "' not declared in metadata");
        if (!seen_headers.insert(h).second)
            throw IngestionError("column '" + h + "' appears twice in the header");
    }
    for (const auto& [name, kind] : declared)
        if (seen_headers.count(name) == 0)
            throw IngestionError("declared column '" + name + "' missing from the file");

    RawDataset d;
    d.name = path_stem(csv_path);
    d.target_name = target_name;
    size_t target_field = 0;
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] == target_name) {
            target_field = i;
            continue;
        }
        RawColumn col;
        col.name = header[i];
        col.kind = declared.at(header[i]);
        d.features.push_back(std::move(col));
    }

    std::vector<size_t> feature_fields;
    for (size_t i = 0; i < header.size(); ++i)
        if (i != target_field) feature_fields.push_back(i);

    for (size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) continue;
        const auto fields = split_csv_line(lines[li], li + 1);
        const size_t row = d.n_rows + 1; // 1-based data row for messages
        if (fields.size() != header.size())
            throw IngestionError("row " + std::to_string(row) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
        const std::string& label = fields[target_field];
        if (label.empty())
            throw IngestionError("row " + std::to_string(row) + ": missing target label");
        d.target.push_back(label);
        for (size_t f = 0; f < feature_fields.size(); ++f) {
            RawColumn& col = d.features[f];
            const std::string& token = fields[feature_fields[f]];
            if (col.kind == ColumnKind::Numeric)
                col.numeric.push_back(token.empty()
                                          ? std::optional<double>{}
                                          : std::optional<double>{parse_numeric_cell(
                                                token, row, col.name)});
            else
                col.text.push_back(token.empty() ? std::optional<std::string>{}
                                                 : std::optional<std::string>{token});
        }
        ++d.n_rows;
    }

    std::set<std::string> classes(d.target.begin(), d.target.end());
    if (classes.size() < 2)
        throw IngestionError("target column has fewer than 2 classes");
    return d;
}

RawDataset impute(const RawDataset& d) {
    RawDataset out = d;
    for (auto& col : out.features) {
        if (col.kind == ColumnKind::Numeric) {
            std::map<double, long> counts; // ordered: smallest value wins ties
            for (const auto& cell : col.numeric)
                if (cell.has_value()) ++counts[*cell];
            if (counts.empty())
                throw IngestionError("column '" + col.name + "' is entirely missing");
            double mode = counts.begin()->first;
            long best = counts.begin()->second;
            for (const auto& [value, n] : counts)
                if (n > best) {
                    mode = value;
                    best = n;
                }
            for (auto& cell : col.numeric)
                if (!cell.has_value()) cell = mode;
        } else {
            std::map<std::string, long> counts;
            for (const auto& cell : col.text)
                if (cell.has_value()) ++counts[*cell];
            if (counts.empty())
                throw IngestionError("column '" + col.name + "' is entirely missing");
            std::string mode = counts.begin()->first;
            long best = counts.begin()->second;
            for (const auto& [value, n] : counts)
                if (n > best) {
                    mode = value;
                    best = n;
                }
            for (auto& cell : col.text)
                if (!cell.has_value()) cell = mode;
        }
    }
    return out;
}

const Matrix& SplitDataset::x_test() const {
    ++*test_reads_;
    return x_test_;
}

const std::vector<int>& SplitDataset::y_test() const {
    ++*test_reads_;
    return y_test_;
}

long SplitDataset::test_access_count() const { return test_reads_->load(); }

TrainValView SplitDataset::train_val_view() const {
    TrainValView v;
    v.x_train = &x_train;
    v.y_train = &y_train;
    v.x_val = &x_val;
    v.y_val = &y_val;
    v.class_weights = &class_weights;
    v.n_classes = n_classes;
    return v;
}

namespace {

Matrix take_rows(const Matrix& x, const std::vector<size_t>& idx) {
    Matrix out(idx.size(), x.cols);
    for (size_t r = 0; r < idx.size(); ++r)
        for (size_t c = 0; c < x.cols; ++c) out(r, c) = x(idx[r], c);
    return out;
}

std::vector<int> take_labels(const std::vector<int>& y, const std::vector<size_t>& idx) {
    std::vector<int> out(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) out[r] = y[idx[r]];
    return out;
}

// Fill standardized matrices and the stats vectors from raw splits.
void apply_standardization(SplitDataset& s, Matrix& x_test_out, const Matrix& raw_train,
                           const Matrix& raw_val, const Matrix& raw_test) {
    const size_t n_cols = raw_train.cols;
    s.feature_means.assign(n_cols, 0.0);
    s.feature_stds.assign(n_cols, 1.0);
    Matrix tr = raw_train, va = raw_val, te = raw_test;
    for (size_t c = 0; c < n_cols; ++c) {
        if (!s.encoded_columns[c].standardized) continue;
        double mean = 0.0, stddev = 0.0;
        train_column_stats(raw_train, c, mean, stddev);
        s.feature_means[c] = mean;
        s.feature_stds[c] = stddev;
        auto transform = [&](Matrix& m) {
            for (size_t r = 0; r < m.rows; ++r)
                m(r, c) = stddev < 1e-12 ? 0.0 : (m(r, c) - mean) / stddev;
        };
        transform(tr);
        transform(va);
        transform(te);
    }
    s.x_train = std::move(tr);
    s.x_val = std::move(va);
    x_test_out = std::move(te);
}

std::vector<double> weights_from_counts(const std::vector<long>& train_counts) {
    long total = 0;
    for (long n : train_counts) total += n;
    std::vector<double> w(train_counts.size(), 0.0);
    for (size_t c = 0; c < train_counts.size(); ++c) {
        require(train_counts[c] > 0, "a class is absent from the training split");
        w[c] = static_cast<double>(total) /
               (static_cast<double>(train_counts.size()) *
                static_cast<double>(train_counts[c]));
    }
    return w;
}

} // namespace

SplitDataset encode_and_split(const RawDataset& d, uint64_t seed) {
    require(!d.has_missing(), "encode_and_split requires an imputed dataset");
    require(d.n_rows > 0, "encode_and_split requires data rows");

    SplitDataset s;
    s.name = d.name;

    std::set<std::string> label_set(d.target.begin(), d.target.end());
    s.class_labels.assign(label_set.begin(), label_set.end());
    s.n_classes = s.class_labels.size();
    std::map<std::string, int> class_of;
    for (size_t c = 0; c < s.class_labels.size(); ++c)
        class_of[s.class_labels[c]] = static_cast<int>(c);

    std::vector<int> y(d.n_rows);
    std::vector<long> class_count(s.n_classes, 0);
    for (size_t r = 0; r < d.n_rows; ++r) {
        y[r] = class_of.at(d.target[r]);
        ++class_count[static_cast<size_t>(y[r])];
    }
    for (size_t c = 0; c < s.n_classes; ++c)
        if (class_count[c] < 3)
            throw IngestionError("class '" + s.class_labels[c] +
                                 "' has fewer than 3 instances");

    for (const auto& col : d.features) {
        if (col.kind == ColumnKind::Numeric) {
            s.encoded_columns.push_back({col.name, "", true});
        } else {
            std::set<std::string> levels;
            for (const auto& cell : col.text) levels.insert(*cell);
            for (const auto& level : levels)
                s.encoded_columns.push_back({col.name, level, false});
        }
    }

    Matrix x(d.n_rows, s.encoded_columns.size());
    {
        size_t c = 0;
        for (const auto& col : d.features) {
            if (col.kind == ColumnKind::Numeric) {
                for (size_t r = 0; r < d.n_rows; ++r) x(r, c) = *col.numeric[r];
                ++c;
            } else {
                size_t first = c;
                while (c < s.encoded_columns.size() &&
                       s.encoded_columns[c].source == col.name)
                    ++c;
                for (size_t r = 0; r < d.n_rows; ++r) {
                    for (size_t k = first; k < c; ++k)
                        if (s.encoded_columns[k].level == *col.text[r]) {
                            x(r, k) = 1.0;
                            break;
                        }
                }
            }
        }
    }

    // Stratified shuffle: per class, floor-20% test, floor-20% val, rest train.
    Rng rng(seed);
    std::vector<size_t> train_idx, val_idx, test_idx;
    for (size_t c = 0; c < s.n_classes; ++c) {
        std::vector<size_t> rows;
        for (size_t r = 0; r < d.n_rows; ++r)
            if (y[r] == static_cast<int>(c)) rows.push_back(r);
        const auto perm = rng.permutation(rows.size());
        const size_t n_hold = rows.size() / 5;
        for (size_t i = 0; i < rows.size(); ++i) {
            size_t row = rows[perm[i]];
            if (i < n_hold)
                test_idx.push_back(row);
            else if (i < 2 * n_hold)
                val_idx.push_back(row);
            else
                train_idx.push_back(row);
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    s.raw_train_ = take_rows(x, train_idx);
    s.raw_val_ = take_rows(x, val_idx);
    s.raw_test_ = take_rows(x, test_idx);
    s.y_train = take_labels(y, train_idx);
    s.y_val = take_labels(y, val_idx);
    s.y_test_ = take_labels(y, test_idx);

    apply_standardization(s, s.x_test_, s.raw_train_, s.raw_val_, s.raw_test_);

    std::vector<long> train_counts(s.n_classes, 0);
    for (int cls : s.y_train) ++train_counts[static_cast<size_t>(cls)];
    s.class_weights = weights_from_counts(train_counts);
    return s;
}

SplitDataset merge_train_val(const SplitDataset& s) {
    SplitDataset out;
    out.name = s.name;
    out.class_labels = s.class_labels;
    out.n_classes = s.n_classes;
    out.encoded_columns = s.encoded_columns;
    out.test_reads_ = s.test_reads_;

    Matrix merged(s.raw_train_.rows + s.raw_val_.rows, s.raw_train_.cols);
    for (size_t r = 0; r < s.raw_train_.rows; ++r)
        for (size_t c = 0; c < merged.cols; ++c) merged(r, c) = s.raw_train_(r, c);
    for (size_t r = 0; r < s.raw_val_.rows; ++r)
        for (size_t c = 0; c < merged.cols; ++c)
            merged(s.raw_train_.rows + r, c) = s.raw_val_(r, c);

    out.raw_train_ = std::move(merged);
    out.raw_val_ = Matrix(0, s.raw_train_.cols);
    out.raw_test_ = s.raw_test_;
    out.y_train = s.y_train;
    out.y_train.insert(out.y_train.end(), s.y_val.begin(), s.y_val.end());
    out.y_val.clear();
    out.y_test_ = s.y_test_;

    apply_standardization(out, out.x_test_, out.raw_train_, out.raw_val_, out.raw_test_);

    std::vector<long> train_counts(out.n_classes, 0);
    for (int cls : out.y_train) ++train_counts[static_cast<size_t>(cls)];
    out.class_weights = weights_from_counts(train_counts);
    return out;
}

} // namespace cocktail
