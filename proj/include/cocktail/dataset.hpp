#ifndef COCKTAIL_DATASET_HPP
#define COCKTAIL_DATASET_HPP

#include "cocktail/matrix.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cocktail {

enum class ColumnKind { Numeric, Categorical };

struct RawColumn {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::optional<double>> numeric;     // one cell per row when Numeric
    std::vector<std::optional<std::string>> text;   // one cell per row when Categorical
};

struct RawDataset {
    std::string name;
    std::string target_name;
    std::vector<RawColumn> features; // file order
    std::vector<std::string> target; // one label per row, never missing
    size_t n_rows = 0;

    bool has_missing() const;
};

// CSV: UTF-8, first row header, comma delimiter, double-quote escaping,
// empty string = missing cell. Metadata sidecar: JSON object with "target"
// (column name) and "columns" (list of {"name","kind"}), kind in
// {"numeric","categorical"}; the target must be declared categorical.
RawDataset load_csv(const std::string& csv_path, const std::string& meta_path);

// Most-frequent-value imputation per column; ties break to the smallest
// value (numeric order / lexicographic). Throws IngestionError on a column
// with no observed value at all.
RawDataset impute(const RawDataset& d);

struct EncodedColumn {
    std::string source;        // original feature column
    std::string level;         // one-hot level; empty for numeric columns
    bool standardized = false; // true exactly for numeric columns
};

// The train/val half of a split, handed to search and training so test data
// stays out of reach by construction.
struct TrainValView {
    const Matrix* x_train = nullptr;
    const std::vector<int>* y_train = nullptr;
    const Matrix* x_val = nullptr;
    const std::vector<int>* y_val = nullptr;
    const std::vector<double>* class_weights = nullptr;
    size_t n_classes = 0;
};

class SplitDataset {
public:
    std::string name;
    Matrix x_train, x_val; // standardized
    std::vector<int> y_train, y_val;
    std::vector<double> class_weights;      // mean 1 over classes
    std::vector<std::string> class_labels;  // sorted; index = class id
    size_t n_classes = 0;
    std::vector<EncodedColumn> encoded_columns;
    std::vector<double> feature_means, feature_stds; // train stats; 0/1 for one-hot

    // Test-partition reads go through these accessors so runs can prove the
    // search phase never touched test data.
    const Matrix& x_test() const;
    const std::vector<int>& y_test() const;
    long test_access_count() const;
    size_t n_test() const { return x_test_.rows; } // size only, not content

    TrainValView train_val_view() const;

private:
    Matrix x_test_;
    std::vector<int> y_test_;
    Matrix raw_train_, raw_val_, raw_test_; // encoded, pre-standardization
    std::shared_ptr<std::atomic<long>> test_reads_ =
        std::make_shared<std::atomic<long>>(0);

    friend SplitDataset encode_and_split(const RawDataset& d, uint64_t seed);
    friend SplitDataset merge_train_val(const SplitDataset& s);
};

// One-hot encodes categoricals (levels from the full dataset, sorted),
// stratified-shuffles rows into 60/20/20 train/val/test (per class: floor-20%
// test, floor-20% val, remainder train), standardizes numeric columns with
// train-split mean and population std (std < 1e-12 zeroes the column), and
// computes class weights w_c = n_train / (n_classes * n_train_c).
SplitDataset encode_and_split(const RawDataset& d, uint64_t seed);

// Train := train ∪ val (val becomes empty); standardization statistics and
// class weights recomputed on the merged partition; raw test content kept.
SplitDataset merge_train_val(const SplitDataset& s);

} // namespace cocktail

#endif
