#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace lmmsel {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Sorted list of zero-based column/group indices.
using IndexSet = std::vector<int>;

struct SubjectBlock {
    std::string id;
    Vector y;   // n_i
    Matrix X;   // n_i x d
    Matrix Z;   // n_i x q

    int rows() const { return static_cast<int>(y.size()); }
};

/// Longitudinal data: one block of (y_i, X_i, Z_i) per subject.
///
/// Immutable after construction. The constructor enforces N >= 1, n_i >= 1
/// and identical column counts across subjects.
class LongitudinalDataset {
public:
    LongitudinalDataset(std::vector<SubjectBlock> subjects,
                        std::vector<std::string> fixed_names,
                        std::vector<std::string> random_names);

    const std::vector<SubjectBlock>& subjects() const { return subjects_; }
    const SubjectBlock& subject(int i) const { return subjects_[i]; }
    const std::vector<std::string>& fixed_names() const { return fixed_names_; }
    const std::vector<std::string>& random_names() const { return random_names_; }

    int num_subjects() const { return static_cast<int>(subjects_.size()); }
    int total_rows() const { return total_rows_; }
    int fixed_dim() const { return static_cast<int>(fixed_names_.size()); }
    int random_dim() const { return static_cast<int>(random_names_.size()); }

    // First stacked row of subject i.
    int row_offset(int i) const { return offsets_[i]; }
    int max_rows() const;
    int min_rows() const;
    // m_n / m~_n; large values mean unbalanced subjects.
    double imbalance_ratio() const;

    // Derived datasets sharing everything but the named piece.
    LongitudinalDataset with_response(const Vector& y) const;
    LongitudinalDataset with_fixed_columns(const IndexSet& cols) const;
    LongitudinalDataset with_random_columns(const IndexSet& cols) const;

private:
    std::vector<SubjectBlock> subjects_;
    std::vector<std::string> fixed_names_;
    std::vector<std::string> random_names_;
    std::vector<int> offsets_;
    int total_rows_ = 0;
};

struct StandardizationRecord {
    Vector scale;          // column j was divided by scale(j)
    bool applied = false;  // false when every factor is exactly 1
};

// Rescales stacked X columns to Euclidean norm sqrt(n). Z is left alone.
std::pair<LongitudinalDataset, StandardizationRecord>
standardize(const LongitudinalDataset& ds);

/// Block-diagonal random-effects design diag(Z_1, ..., Z_N).
///
/// Column (i*q + k) belongs to subject i, random effect k.
class BlockDiagonal {
public:
    explicit BlockDiagonal(std::vector<Matrix> blocks);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    const Matrix& block(int i) const { return blocks_[i]; }
    int row_offset(int i) const { return row_offsets_[i]; }
    int col_offset(int i) const { return col_offsets_[i]; }

    Vector multiply(const Vector& gamma) const;          // Z * gamma
    Vector transpose_multiply(const Vector& r) const;    // Z^T * r
    Matrix transpose_multiply(const Matrix& R) const;    // Z^T * R
    Matrix dense() const;

private:
    std::vector<Matrix> blocks_;
    std::vector<int> row_offsets_;
    std::vector<int> col_offsets_;
    int rows_ = 0;
    int cols_ = 0;
};

struct StackedModel {
    Vector y;
    Matrix X;
    BlockDiagonal Z;
};

StackedModel stack(const LongitudinalDataset& ds);

// Inverse of stack(); `like` supplies subject ids, row counts and names.
LongitudinalDataset unstack(const StackedModel& model, const LongitudinalDataset& like);

// Subject-major index of coefficient (subject, effect) in gamma.
inline int gamma_index(int subject, int effect, int q) { return subject * q + effect; }

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
    std::string subject_col;
    std::string response_col;
    std::vector<std::string> fixed_cols;
    std::vector<std::string> random_cols;
    bool add_fixed_intercept = false;
    bool add_random_intercept = false;
};

// Rows of one subject need not be contiguous; subjects keep first-appearance
// order and rows keep file order within a subject.
LongitudinalDataset load_csv(const std::string& path, const CsvSchema& schema);

// Writes subject, response, fixed and random columns. Returns a schema that
// reloads the file into an equal dataset.
CsvSchema write_csv(const LongitudinalDataset& ds, const std::string& path);

// Plain numeric matrix, one row per line; a non-numeric first line is
// treated as a header and skipped.
Matrix load_matrix_csv(const std::string& path);

} // namespace lmmsel
