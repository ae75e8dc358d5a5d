#include "lmmsel/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lmmsel/error.hpp"

namespace lmmsel {

LongitudinalDataset::LongitudinalDataset(std::vector<SubjectBlock> subjects,
                                         std::vector<std::string> fixed_names,
                                         std::vector<std::string> random_names)
    : subjects_(std::move(subjects)),
      fixed_names_(std::move(fixed_names)),
      random_names_(std::move(random_names)) {
    if (subjects_.empty()) {
        throw DimensionError("dataset needs at least one subject");
    }
    const auto d = static_cast<Eigen::Index>(fixed_names_.size());
    const auto q = static_cast<Eigen::Index>(random_names_.size());
    offsets_.reserve(subjects_.size());
    for (const auto& s : subjects_) {
        if (s.y.size() < 1) {
            throw DimensionError("subject '" + s.id + "' has no observations");
        }
        if (s.X.rows() != s.y.size() || s.Z.rows() != s.y.size()) {
            throw DimensionError("subject '" + s.id + "': row counts of y, X, Z disagree");
        }
        if (s.X.cols() != d || s.Z.cols() != q) {
            throw DimensionError("subject '" + s.id + "': column counts do not match names");
        }
        offsets_.push_back(total_rows_);
        total_rows_ += s.rows();
    }
}

int LongitudinalDataset::max_rows() const {
    int m = 0;
    for (const auto& s : subjects_) m = std::max(m, s.rows());
    return m;
}

int LongitudinalDataset::min_rows() const {
    int m = subjects_.front().rows();
    for (const auto& s : subjects_) m = std::min(m, s.rows());
    return m;
}

double LongitudinalDataset::imbalance_ratio() const {
    return static_cast<double>(max_rows()) / static_cast<double>(min_rows());
}

LongitudinalDataset LongitudinalDataset::with_response(const Vector& y) const {
    if (y.size() != total_rows_) throw DimensionError("response length mismatch");
    auto subjects = subjects_;
    for (int i = 0; i < num_subjects(); ++i) {
        subjects[i].y = y.segment(offsets_[i], subjects[i].rows());
    }
    return {std::move(subjects), fixed_names_, random_names_};
}

namespace {

Matrix select_columns(const Matrix& M, const IndexSet& cols) {
    Matrix out(M.rows(), static_cast<Eigen::Index>(cols.size()));
    for (size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = M.col(cols[j]);
    return out;
}

std::vector<std::string> select_names(const std::vector<std::string>& names, const IndexSet& cols) {
    std::vector<std::string> out;
    out.reserve(cols.size());
    for (int c : cols) out.push_back(names.at(static_cast<size_t>(c)));
    return out;
}

void check_columns(const IndexSet& cols, int limit) {
    for (int c : cols) {
        if (c < 0 || c >= limit) throw DimensionError("column index out of range");
    }
}

} // namespace

LongitudinalDataset LongitudinalDataset::with_fixed_columns(const IndexSet& cols) const {
    check_columns(cols, fixed_dim());
    auto subjects = subjects_;
    for (auto& s : subjects) s.X = select_columns(s.X, cols);
    return {std::move(subjects), select_names(fixed_names_, cols), random_names_};
}

LongitudinalDataset LongitudinalDataset::with_random_columns(const IndexSet& cols) const {
    check_columns(cols, random_dim());
    auto subjects = subjects_;
    for (auto& s : subjects) s.Z = select_columns(s.Z, cols);
    return {std::move(subjects), fixed_names_, select_names(random_names_, cols)};
}

std::pair<LongitudinalDataset, StandardizationRecord>
standardize(const LongitudinalDataset& ds) {
    const int d = ds.fixed_dim();
    Vector sq = Vector::Zero(d);
    for (const auto& s : ds.subjects()) sq += s.X.colwise().squaredNorm().transpose();

    const double root_n = std::sqrt(static_cast<double>(ds.total_rows()));
    StandardizationRecord rec;
    rec.scale.resize(d);
    for (int j = 0; j < d; ++j) {
        if (!(sq(j) > 0.0)) {
            throw DegenerateColumnError("fixed-effect column '" + ds.fixed_names()[j] +
                                        "' is identically zero");
        }
        double factor = std::sqrt(sq(j)) / root_n;
        // Columns already at norm sqrt(n) keep factor exactly 1 so that
        // standardization is idempotent.
        if (std::abs(factor - 1.0) <= 1e-13) factor = 1.0;
        rec.scale(j) = factor;
        if (factor != 1.0) rec.applied = true;
    }

    auto subjects = ds.subjects();
    for (auto& s : subjects) {
        for (int j = 0; j < d; ++j) s.X.col(j) /= rec.scale(j);
    }
    return {LongitudinalDataset(std::move(subjects), ds.fixed_names(), ds.random_names()),
            std::move(rec)};
}

// ---------------------------------------------------------------------------

BlockDiagonal::BlockDiagonal(std::vector<Matrix> blocks) : blocks_(std::move(blocks)) {
    row_offsets_.reserve(blocks_.size());
    col_offsets_.reserve(blocks_.size());
    for (const auto& b : blocks_) {
        row_offsets_.push_back(rows_);
        col_offsets_.push_back(cols_);
        rows_ += static_cast<int>(b.rows());
        cols_ += static_cast<int>(b.cols());
    }
}

Vector BlockDiagonal::multiply(const Vector& gamma) const {
    if (gamma.size() != cols_) throw DimensionError("Z * gamma: length mismatch");
    Vector out(rows_);
    for (int i = 0; i < num_blocks(); ++i) {
        const auto& b = blocks_[i];
        out.segment(row_offsets_[i], b.rows()).noalias() = b * gamma.segment(col_offsets_[i], b.cols());
    }
    return out;
}

Vector BlockDiagonal::transpose_multiply(const Vector& r) const {
    if (r.size() != rows_) throw DimensionError("Z^T * r: length mismatch");
    Vector out(cols_);
    for (int i = 0; i < num_blocks(); ++i) {
        const auto& b = blocks_[i];
        out.segment(col_offsets_[i], b.cols()).noalias() = b.transpose() * r.segment(row_offsets_[i], b.rows());
    }
    return out;
}

Matrix BlockDiagonal::transpose_multiply(const Matrix& R) const {
    if (R.rows() != rows_) throw DimensionError("Z^T * R: row mismatch");
    Matrix out(cols_, R.cols());
    for (int i = 0; i < num_blocks(); ++i) {
        const auto& b = blocks_[i];
        out.middleRows(col_offsets_[i], b.cols()).noalias() =
            b.transpose() * R.middleRows(row_offsets_[i], b.rows());
    }
    return out;
}

Matrix BlockDiagonal::dense() const {
    Matrix out = Matrix::Zero(rows_, cols_);
    for (int i = 0; i < num_blocks(); ++i) {
        const auto& b = blocks_[i];
        out.block(row_offsets_[i], col_offsets_[i], b.rows(), b.cols()) = b;
    }
    return out;
}

StackedModel stack(const LongitudinalDataset& ds) {
    const int n = ds.total_rows();
    Vector y(n);
    Matrix X(n, ds.fixed_dim());
    std::vector<Matrix> blocks;
    blocks.reserve(static_cast<size_t>(ds.num_subjects()));
    for (int i = 0; i < ds.num_subjects(); ++i) {
        const auto& s = ds.subject(i);
        y.segment(ds.row_offset(i), s.rows()) = s.y;
        X.middleRows(ds.row_offset(i), s.rows()) = s.X;
        blocks.push_back(s.Z);
    }
    return {std::move(y), std::move(X), BlockDiagonal(std::move(blocks))};
}

LongitudinalDataset unstack(const StackedModel& model, const LongitudinalDataset& like) {
    if (model.y.size() != like.total_rows() || model.X.rows() != like.total_rows() ||
        model.Z.num_blocks() != like.num_subjects()) {
        throw DimensionError("unstack: model does not match template dataset");
    }
    std::vector<SubjectBlock> subjects;
    subjects.reserve(static_cast<size_t>(like.num_subjects()));
    for (int i = 0; i < like.num_subjects(); ++i) {
        const int off = like.row_offset(i);
        const int rows = like.subject(i).rows();
        subjects.push_back({like.subject(i).id, model.y.segment(off, rows),
                            model.X.middleRows(off, rows), model.Z.block(i)});
    }
    return {std::move(subjects), like.fixed_names(), like.random_names()};
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\"");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\"");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_number(const std::string& text, double& value) {
    if (text.empty()) return false;
    const char* begin = text.c_str();
    char* end = nullptr;
    errno = 0;
    value = std::strtod(begin, &end);
    return end == begin + text.size() && errno != ERANGE && std::isfinite(value);
}

} // namespace

LongitudinalDataset load_csv(const std::string& path, const CsvSchema& schema) {
    if (schema.subject_col.empty()) throw SchemaError("schema names no subject-id column");
    if (schema.response_col.empty()) throw SchemaError("schema names no response column");
    if (schema.fixed_cols.empty() && !schema.add_fixed_intercept) {
        throw SchemaError("schema needs at least one fixed-effect column");
    }

    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("'" + path + "' is empty; a header row is required");
    const auto header = split_line(line);
    std::map<std::string, size_t> position;
    for (size_t j = 0; j < header.size(); ++j) position.emplace(header[j], j);

    auto locate = [&](const std::string& name) {
        auto it = position.find(name);
        if (it == position.end()) throw SchemaError("column '" + name + "' not found in header");
        return it->second;
    };
    const size_t subject_pos = locate(schema.subject_col);
    const size_t response_pos = locate(schema.response_col);
    std::vector<size_t> fixed_pos, random_pos;
    for (const auto& c : schema.fixed_cols) fixed_pos.push_back(locate(c));
    for (const auto& c : schema.random_cols) random_pos.push_back(locate(c));

    const int fi = schema.add_fixed_intercept ? 1 : 0;
    const int ri = schema.add_random_intercept ? 1 : 0;
    const int d = static_cast<int>(fixed_pos.size()) + fi;
    const int q = static_cast<int>(random_pos.size()) + ri;

    struct Rows {
        std::vector<double> y;
        std::vector<std::vector<double>> x, z;
    };
    std::vector<std::string> order;
    std::map<std::string, Rows> by_subject;

    long row = 0;  // 1-based data row (header excluded)
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto cells = split_line(line);
        if (cells.size() < header.size()) {
            throw ParseError("row " + std::to_string(row) + ": expected " +
                                 std::to_string(header.size()) + " cells, found " +
                                 std::to_string(cells.size()),
                             row);
        }
        auto number = [&](size_t pos) {
            double v = 0.0;
            if (!parse_number(cells[pos], v)) {
                throw ParseError("row " + std::to_string(row) + ", column '" + header[pos] +
                                     "': non-numeric value '" + cells[pos] + "'",
                                 row);
            }
            return v;
        };
        const std::string& id = cells[subject_pos];
        auto [it, inserted] = by_subject.try_emplace(id);
        if (inserted) order.push_back(id);
        Rows& r = it->second;
        r.y.push_back(number(response_pos));
        std::vector<double> x;
        x.reserve(static_cast<size_t>(d));
        if (fi) x.push_back(1.0);
        for (size_t p : fixed_pos) x.push_back(number(p));
        std::vector<double> z;
        z.reserve(static_cast<size_t>(q));
        if (ri) z.push_back(1.0);
        for (size_t p : random_pos) z.push_back(number(p));
        r.x.push_back(std::move(x));
        r.z.push_back(std::move(z));
    }
    if (order.empty()) throw SchemaError("'" + path + "' has no data rows");

    std::vector<SubjectBlock> subjects;
    subjects.reserve(order.size());
    for (const auto& id : order) {
        const Rows& r = by_subject.at(id);
        const auto m = static_cast<Eigen::Index>(r.y.size());
        SubjectBlock s{id, Vector(m), Matrix(m, d), Matrix(m, q)};
        for (Eigen::Index k = 0; k < m; ++k) {
            s.y(k) = r.y[static_cast<size_t>(k)];
            for (int j = 0; j < d; ++j) s.X(k, j) = r.x[static_cast<size_t>(k)][static_cast<size_t>(j)];
            for (int j = 0; j < q; ++j) s.Z(k, j) = r.z[static_cast<size_t>(k)][static_cast<size_t>(j)];
        }
        subjects.push_back(std::move(s));
    }

    std::vector<std::string> fixed_names, random_names;
    if (fi) fixed_names.emplace_back("(Intercept)");
    fixed_names.insert(fixed_names.end(), schema.fixed_cols.begin(), schema.fixed_cols.end());
    if (ri) random_names.emplace_back("(Intercept)");
    random_names.insert(random_names.end(), schema.random_cols.begin(), schema.random_cols.end());
    return {std::move(subjects), std::move(fixed_names), std::move(random_names)};
}

CsvSchema write_csv(const LongitudinalDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write '" + path + "'");

    std::set<std::string> used;
    auto unique = [&](std::string name) {
        std::string candidate = name;
        for (int k = 2; used.count(candidate); ++k) candidate = name + "_" + std::to_string(k);
        used.insert(candidate);
        return candidate;
    };
    CsvSchema schema;
    schema.subject_col = unique("subject");
    schema.response_col = unique("y");
    for (const auto& nm : ds.fixed_names()) schema.fixed_cols.push_back(unique(nm));
    for (const auto& nm : ds.random_names()) schema.random_cols.push_back(unique("z:" + nm));

    out << schema.subject_col << ',' << schema.response_col;
    for (const auto& c : schema.fixed_cols) out << ',' << c;
    for (const auto& c : schema.random_cols) out << ',' << c;
    out << '\n';

    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
    };
    for (const auto& s : ds.subjects()) {
        for (int k = 0; k < s.rows(); ++k) {
            out << s.id;
            put(s.y(k));
            for (Eigen::Index j = 0; j < s.X.cols(); ++j) put(s.X(k, j));
            for (Eigen::Index j = 0; j < s.Z.cols(); ++j) put(s.Z(k, j));
            out << '\n';
        }
    }
    return schema;
}

Matrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    long row = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto cells = split_line(line);
        std::vector<double> values;
        bool numeric = true;
        for (const auto& c : cells) {
            double v = 0.0;
            if (!parse_number(c, v)) {
                numeric = false;
                break;
            }
            values.push_back(v);
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;
            }
            throw ParseError("matrix file '" + path + "', line " + std::to_string(row) +
                                 ": non-numeric value",
                             row);
        }
        first = false;
        if (!rows.empty() && values.size() != rows.front().size()) {
            throw ParseError("matrix file '" + path + "': ragged rows", row);
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw SchemaError("matrix file '" + path + "' is empty");
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j)
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return M;
}

} // namespace lmmsel
