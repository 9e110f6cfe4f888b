#pragma once

/// @file linops.hpp
/// Matrix-free linear operators used for the forward operators H_i and the
/// motion operators M_i.
///
/// Operators expose only products with vectors and with blocks of vectors.
/// Dense materialization is confined to `oracle::to_dense`, which refuses
/// anything beyond test-sized operators.

#include "dyntomo/core.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace dyntomo {

/// One (row, col, value) entry used to assemble a SparseMatrix.
struct Triplet {
    Index row;
    Index col;
    double value;
};

/// Compressed sparse row storage.
///
/// Invariants: column indices strictly increase within a row, all indices are
/// in range, and no stored value is exactly zero.
class SparseMatrix {
public:
    SparseMatrix() : row_offsets_(1, 0) {}

    SparseMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
                 std::vector<Index> col_indices, std::vector<double> values)
        : rows_(rows), cols_(cols), row_offsets_(std::move(row_offsets)),
          col_indices_(std::move(col_indices)), values_(std::move(values)) {
        validate();
    }

    /// Assembles a matrix from unordered triplets. Duplicates are summed and
    /// entries that end up exactly zero are dropped.
    static SparseMatrix from_triplets(Index rows, Index cols, std::vector<Triplet> entries) {
        for (const auto& t : entries) {
            require_shape(t.row >= 0 && t.row < rows && t.col >= 0 && t.col < cols,
                          "SparseMatrix: triplet index out of range");
        }
        std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        std::vector<Index> offsets(static_cast<std::size_t>(rows) + 1, 0);
        std::vector<Index> cols_out;
        std::vector<double> vals_out;
        cols_out.reserve(entries.size());
        vals_out.reserve(entries.size());
        std::size_t k = 0;
        for (Index r = 0; r < rows; ++r) {
            while (k < entries.size() && entries[k].row == r) {
                const Index c = entries[k].col;
                double sum = 0.0;
                while (k < entries.size() && entries[k].row == r && entries[k].col == c) {
                    sum += entries[k].value;
                    ++k;
                }
                if (sum != 0.0) {
                    cols_out.push_back(c);
                    vals_out.push_back(sum);
                }
            }
            offsets[static_cast<std::size_t>(r) + 1] = static_cast<Index>(cols_out.size());
        }
        return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals_out));
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index nonzeros() const { return static_cast<Index>(values_.size()); }

    const std::vector<Index>& row_offsets() const { return row_offsets_; }
    const std::vector<Index>& col_indices() const { return col_indices_; }
    const std::vector<double>& values() const { return values_; }

    Index row_nonzeros(Index r) const {
        return row_offsets_[static_cast<std::size_t>(r) + 1] - row_offsets_[static_cast<std::size_t>(r)];
    }

private:
    void validate() const {
        require_shape(rows_ >= 0 && cols_ >= 0, "SparseMatrix: negative dimension");
        require_shape(row_offsets_.size() == static_cast<std::size_t>(rows_) + 1,
                      "SparseMatrix: row offset array has wrong length");
        require_shape(col_indices_.size() == values_.size(), "SparseMatrix: index/value length mismatch");
        require_shape(row_offsets_.front() == 0 &&
                          row_offsets_.back() == static_cast<Index>(values_.size()),
                      "SparseMatrix: row offsets do not span the value array");
        for (Index r = 0; r < rows_; ++r) {
            const auto b = row_offsets_[static_cast<std::size_t>(r)];
            const auto e = row_offsets_[static_cast<std::size_t>(r) + 1];
            require_shape(b <= e, "SparseMatrix: row offsets decrease");
            for (Index k = b; k < e; ++k) {
                const auto c = col_indices_[static_cast<std::size_t>(k)];
                require_shape(c >= 0 && c < cols_, "SparseMatrix: column index out of range");
                require_shape(k == b || col_indices_[static_cast<std::size_t>(k) - 1] < c,
                              "SparseMatrix: column indices not strictly increasing");
                require_shape(values_[static_cast<std::size_t>(k)] != 0.0,
                              "SparseMatrix: explicit zero stored");
            }
        }
    }

    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<Index> row_offsets_;
    std::vector<Index> col_indices_;
    std::vector<double> values_;
};

class LinearOperator;

namespace detail {

struct OperatorBase {
    virtual ~OperatorBase() = default;
    virtual Index rows() const = 0;
    virtual Index cols() const = 0;
    /// out = rows [begin, end) of (A X). `out` is pre-sized (end - begin) x X.cols().
    virtual void apply_rows(const Eigen::Ref<const Matrix>& x, Index begin, Index end,
                            Eigen::Ref<Matrix> out) const = 0;
    /// out = Aᵀ y for a single vector.
    virtual void apply_transpose(const Eigen::Ref<const Vector>& y, Eigen::Ref<Vector> out) const = 0;
    /// Number of doubles held by the operator (index arrays counted as doubles).
    virtual std::size_t stored_doubles() const = 0;
};

struct IdentityOp final : OperatorBase {
    explicit IdentityOp(Index n) : n(n) {}
    Index rows() const override { return n; }
    Index cols() const override { return n; }
    void apply_rows(const Eigen::Ref<const Matrix>& x, Index begin, Index end,
                    Eigen::Ref<Matrix> out) const override {
        out = x.middleRows(begin, end - begin);
    }
    void apply_transpose(const Eigen::Ref<const Vector>& y, Eigen::Ref<Vector> out) const override {
        out = y;
    }
    std::size_t stored_doubles() const override { return 0; }
    Index n;
};

struct SparseOp final : OperatorBase {
    explicit SparseOp(SparseMatrix m) : m(std::move(m)) {}
    Index rows() const override { return m.rows(); }
    Index cols() const override { return m.cols(); }

    void apply_rows(const Eigen::Ref<const Matrix>& x, Index begin, Index end,
                    Eigen::Ref<Matrix> out) const override {
        const auto& off = m.row_offsets();
        const auto& ci = m.col_indices();
        const auto& v = m.values();
        const Index ncol = x.cols();
        for (Index c = 0; c < ncol; ++c) {
            for (Index r = begin; r < end; ++r) {
                double acc = 0.0;
                for (Index k = off[static_cast<std::size_t>(r)]; k < off[static_cast<std::size_t>(r) + 1]; ++k) {
                    acc += v[static_cast<std::size_t>(k)] * x(ci[static_cast<std::size_t>(k)], c);
                }
                out(r - begin, c) = acc;
            }
        }
    }

    void apply_transpose(const Eigen::Ref<const Vector>& y, Eigen::Ref<Vector> out) const override {
        const auto& off = m.row_offsets();
        const auto& ci = m.col_indices();
        const auto& v = m.values();
        out.setZero();
        for (Index r = 0; r < m.rows(); ++r) {
            const double yr = y(r);
            if (yr == 0.0) continue;
            for (Index k = off[static_cast<std::size_t>(r)]; k < off[static_cast<std::size_t>(r) + 1]; ++k) {
                out(ci[static_cast<std::size_t>(k)]) += v[static_cast<std::size_t>(k)] * yr;
            }
        }
    }

    std::size_t stored_doubles() const override {
        return static_cast<std::size_t>(2 * m.nonzeros() + m.rows() + 1);
    }

    SparseMatrix m;
};

/// u (vᵀ x) / denom
struct Rank1Op final : OperatorBase {
    Rank1Op(Vector u, Vector v, double denom) : u(std::move(u)), v(std::move(v)), denom(denom) {}
    Index rows() const override { return u.size(); }
    Index cols() const override { return v.size(); }

    void apply_rows(const Eigen::Ref<const Matrix>& x, Index begin, Index end,
                    Eigen::Ref<Matrix> out) const override {
        for (Index c = 0; c < x.cols(); ++c) {
            const double coef = v.dot(x.col(c)) / denom;
            out.col(c) = u.segment(begin, end - begin) * coef;
        }
    }

    void apply_transpose(const Eigen::Ref<const Vector>& y, Eigen::Ref<Vector> out) const override {
        const double coef = u.dot(y) / denom;
        out = v * coef;
    }

    std::size_t stored_doubles() const override { return static_cast<std::size_t>(u.size() + v.size() + 1); }

    Vector u;
    Vector v;
    double denom;
};

/// Sum over non-overlapping z_x × z_y patches of S_j u^j (S_j v^j)ᵀ / d_j.
///
/// A patch whose denominator is zero (zero patch of v with no regularization)
/// maps to zero, matching the pseudo-inverse of a zero vector.
struct PatchRank1Op final : OperatorBase {
    PatchRank1Op(GridShape grid, Index zx, Index zy, Vector u, Vector v, Vector inv_denom)
        : grid(grid), zx(zx), zy(zy), u(std::move(u)), v(std::move(v)), inv_denom(std::move(inv_denom)) {}

    Index rows() const override { return grid.size(); }
    Index cols() const override { return grid.size(); }

    Index patches_per_row() const { return grid.cols / zy; }
    Index patch_of(Index pixel) const {
        const Index i = pixel / grid.cols;
        const Index j = pixel % grid.cols;
        return (i / zx) * patches_per_row() + j / zy;
    }

    /// Σ_{p ∈ patch} a_p b_p, visiting the patch row-major.
    template <class A, class B>
    double patch_dot(Index patch, const A& a, const B& b) const {
        const Index pi = patch / patches_per_row();
        const Index pj = patch % patches_per_row();
        double acc = 0.0;
        for (Index di = 0; di < zx; ++di) {
            const Index row0 = grid.index(pi * zx + di, pj * zy);
            for (Index dj = 0; dj < zy; ++dj) acc += a(row0 + dj) * b(row0 + dj);
        }
        return acc;
    }

    void apply_rows(const Eigen::Ref<const Matrix>& x, Index begin, Index end,
                    Eigen::Ref<Matrix> out) const override {
        std::vector<double> coef(static_cast<std::size_t>(inv_denom.size()));
        std::vector<char> ready(coef.size());
        for (Index c = 0; c < x.cols(); ++c) {
            std::fill(ready.begin(), ready.end(), 0);
            const auto col = x.col(c);
            for (Index p = begin; p < end; ++p) {
                const auto j = static_cast<std::size_t>(patch_of(p));
                if (!ready[j]) {
                    coef[j] = inv_denom(static_cast<Index>(j)) == 0.0
                                  ? 0.0
                                  : patch_dot(static_cast<Index>(j), v, col) * inv_denom(static_cast<Index>(j));
                    ready[j] = 1;
                }
                out(p - begin, c) = u(p) * coef[j];
            }
        }
    }

    void apply_transpose(const Eigen::Ref<const Vector>& y, Eigen::Ref<Vector> out) const override {
        const Index n_patches = inv_denom.size();
        for (Index j = 0; j < n_patches; ++j) {
            const double coef = inv_denom(j) == 0.0 ? 0.0 : patch_dot(j, u, y) * inv_denom(j);
            const Index pi = j / patches_per_row();
            const Index pj = j % patches_per_row();
            for (Index di = 0; di < zx; ++di) {
                const Index row0 = grid.index(pi * zx + di, pj * zy);
                for (Index dj = 0; dj < zy; ++dj) out(row0 + dj) = v(row0 + dj) * coef;
            }
        }
    }

    std::size_t stored_doubles() const override {
        return static_cast<std::size_t>(u.size() + v.size() + inv_denom.size());
    }

    GridShape grid;
    Index zx;
    Index zy;
    Vector u;
    Vector v;
    Vector inv_denom;
};

struct ScaledOp final : OperatorBase {
    ScaledOp(std::shared_ptr<const OperatorBase> inner, double scale) : inner(std::move(inner)), scale(scale) {}
    Index rows() const override { return inner->rows(); }
    Index cols() const override { return inner->cols(); }
    void apply_rows(const Eigen::Ref<const Matrix>& x, Index begin, Index end,
                    Eigen::Ref<Matrix> out) const override {
        inner->apply_rows(x, begin, end, out);
        out *= scale;
    }
    void apply_transpose(const Eigen::Ref<const Vector>& y, Eigen::Ref<Vector> out) const override {
        inner->apply_transpose(y, out);
        out *= scale;
    }
    std::size_t stored_doubles() const override { return inner->stored_doubles() + 1; }

    std::shared_ptr<const OperatorBase> inner;
    double scale;
};

}  // namespace detail

/// Immutable, cheaply copyable handle to a linear operator.
class LinearOperator {
public:
    enum class Kind { SparseCSR, Rank1, PatchRank1, Warp, Identity, Scaled };

    LinearOperator() : LinearOperator(identity(0)) {}

    static LinearOperator identity(Index n) {
        return LinearOperator(Kind::Identity, std::make_shared<detail::IdentityOp>(n));
    }

    static LinearOperator sparse(SparseMatrix m) {
        return LinearOperator(Kind::SparseCSR, std::make_shared<detail::SparseOp>(std::move(m)));
    }

    /// Sparse interpolation operator; same storage as SparseCSR, tagged for inspection.
    static LinearOperator warp(SparseMatrix m) {
        return LinearOperator(Kind::Warp, std::make_shared<detail::SparseOp>(std::move(m)));
    }

    /// u vᵀ / denom.
    static LinearOperator rank1(Vector u, Vector v, double denom) {
        if (!(denom > 0.0)) throw NumericError("rank-1 operator: denominator must be positive");
        return LinearOperator(Kind::Rank1, std::make_shared<detail::Rank1Op>(std::move(u), std::move(v), denom));
    }

    /// Σ_j S_j u^j (S_j v^j)ᵀ / (‖S_j v^j‖² + zeta) over z_x × z_y patches of `grid`.
    static LinearOperator patch_rank1(GridShape grid, Index zx, Index zy, Vector u, Vector v, double zeta) {
        require_shape(u.size() == grid.size() && v.size() == grid.size(),
                      "patch rank-1 operator: vectors do not match the grid");
        if (zx <= 0 || grid.rows % zx != 0) throw ConfigError("z_x", "patch height must divide n_x");
        if (zy <= 0 || grid.cols % zy != 0) throw ConfigError("z_y", "patch width must divide n_y");
        if (zeta < 0.0) throw ConfigError("zeta", "must be nonnegative");
        const Index n_patches = (grid.rows / zx) * (grid.cols / zy);
        auto op = std::make_shared<detail::PatchRank1Op>(grid, zx, zy, std::move(u), std::move(v),
                                                         Vector::Zero(n_patches));
        for (Index j = 0; j < n_patches; ++j) {
            const double d = op->patch_dot(j, op->v, op->v) + zeta;
            op->inv_denom(j) = d > 0.0 ? 1.0 / d : 0.0;
        }
        return LinearOperator(Kind::PatchRank1, std::move(op));
    }

    static LinearOperator scaled(const LinearOperator& inner, double scale) {
        return LinearOperator(Kind::Scaled, std::make_shared<detail::ScaledOp>(inner.impl_, scale));
    }

    Index rows() const { return impl_->rows(); }
    Index cols() const { return impl_->cols(); }
    Kind kind() const { return kind_; }

    /// op · x
    Vector apply(const Eigen::Ref<const Vector>& x) const {
        require_shape(x.size() == cols(), "apply: vector length " + std::to_string(x.size()) +
                                              " does not match operator columns " + std::to_string(cols()));
        Matrix out(rows(), 1);
        impl_->apply_rows(x, 0, rows(), out);
        return out.col(0);
    }

    /// opᵀ · y
    Vector apply_transpose(const Eigen::Ref<const Vector>& y) const {
        require_shape(y.size() == rows(), "apply_transpose: vector length " + std::to_string(y.size()) +
                                              " does not match operator rows " + std::to_string(rows()));
        Vector out(cols());
        impl_->apply_transpose(y, out);
        return out;
    }

    /// op · X, column by column.
    Matrix apply_block(const Eigen::Ref<const Matrix>& x) const { return apply_rows(x, 0, rows()); }

    /// Rows [begin, end) of op · X. Lets callers stream n_s × r products in panels.
    Matrix apply_rows(const Eigen::Ref<const Matrix>& x, Index begin, Index end) const {
        require_shape(x.rows() == cols(), "apply_block: block has " + std::to_string(x.rows()) +
                                              " rows, operator has " + std::to_string(cols()) + " columns");
        require_shape(0 <= begin && begin <= end && end <= rows(), "apply_rows: row range out of bounds");
        Matrix out(end - begin, x.cols());
        impl_->apply_rows(x, begin, end, out);
        return out;
    }

    /// Backing CSR matrix for SparseCSR and Warp operators, nullptr otherwise.
    const SparseMatrix* sparse_matrix() const {
        if (kind_ != Kind::SparseCSR && kind_ != Kind::Warp) return nullptr;
        return &static_cast<const detail::SparseOp&>(*impl_).m;
    }

    std::size_t stored_doubles() const { return impl_->stored_doubles(); }

private:
    LinearOperator(Kind kind, std::shared_ptr<const detail::OperatorBase> impl)
        : kind_(kind), impl_(std::move(impl)) {}

    Kind kind_;
    std::shared_ptr<const detail::OperatorBase> impl_;
};

inline Vector apply(const LinearOperator& op, const Eigen::Ref<const Vector>& x) { return op.apply(x); }

inline Vector apply_transpose(const LinearOperator& op, const Eigen::Ref<const Vector>& y) {
    return op.apply_transpose(y);
}

inline Matrix apply_block(const LinearOperator& op, const Eigen::Ref<const Matrix>& x) {
    return op.apply_block(x);
}

/// Calls fn(begin, panel) for consecutive row panels of op · X, panel height
/// at most `panel_rows`. Only one panel is alive at a time.
template <class Fn>
void for_each_row_panel(const LinearOperator& op, const Eigen::Ref<const Matrix>& x, Index panel_rows, Fn&& fn) {
    require_shape(panel_rows > 0, "for_each_row_panel: panel height must be positive");
    for (Index b = 0; b < op.rows(); b += panel_rows) {
        const Index e = std::min(op.rows(), b + panel_rows);
        const Matrix panel = op.apply_rows(x, b, e);
        fn(b, panel);
    }
}

namespace oracle {

/// Dense copy of an operator, for tests and diagnostics only.
inline Matrix to_dense(const LinearOperator& op) {
    constexpr Index kMaxEntries = Index{1} << 24;
    if (op.rows() * op.cols() > kMaxEntries) {
        throw ShapeError("to_dense: operator too large to materialize (" + std::to_string(op.rows()) + " x " +
                         std::to_string(op.cols()) + ")");
    }
    return op.apply_block(Matrix::Identity(op.cols(), op.cols()));
}

}  // namespace oracle

}  // namespace dyntomo
