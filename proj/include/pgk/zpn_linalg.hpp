#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "pgk/scalars.hpp"

namespace pgk {

// ---------------------------------------------------------------------------
// Dense matrices over Z/p^n and the Smith machinery the cohomology assembly
// sits on. Z/p^n is a chain ring: every matrix is equivalent to a diagonal of
// p-powers, and any entry of minimal p-valuation can serve as a pivot because
// its unit part inverts. That keeps the elimination elementary — no Howell
// forms, no fraction-free tricks.
// ---------------------------------------------------------------------------

namespace detail {

// Barrett reduction for the hot elimination loops; moduli here are tiny
// (p^n for single-digit p), so one correction step suffices. p is odd, hence
// p^n never divides 2^64 and ~0/m is exactly floor(2^64/m).
struct Barrett {
    std::uint64_t m = 1, inv = 0;
    explicit Barrett(std::uint64_t mod) : m(mod), inv(~std::uint64_t{0} / mod) {
        if (mod < 2 || mod >= (std::uint64_t{1} << 31))
            throw ContextError("matrix modulus out of the supported range");
    }
    std::uint64_t reduce(std::uint64_t x) const {
        std::uint64_t q = static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(x) * inv) >> 64);
        std::uint64_t r = x - q * m;
        if (r >= m) r -= m;
        return r;
    }
    // a - f*b mod m, all inputs already reduced
    std::uint64_t submul(std::uint64_t a, std::uint64_t f, std::uint64_t b) const {
        return reduce(a + (m - f) * b);
    }
};

inline int val_p(std::uint64_t x, int p, int n) {
    if (x == 0) return n;
    int v = 0;
    while (x % static_cast<std::uint64_t>(p) == 0) {
        x /= static_cast<std::uint64_t>(p);
        ++v;
    }
    return v;
}

}  // namespace detail

struct ZpnMatrix {
    long rows = 0, cols = 0;
    std::uint64_t mod = 0;
    std::vector<std::uint64_t> a;  // row-major, entries in [0, mod)

    ZpnMatrix() = default;
    ZpnMatrix(long r, long c, std::uint64_t m)
        : rows(r), cols(c), mod(m), a(static_cast<std::size_t>(r) * c, 0) {}

    static ZpnMatrix identity(long d, std::uint64_t m) {
        ZpnMatrix I(d, d, m);
        for (long i = 0; i < d; ++i) I.at(i, i) = 1;
        return I;
    }

    std::uint64_t& at(long i, long j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    const std::uint64_t& at(long i, long j) const {
        return a[static_cast<std::size_t>(i) * cols + j];
    }

    bool is_zero() const {
        for (std::uint64_t x : a)
            if (x != 0) return false;
        return true;
    }

    bool operator==(const ZpnMatrix&) const = default;

    // Skips zero entries of *this: differential matrices are column-sparse and
    // this is where assembly products would otherwise go cubic.
    ZpnMatrix operator*(const ZpnMatrix& o) const {
        if (cols != o.rows || mod != o.mod)
            throw ContextError("matrix product shape/modulus mismatch");
        ZpnMatrix r(rows, o.cols, mod);
        detail::Barrett br(mod);
        for (long i = 0; i < rows; ++i)
            for (long k = 0; k < cols; ++k) {
                std::uint64_t e = at(i, k);
                if (e == 0) continue;
                const std::uint64_t* src = &o.a[static_cast<std::size_t>(k) * o.cols];
                std::uint64_t* dst = &r.a[static_cast<std::size_t>(i) * o.cols];
                for (long j = 0; j < o.cols; ++j)
                    dst[j] = br.reduce(dst[j] + e * src[j]);
            }
        return r;
    }
};

// L*A*R = diag(p^divisors, then zeros). divisors is non-decreasing with values
// in [0, n); L and R are only populated when requested.
struct SmithForm {
    std::vector<int> divisors;
    ZpnMatrix L, R;
    long rank() const { return static_cast<long>(divisors.size()); }
};

struct SmithOptions {
    bool want_left = false;
    bool want_right = false;
};

// aug, when given, receives every row operation applied to A — the cheap way
// to batch-solve A x = b without materializing L.
inline SmithForm smith_normal_form(ZpnMatrix A, int p, int n, SmithOptions opt = {},
                                   ZpnMatrix* aug = nullptr) {
    if (A.mod == 0) throw ContextError("smith_normal_form on an uninitialized matrix");
    if (aug && (aug->rows != A.rows || aug->mod != A.mod))
        throw ContextError("augmented block shape/modulus mismatch");
    detail::Barrett br(A.mod);
    SmithForm S;
    if (opt.want_left) S.L = ZpnMatrix::identity(A.rows, A.mod);
    if (opt.want_right) S.R = ZpnMatrix::identity(A.cols, A.mod);

    auto swap_rows = [&](ZpnMatrix& M, long x, long y) {
        if (x == y) return;
        for (long j = 0; j < M.cols; ++j) std::swap(M.at(x, j), M.at(y, j));
    };
    auto swap_cols = [&](ZpnMatrix& M, long x, long y) {
        if (x == y) return;
        for (long i = 0; i < M.rows; ++i) std::swap(M.at(i, x), M.at(i, y));
    };

    const long lim = std::min(A.rows, A.cols);
    for (long k = 0; k < lim; ++k) {
        int best_v = n;
        long bi = -1, bj = -1;
        for (long i = k; i < A.rows && best_v > 0; ++i)
            for (long j = k; j < A.cols; ++j) {
                std::uint64_t x = A.at(i, j);
                if (x == 0) continue;
                int v = detail::val_p(x, p, n);
                if (v < best_v) {
                    best_v = v;
                    bi = i;
                    bj = j;
                    if (v == 0) break;
                }
            }
        if (bi < 0) break;  // trailing block is zero

        swap_rows(A, k, bi);
        swap_cols(A, k, bj);
        if (opt.want_left) swap_rows(S.L, k, bi);
        if (opt.want_right) swap_cols(S.R, k, bj);
        if (aug) swap_rows(*aug, k, bi);

        std::uint64_t pv = 1;
        for (int i = 0; i < best_v; ++i) pv *= static_cast<std::uint64_t>(p);
        std::uint64_t unit = A.at(k, k) / pv;
        std::uint64_t uinv = invmod(unit, A.mod);
        for (long j = k; j < A.cols; ++j) A.at(k, j) = br.reduce(A.at(k, j) * uinv);
        if (opt.want_left)
            for (long j = 0; j < S.L.cols; ++j) S.L.at(k, j) = br.reduce(S.L.at(k, j) * uinv);
        if (aug)
            for (long j = 0; j < aug->cols; ++j) aug->at(k, j) = br.reduce(aug->at(k, j) * uinv);

        for (long i = k + 1; i < A.rows; ++i) {
            std::uint64_t x = A.at(i, k);
            if (x == 0) continue;
            std::uint64_t f = x / pv;  // exact: pivot valuation is minimal
            for (long j = k; j < A.cols; ++j)
                A.at(i, j) = br.submul(A.at(i, j), f, A.at(k, j));
            if (opt.want_left)
                for (long j = 0; j < S.L.cols; ++j)
                    S.L.at(i, j) = br.submul(S.L.at(i, j), f, S.L.at(k, j));
            if (aug)
                for (long j = 0; j < aug->cols; ++j)
                    aug->at(i, j) = br.submul(aug->at(i, j), f, aug->at(k, j));
        }
        for (long j = k + 1; j < A.cols; ++j) {
            std::uint64_t x = A.at(k, j);
            if (x == 0) continue;
            std::uint64_t g = x / pv;
            for (long i = k; i < A.rows; ++i)
                A.at(i, j) = br.submul(A.at(i, j), g, A.at(i, k));
            if (opt.want_right)
                for (long i = 0; i < S.R.rows; ++i)
                    S.R.at(i, j) = br.submul(S.R.at(i, j), g, S.R.at(i, k));
        }
        S.divisors.push_back(best_v);
    }
    return S;
}

// Generators of ker(A) ⊆ (Z/p^n)^cols together with their additive orders:
// generator i generates a cyclic subgroup of order p^order_exp[i], and the
// kernel is the (inner) direct sum of these.
struct KernelBasis {
    ZpnMatrix gens;              // one generator per column
    std::vector<int> order_exp;  // same length as gens.cols
};

inline KernelBasis kernel_basis(const ZpnMatrix& A, int p, int n) {
    SmithForm S = smith_normal_form(A, p, n, {.want_left = false, .want_right = true});
    const long r = S.rank();
    std::vector<long> src_col;
    std::vector<int> orders;
    std::vector<std::uint64_t> scale;
    for (long i = 0; i < r; ++i) {
        if (S.divisors[i] == 0) continue;  // unit pivot: coordinate forced to zero
        std::uint64_t s = 1;
        for (int e = 0; e < n - S.divisors[i]; ++e) s *= static_cast<std::uint64_t>(p);
        src_col.push_back(i);
        orders.push_back(S.divisors[i]);
        scale.push_back(s);
    }
    for (long i = r; i < A.cols; ++i) {
        src_col.push_back(i);
        orders.push_back(n);
        scale.push_back(1);
    }
    KernelBasis K;
    K.gens = ZpnMatrix(A.cols, static_cast<long>(src_col.size()), A.mod);
    K.order_exp = std::move(orders);
    detail::Barrett br(A.mod);
    for (long j = 0; j < K.gens.cols; ++j)
        for (long i = 0; i < A.cols; ++i)
            K.gens.at(i, j) = br.reduce(S.R.at(i, src_col[static_cast<std::size_t>(j)]) *
                                        scale[static_cast<std::size_t>(j)]);
    return K;
}

// Solve A·X = B column by column; nullopt as soon as one column has no
// solution. X is one particular solution (free coordinates set to zero).
inline std::optional<ZpnMatrix> solve_columns(const ZpnMatrix& A, const ZpnMatrix& B, int p,
                                              int n) {
    if (A.rows != B.rows || A.mod != B.mod)
        throw ContextError("solve_columns shape/modulus mismatch");
    ZpnMatrix rhs = B;
    SmithForm S = smith_normal_form(A, p, n, {.want_left = false, .want_right = true}, &rhs);
    const long r = S.rank();
    ZpnMatrix Y(A.cols, B.cols, A.mod);
    for (long c = 0; c < B.cols; ++c) {
        for (long i = 0; i < r; ++i) {
            std::uint64_t pv = 1;
            for (int e = 0; e < S.divisors[i]; ++e) pv *= static_cast<std::uint64_t>(p);
            if (rhs.at(i, c) % pv != 0) return std::nullopt;
            Y.at(i, c) = rhs.at(i, c) / pv;
        }
        for (long i = r; i < A.rows; ++i)
            if (rhs.at(i, c) != 0) return std::nullopt;
    }
    return S.R * Y;
}

// Two-sided inverse of a square matrix, when it exists (all divisors zero).
inline std::optional<ZpnMatrix> inverse(const ZpnMatrix& A, int p, int n) {
    if (A.rows != A.cols) return std::nullopt;
    auto X = solve_columns(A, ZpnMatrix::identity(A.rows, A.mod), p, n);
    if (!X) return std::nullopt;
    if (!(*X * A == ZpnMatrix::identity(A.rows, A.mod))) return std::nullopt;
    return X;
}

// ---------------------------------------------------------------------------
// Homology at the middle of   src --in--> mid --out--> tgt   over Z/p^n.
//
// The image is taken as in(ker(out∘in)) = im(in) ∩ ker(out), which agrees
// with im(in) whenever out∘in = 0 and stays well defined when a box
// truncation spoils that on the boundary. The quotient is presented on the
// kernel generators: relations are the generator orders plus the expressed
// image columns, and its cokernel divisors are the cyclic orders of H.
// ---------------------------------------------------------------------------

struct HomologyResult {
    std::vector<int> divisor_exp;  // orders of the cyclic summands, descending, each in [1, n]
    long fp_dim = 0;               // dim_{F_p} H ⊗ F_p = number of summands
};

inline HomologyResult homology(const ZpnMatrix& out, const ZpnMatrix& in, int p, int n) {
    if (out.cols != in.rows || out.mod != in.mod)
        throw ContextError("homology: differential shapes/moduli do not compose");
    KernelBasis K = kernel_basis(out, p, n);
    const long t = K.gens.cols;
    HomologyResult H;
    if (t == 0) return H;

    KernelBasis W = kernel_basis(out * in, p, n);
    ZpnMatrix V = in * W.gens;

    auto C = solve_columns(K.gens, V, p, n);
    if (!C)
        throw DomainError("homology: image column escaped the kernel; modulus corrupted?");

    ZpnMatrix rel(t, t + C->cols, out.mod);
    for (long i = 0; i < t; ++i) {
        std::uint64_t pv = 1;
        for (int e = 0; e < K.order_exp[static_cast<std::size_t>(i)]; ++e)
            pv *= static_cast<std::uint64_t>(p);
        rel.at(i, i) = pv % out.mod;
    }
    for (long i = 0; i < t; ++i)
        for (long j = 0; j < C->cols; ++j) rel.at(i, t + j) = C->at(i, j);

    SmithForm S = smith_normal_form(rel, p, n);
    for (long i = 0; i < t; ++i) {
        int lam = i < S.rank() ? S.divisors[static_cast<std::size_t>(i)] : n;
        if (lam > 0) H.divisor_exp.push_back(std::min(lam, n));
    }
    std::sort(H.divisor_exp.rbegin(), H.divisor_exp.rend());
    H.fp_dim = static_cast<long>(H.divisor_exp.size());
    return H;
}

// ---------------------------------------------------------------------------
// Column-sparse matrices. Assembled complex differentials are huge but each
// column holds a handful of entries (one operator applied to one monomial),
// so dense storage would be quadratic in the truncation volume for nothing.
// ---------------------------------------------------------------------------

struct SparseMatrix {
    long rows = 0, cols = 0;
    std::uint64_t mod = 0;
    // each column sorted by row index, entries in [1, mod)
    std::vector<std::vector<std::pair<long, std::uint64_t>>> col;

    SparseMatrix() = default;
    SparseMatrix(long r, long c, std::uint64_t m)
        : rows(r), cols(c), mod(m), col(static_cast<std::size_t>(c)) {}

    std::uint64_t at(long i, long j) const {
        const auto& v = col[static_cast<std::size_t>(j)];
        auto it = std::lower_bound(
            v.begin(), v.end(), i,
            [](const std::pair<long, std::uint64_t>& e, long row) { return e.first < row; });
        return (it != v.end() && it->first == i) ? it->second : 0;
    }

    long nnz() const {
        long t = 0;
        for (const auto& v : col) t += static_cast<long>(v.size());
        return t;
    }

    ZpnMatrix dense() const {
        ZpnMatrix D(rows, cols, mod);
        for (long j = 0; j < cols; ++j)
            for (const auto& [i, v] : col[static_cast<std::size_t>(j)]) D.at(i, j) = v;
        return D;
    }

    SparseMatrix operator*(const SparseMatrix& o) const {
        if (cols != o.rows || mod != o.mod)
            throw ContextError("sparse product: shapes/moduli do not compose");
        detail::Barrett br(mod);
        SparseMatrix r(rows, o.cols, mod);
        std::vector<std::uint64_t> acc(static_cast<std::size_t>(rows), 0);
        std::vector<long> touched;
        for (long j = 0; j < o.cols; ++j) {
            touched.clear();
            for (const auto& [k, f] : o.col[static_cast<std::size_t>(j)])
                for (const auto& [i, g] : col[static_cast<std::size_t>(k)]) {
                    if (acc[static_cast<std::size_t>(i)] == 0) touched.push_back(i);
                    acc[static_cast<std::size_t>(i)] =
                        br.reduce(acc[static_cast<std::size_t>(i)] + br.reduce(f * g));
                }
            std::sort(touched.begin(), touched.end());
            auto& dst = r.col[static_cast<std::size_t>(j)];
            for (long i : touched) {
                std::uint64_t v = acc[static_cast<std::size_t>(i)];
                acc[static_cast<std::size_t>(i)] = 0;
                if (v) dst.emplace_back(i, v);
            }
        }
        return r;
    }
};

// Rank of A ⊗ F_p by column elimination. Pivot columns are normalized to a
// unit leading entry and indexed by their leading row; each incoming column
// is reduced against that table until it dies or claims a fresh pivot. The
// complexes this sees are banded (operators move degrees predictably), so
// fill-in stays near the natural bandwidth.
inline long sparse_rank_modp(const SparseMatrix& A, std::uint64_t p) {
    using Col = std::vector<std::pair<long, std::uint64_t>>;
    auto inv_modp = [p](std::uint64_t v) {
        std::uint64_t r = 1, b = v % p, e = p - 2;
        while (e) {
            if (e & 1) r = r * b % p;
            b = b * b % p;
            e >>= 1;
        }
        return r;
    };
    std::vector<Col> piv(static_cast<std::size_t>(A.rows));
    long rank = 0;
    Col cur, tmp;
    for (long j = 0; j < A.cols; ++j) {
        cur.clear();
        for (const auto& [i, v] : A.col[static_cast<std::size_t>(j)])
            if (v % p) cur.emplace_back(i, v % p);
        while (!cur.empty()) {
            const auto [lead, lv] = cur.front();
            Col& pc = piv[static_cast<std::size_t>(lead)];
            if (pc.empty()) {
                const std::uint64_t s = inv_modp(lv);
                for (auto& e : cur) e.second = e.second * s % p;
                pc = cur;
                ++rank;
                break;
            }
            // cur -= lv * pc; pc has leading entry 1 at 'lead'
            tmp.clear();
            auto a = cur.begin();
            auto b = pc.begin();
            const std::uint64_t f = p - lv;  // add (p - lv)*pc instead of subtracting
            while (a != cur.end() || b != pc.end()) {
                if (b == pc.end() || (a != cur.end() && a->first < b->first)) {
                    tmp.push_back(*a++);
                } else if (a == cur.end() || b->first < a->first) {
                    tmp.emplace_back(b->first, f * b->second % p);
                    ++b;
                } else {
                    const std::uint64_t v = (a->second + f * b->second) % p;
                    if (v) tmp.emplace_back(a->first, v);
                    ++a, ++b;
                }
            }
            cur.swap(tmp);
        }
    }
    return rank;
}

}  // namespace pgk
