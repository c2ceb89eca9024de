#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pgk/laurent.hpp"
#include "pgk/operators.hpp"

namespace pgk {

// ---------------------------------------------------------------------------
// Matrices of Laurent series and the torsion modules carrying the commuting
// semilinear actions. A module is stored in normal form ⊕_i O/(p^{n_i})·e_i
// with column convention: the matrix entry (i,j) is the e_i-component of the
// image of e_j.
// ---------------------------------------------------------------------------

struct SeriesMatrix {
    long rows = 0, cols = 0;
    std::vector<LaurentSeries> e;

    SeriesMatrix() = default;
    SeriesMatrix(const CtxPtr& ctx, long r, long c)
        : rows(r), cols(c), e(static_cast<std::size_t>(r) * c, LaurentSeries::zero(ctx)) {}

    static SeriesMatrix identity(const CtxPtr& ctx, long d) {
        SeriesMatrix I(ctx, d, d);
        for (long i = 0; i < d; ++i) I.at(i, i) = LaurentSeries::constant(ctx, 1);
        return I;
    }

    LaurentSeries& at(long i, long j) { return e[static_cast<std::size_t>(i) * cols + j]; }
    const LaurentSeries& at(long i, long j) const {
        return e[static_cast<std::size_t>(i) * cols + j];
    }

    bool operator==(const SeriesMatrix& o) const {
        return rows == o.rows && cols == o.cols && e == o.e;
    }

    SeriesMatrix operator*(const SeriesMatrix& o) const {
        if (cols != o.rows) throw ContextError("series matrix product shape mismatch");
        const CtxPtr& ctx = e.at(0).ctx();
        SeriesMatrix r(ctx, rows, o.cols);
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < o.cols; ++j) {
                LaurentSeries acc = LaurentSeries::zero(ctx);
                for (long k = 0; k < cols; ++k) acc = acc + at(i, k) * o.at(k, j);
                r.at(i, j) = std::move(acc);
            }
        return r;
    }

    std::vector<LaurentSeries> apply(const std::vector<LaurentSeries>& x) const {
        if (static_cast<long>(x.size()) != cols)
            throw ContextError("series matrix applied to a vector of the wrong length");
        const CtxPtr& ctx = e.at(0).ctx();
        std::vector<LaurentSeries> y(static_cast<std::size_t>(rows), LaurentSeries::zero(ctx));
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < cols; ++j)
                y[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] + at(i, j) * x[static_cast<std::size_t>(j)];
        return y;
    }

    SeriesMatrix transposed() const {
        SeriesMatrix t(e.at(0).ctx(), cols, rows);
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < cols; ++j) t.at(j, i) = at(i, j);
        return t;
    }

    template <class F>
    SeriesMatrix map(F&& f) const {
        SeriesMatrix r = *this;
        for (auto& s : r.e) s = f(s);
        return r;
    }
};

// True when f passes the unit classification (monomial × unit mod p, lifted),
// regardless of whether its inverse needs a window to expand.
inline bool is_ring_unit(const LaurentSeries& f) {
    try {
        invert(f);
    } catch (const NotAUnit&) {
        return false;
    } catch (const PrecisionError&) {
        return true;
    }
    return true;
}

inline LaurentSeries series_det(const SeriesMatrix& M) {
    if (M.rows != M.cols) throw ContextError("determinant of a non-square matrix");
    const CtxPtr& ctx = M.e.at(0).ctx();
    if (M.rows == 0) return LaurentSeries::constant(ctx, 1);
    if (M.rows == 1) return M.at(0, 0);
    LaurentSeries acc = LaurentSeries::zero(ctx);
    for (long i = 0; i < M.rows; ++i) {
        SeriesMatrix minor(ctx, M.rows - 1, M.cols - 1);
        for (long r = 0, mr = 0; r < M.rows; ++r) {
            if (r == i) continue;
            for (long c = 1; c < M.cols; ++c) minor.at(mr, c - 1) = M.at(r, c);
            ++mr;
        }
        LaurentSeries term = M.at(i, 0) * series_det(minor);
        acc = (i % 2 == 0) ? acc + term : acc - term;
    }
    return acc;
}

// Gauss–Jordan over the series ring; pivots are entries accepted by the unit
// classification. Exact inverses are preferred; a window unlocks the pivots
// whose inverse is a genuine infinite series.
inline SeriesMatrix matrix_inverse(SeriesMatrix M, const std::optional<Window>& win = {}) {
    if (M.rows != M.cols) throw NotAUnit("only square matrices invert");
    const CtxPtr& ctx = M.e.at(0).ctx();
    const long d = M.rows;
    SeriesMatrix inv = SeriesMatrix::identity(ctx, d);
    auto invert_entry = [&](const LaurentSeries& f) {
        try {
            return invert(f);
        } catch (const PrecisionError&) {
            if (!win) throw;
            return invert(f, win);
        }
    };
    for (long k = 0; k < d; ++k) {
        long piv = -1;
        for (long i = k; i < d && piv < 0; ++i)
            if (is_ring_unit(M.at(i, k))) piv = i;
        if (piv < 0) throw NotAUnit("series matrix is not invertible");
        if (piv != k)
            for (long j = 0; j < d; ++j) {
                std::swap(M.at(piv, j), M.at(k, j));
                std::swap(inv.at(piv, j), inv.at(k, j));
            }
        LaurentSeries pinv = invert_entry(M.at(k, k));
        for (long j = 0; j < d; ++j) {
            M.at(k, j) = M.at(k, j) * pinv;
            inv.at(k, j) = inv.at(k, j) * pinv;
        }
        for (long i = 0; i < d; ++i) {
            if (i == k) continue;
            LaurentSeries f = M.at(i, k);
            if (f.is_zero()) continue;
            for (long j = 0; j < d; ++j) {
                M.at(i, j) = M.at(i, j) - f * M.at(k, j);
                inv.at(i, j) = inv.at(i, j) - f * inv.at(k, j);
            }
        }
    }
    return inv;
}

// Torsion part of a Γ-generator tuple: the substitution exponent is a
// Teichmüller representative, the matrix its action on coordinates.
struct TorsionData {
    PadicExponent omega;
    SeriesMatrix T;
};

class PhiGammaModule {
public:
    PhiGammaModule(CtxPtr ctx, std::vector<int> divisors, std::vector<SeriesMatrix> frobenius,
                   std::vector<PadicExponent> gamma_exponents,
                   std::vector<SeriesMatrix> gamma_matrices,
                   std::vector<TorsionData> torsion = {})
        : ctx_(std::move(ctx)),
          div_(std::move(divisors)),
          frob_(std::move(frobenius)),
          gexp_(std::move(gamma_exponents)),
          gmat_(std::move(gamma_matrices)),
          tor_(std::move(torsion)) {
        validate();
    }

    const CtxPtr& ctx() const { return ctx_; }
    long rank() const { return static_cast<long>(div_.size()); }
    const std::vector<int>& divisors() const { return div_; }
    int level() const { return lvl_; }  // h = max n_i, the pairing's precision
    bool has_torsion() const { return !tor_.empty(); }

    const SeriesMatrix& frobenius(std::size_t alpha) const { return frob_.at(alpha); }
    const PadicExponent& gamma_exponent(std::size_t alpha) const { return gexp_.at(alpha); }
    const SeriesMatrix& gamma_matrix(std::size_t alpha) const { return gmat_.at(alpha); }
    const TorsionData& torsion(std::size_t alpha) const { return tor_.at(alpha); }

private:
    void validate() {
        const std::size_t dim = ctx_->dim();
        if (frob_.size() != dim || gexp_.size() != dim || gmat_.size() != dim)
            throw ContextError("module needs one Frobenius and one gamma datum per variable");
        if (!tor_.empty() && tor_.size() != dim)
            throw ContextError("torsion data must cover every variable or none");
        lvl_ = 1;
        for (int ni : div_) {
            if (ni < 1 || ni > static_cast<int>(ctx_->n()))
                throw DomainError("elementary divisor exponent out of [1, n]");
            lvl_ = std::max(lvl_, ni);
        }
        for (std::size_t a = 0; a < dim; ++a) {
            check_matrix(frob_[a]);
            check_matrix(gmat_[a]);
            if (!gexp_[a].is_unit())
                throw DomainError("gamma exponent must be a unit");
            if (!tor_.empty()) check_matrix(tor_[a].T);
        }
    }

    void check_matrix(SeriesMatrix& M) {
        const long d = rank();
        if (M.rows != d || M.cols != d) throw ContextError("module matrix is not rank x rank");
        for (long i = 0; i < d; ++i)
            for (long j = 0; j < d; ++j) {
                LaurentSeries& s = M.at(i, j);
                if (s.ctx() != ctx_) throw ContextError("module matrix entry from foreign context");
                // entry (i,j) maps p^{n_j}-torsion into p^{n_i}-torsion
                int need = div_[static_cast<std::size_t>(i)] - div_[static_cast<std::size_t>(j)];
                if (need > 0)
                    for (const auto& [ex, c] : s.terms())
                        if (residue_valuation(c, ctx_->p(), ctx_->n()) <
                            static_cast<unsigned>(need))
                            throw DomainError(
                                "matrix entry not divisible enough for mixed divisors");
                s = s.reduced_mod(static_cast<unsigned>(div_[static_cast<std::size_t>(i)]));
            }
    }

    CtxPtr ctx_;
    std::vector<int> div_;
    std::vector<SeriesMatrix> frob_;
    std::vector<PadicExponent> gexp_;
    std::vector<SeriesMatrix> gmat_;
    std::vector<TorsionData> tor_;
    int lvl_ = 1;
};

using ModuleElement = std::vector<LaurentSeries>;

inline ModuleElement mod_reduce(const PhiGammaModule& M, ModuleElement x) {
    if (static_cast<long>(x.size()) != M.rank())
        throw ContextError("element length does not match module rank");
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = x[i].reduced_mod(static_cast<unsigned>(M.divisors()[i]));
    return x;
}

inline ModuleElement mod_phi(const PhiGammaModule& M, const ModuleElement& x, std::size_t alpha) {
    ModuleElement fx = x;
    for (auto& c : fx) c = phi(c, alpha);
    return mod_reduce(M, M.frobenius(alpha).apply(fx));
}

inline ModuleElement mod_psi(const PhiGammaModule& M, const ModuleElement& x, std::size_t alpha,
                             const std::optional<Window>& win = {}) {
    ModuleElement z = matrix_inverse(M.frobenius(alpha), win).apply(x);
    for (auto& c : z) c = psi(c, alpha);
    return mod_reduce(M, std::move(z));
}

inline ModuleElement mod_gamma(const PhiGammaModule& M, const ModuleElement& x, std::size_t alpha,
                               const std::optional<Window>& win = {}) {
    GammaElement g = GammaElement::identity(M.ctx()).with(alpha, M.gamma_exponent(alpha));
    ModuleElement gx = x;
    for (auto& c : gx) c = gamma_apply(c, g, win);
    return mod_reduce(M, M.gamma_matrix(alpha).apply(gx));
}

inline ModuleElement mod_torsion(const PhiGammaModule& M, const ModuleElement& x,
                                 std::size_t alpha, const std::optional<Window>& win = {}) {
    if (!M.has_torsion()) return mod_reduce(M, x);
    GammaElement g = GammaElement::identity(M.ctx()).with(alpha, M.torsion(alpha).omega);
    ModuleElement gx = x;
    for (auto& c : gx) c = gamma_apply(c, g, win);
    return mod_reduce(M, M.torsion(alpha).T.apply(gx));
}

// Averaging projector onto the C_Δ-fixed part: per variable, average the
// p−1 powers of the torsion generator. Without torsion data C_Δ acts
// trivially and the projector is the identity.
inline ModuleElement c_delta_projector(const PhiGammaModule& M, ModuleElement x,
                                       const std::optional<Window>& win = {}) {
    x = mod_reduce(M, std::move(x));
    if (!M.has_torsion()) return x;
    const CtxPtr& ctx = M.ctx();
    Scalar avg = Scalar(ctx, static_cast<std::int64_t>(ctx->p()) - 1).inverse();
    for (std::size_t a = 0; a < ctx->dim(); ++a) {
        ModuleElement acc = x, power = x;
        for (std::uint64_t k = 1; k + 1 < ctx->p(); ++k) {
            power = mod_torsion(M, power, a, win);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = acc[i] + power[i];
        }
        for (auto& c : acc) c = c * avg;
        x = mod_reduce(M, std::move(acc));
    }
    return x;
}

inline std::vector<bool> etale_check(const PhiGammaModule& M) {
    std::vector<bool> ok;
    ok.reserve(M.ctx()->dim());
    for (std::size_t a = 0; a < M.ctx()->dim(); ++a)
        ok.push_back(M.rank() == 0 || is_ring_unit(series_det(M.frobenius(a))));
    return ok;
}

// ---------------------------------------------------------------------------
// Relation audit: every pair of generator actions must commute as semilinear
// operators, i.e. P_mat · p_op(Q_mat) = Q_mat · q_op(P_mat) entrywise on the
// verification window.
// ---------------------------------------------------------------------------

inline std::vector<std::string> check_relations(const PhiGammaModule& M, const Window& win) {
    struct Gen {
        std::string name;
        const SeriesMatrix* mat;
        std::function<LaurentSeries(const LaurentSeries&)> op;
    };
    const CtxPtr& ctx = M.ctx();
    std::vector<Gen> gens;
    for (std::size_t a = 0; a < ctx->dim(); ++a) {
        gens.push_back({"phi:" + ctx->vars()[a], &M.frobenius(a),
                        [a](const LaurentSeries& f) { return phi(f, a); }});
        GammaElement g = GammaElement::identity(ctx).with(a, M.gamma_exponent(a));
        gens.push_back({"gamma:" + ctx->vars()[a], &M.gamma_matrix(a),
                        [g, win](const LaurentSeries& f) { return gamma_apply(f, g, win); }});
        if (M.has_torsion()) {
            GammaElement t = GammaElement::identity(ctx).with(a, M.torsion(a).omega);
            gens.push_back({"tor:" + ctx->vars()[a], &M.torsion(a).T,
                            [t, win](const LaurentSeries& f) { return gamma_apply(f, t, win); }});
        }
    }
    std::vector<std::string> violations;
    for (std::size_t u = 0; u < gens.size(); ++u)
        for (std::size_t v = u + 1; v < gens.size(); ++v) {
            SeriesMatrix lhs = *gens[u].mat * gens[v].mat->map(gens[u].op);
            SeriesMatrix rhs = *gens[v].mat * gens[u].mat->map(gens[v].op);
            bool ok = true;
            for (std::size_t k = 0; k < lhs.e.size() && ok; ++k) {
                const LaurentSeries &l = lhs.e[k], &r = rhs.e[k];
                Window w = win;
                for (std::size_t d = 0; d < ctx->dim(); ++d) {
                    if (!l.exact()) w.hi[d] = std::min(w.hi[d], l.window().hi[d]);
                    if (!r.exact()) w.hi[d] = std::min(w.hi[d], r.window().hi[d]);
                }
                ok = compare_at(l, r, w);
            }
            if (!ok) violations.push_back(gens[u].name + "/" + gens[v].name);
        }
    return violations;
}

// ---------------------------------------------------------------------------
// Duality. Dual elements are kept in functional coordinates: y = (g_i) means
// y(e_j) = g_j · p^{h−n_j} · δ with δ = ∏_α (1+X_α)/X_α, so the pairing is
// the plain product residue below. The dual operator matrices come from the
// adjunctions res(φf·g) = res(f·ψg) and res(ψf·g) = res(f·φg): a twisted,
// p-rescaled inverse transpose. The adjointness tests pin these formulas.
// ---------------------------------------------------------------------------

inline LaurentSeries pairing_kernel(const CtxPtr& ctx) {
    LaurentSeries delta = LaurentSeries::constant(ctx, 1);
    for (std::size_t a = 0; a < ctx->dim(); ++a) {
        LaurentSeries f = LaurentSeries::var_power(ctx, a, -1) + LaurentSeries::constant(ctx, 1);
        delta = delta * f;  // (1+X_a)/X_a
    }
    return delta;
}

inline Scalar pairing(const PhiGammaModule& M, const ModuleElement& x, const ModuleElement& y) {
    if (x.size() != y.size() || static_cast<long>(x.size()) != M.rank())
        throw ContextError("pairing needs matching module/dual coordinates");
    const CtxPtr& ctx = M.ctx();
    LaurentSeries delta = pairing_kernel(ctx);
    Scalar acc(ctx, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        Scalar weight(ctx, static_cast<std::int64_t>(
                               ctx->ppow(static_cast<unsigned>(M.level() - M.divisors()[i]))));
        acc = acc + residue(x[i] * y[i] * delta) * weight;
    }
    return acc;
}

// Ring scalars act on functional coordinates through the involution that
// inverts 1+X_α, so that u·x pairs with u·y exactly as x pairs with y.
inline ModuleElement dual_scalar_multiply(const PhiGammaModule& dual, const LaurentSeries& u,
                                          ModuleElement y, const std::optional<Window>& win = {}) {
    LaurentSeries su = sharp(u, win);
    for (auto& c : y) c = c * su;
    return mod_reduce(dual, std::move(y));
}

namespace detail {

inline LaurentSeries p_power_scale(LaurentSeries f, int k, const CtxPtr& ctx) {
    if (k >= 0)
        return f * Scalar(ctx, static_cast<std::int64_t>(ctx->ppow(static_cast<unsigned>(k))));
    std::optional<Window> w;
    if (!f.exact()) w = f.window();
    for (int i = 0; i < -k; ++i) f = divided_by_p(f);
    if (w) f.mark_windowed(*w);
    return f;
}

// (op(δ)/δ) restricted to the variable the operator touches; exact for φ,
// windowed for the binomial substitutions.
inline LaurentSeries phi_twist(const CtxPtr& ctx, std::size_t alpha) {
    LaurentSeries x = LaurentSeries::var_power(ctx, alpha, 1);
    LaurentSeries one_plus = x + LaurentSeries::constant(ctx, 1);
    LaurentSeries pw = LaurentSeries::constant(ctx, 1);
    for (std::uint64_t i = 0; i + 1 < ctx->p(); ++i) pw = pw * one_plus;
    return x * pw * invert(phi(x, alpha));  // X(1+X)^{p−1}/φ(X), exact
}

inline LaurentSeries gamma_twist(const CtxPtr& ctx, std::size_t alpha, const PadicExponent& c,
                                 const std::optional<Window>& win) {
    LaurentSeries da = LaurentSeries::var_power(ctx, alpha, -1) + LaurentSeries::constant(ctx, 1);
    GammaElement g = GammaElement::identity(ctx).with(alpha, c);
    return gamma_apply(da, g, win) * invert(da, win);
}

}  // namespace detail

inline PhiGammaModule dual_module(const PhiGammaModule& M, const std::optional<Window>& win = {}) {
    const CtxPtr& ctx = M.ctx();
    const long d = M.rank();
    const auto& nd = M.divisors();
    auto rescale = [&](SeriesMatrix A) {
        // entry (j,m) of the dual matrix carries p^{n_j - n_m}; the negative
        // case divides exactly because A came from a well-defined module map
        for (long j = 0; j < d; ++j)
            for (long m = 0; m < d; ++m)
                A.at(j, m) = detail::p_power_scale(
                    A.at(j, m), nd[static_cast<std::size_t>(j)] - nd[static_cast<std::size_t>(m)],
                    ctx);
        return A;
    };
    std::vector<SeriesMatrix> dual_frob, dual_gmat;
    std::vector<PadicExponent> dual_gexp;
    std::vector<TorsionData> dual_tor;
    for (std::size_t a = 0; a < ctx->dim(); ++a) {
        LaurentSeries tphi = detail::phi_twist(ctx, a);
        SeriesMatrix bstar = rescale(matrix_inverse(M.frobenius(a), win).transposed())
                                 .map([&](const LaurentSeries& s) { return s * tphi; });
        dual_frob.push_back(std::move(bstar));

        const PadicExponent& c = M.gamma_exponent(a);
        LaurentSeries tgam = detail::gamma_twist(ctx, a, c, win);
        Scalar chi = c.as_scalar();
        SeriesMatrix gstar = rescale(matrix_inverse(M.gamma_matrix(a), win).transposed())
                                 .map([&](const LaurentSeries& s) { return s * tgam * chi; });
        dual_gexp.push_back(c);
        dual_gmat.push_back(std::move(gstar));

        if (M.has_torsion()) {
            const PadicExponent& w = M.torsion(a).omega;
            LaurentSeries ttor = detail::gamma_twist(ctx, a, w, win);
            Scalar wchi = w.as_scalar();
            SeriesMatrix tstar = rescale(matrix_inverse(M.torsion(a).T, win).transposed())
                                     .map([&](const LaurentSeries& s) { return s * ttor * wchi; });
            dual_tor.push_back({w, std::move(tstar)});
        }
    }
    return PhiGammaModule(ctx, nd, std::move(dual_frob), std::move(dual_gexp),
                          std::move(dual_gmat), std::move(dual_tor));
}

}  // namespace pgk
