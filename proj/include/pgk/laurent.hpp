#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scalars.hpp"

namespace pgk {

// Exponent vector, one entry per context variable, lexicographically ordered
// by std::map. All term bookkeeping is sparse.
using ExpVec = std::vector<int>;

// Sentinel for "guaranteed to every degree" (exact series have no ceiling).
constexpr int kHiInf = std::numeric_limits<int>::max() / 4;

// ---------------------------------------------------------------------------
// Window: the per-variable box on which a truncated series is guaranteed.
//   lo: a true lower bound of the support (nothing exists below it), and
//   hi: the guarantee ceiling (coefficients above it were never computed).
// A coefficient at v is therefore known iff v <= hi coordinate-wise, or some
// coordinate of v undershoots lo (where the coefficient is exactly zero).
// ---------------------------------------------------------------------------

struct Window {
    std::vector<int> lo, hi;

    Window() = default;
    Window(std::vector<int> l, std::vector<int> h) : lo(std::move(l)), hi(std::move(h)) {}

    // uniform box [-c, N] in every variable
    static Window box(const PrecCtx& ctx, int c, int N) {
        return Window(std::vector<int>(ctx.dim(), -c), std::vector<int>(ctx.dim(), N));
    }

    std::size_t dim() const { return lo.size(); }

    bool contains(const ExpVec& v) const {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] < lo[i] || v[i] > hi[i]) return false;
        return true;
    }

    bool below_lo(const ExpVec& v) const {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] < lo[i]) return true;
        return false;
    }

    bool above_hi(const ExpVec& v) const {
        for (std::size_t i = 0; i < v.size(); ++i)
            if (v[i] > hi[i]) return true;
        return false;
    }

    bool operator==(const Window& o) const { return lo == o.lo && hi == o.hi; }
};

inline int sat_add(int a, int b) {
    if (a >= kHiInf || b >= kHiInf) return kHiInf;
    long s = static_cast<long>(a) + b;
    if (s >= kHiInf) return kHiInf;
    return static_cast<int>(s);
}

// ---------------------------------------------------------------------------
// LaurentSeries: element of O = (Z/p^n)[[X_D]][1/X_D] (exact Laurent
// polynomial) or a window-truncated approximation of one.
// ---------------------------------------------------------------------------

class LaurentSeries {
  public:
    using TermMap = std::map<ExpVec, std::uint64_t>;

    explicit LaurentSeries(CtxPtr ctx) : ctx_(std::move(ctx)), exact_(true) {}

    static LaurentSeries zero(CtxPtr ctx) { return LaurentSeries(std::move(ctx)); }

    static LaurentSeries constant(CtxPtr ctx, std::int64_t c) {
        LaurentSeries f(ctx);
        f.set_coeff(ExpVec(ctx->dim(), 0), Scalar(ctx, c).residue());
        return f;
    }

    static LaurentSeries monomial(CtxPtr ctx, const ExpVec& e, std::int64_t c = 1) {
        LaurentSeries f(ctx);
        if (e.size() != ctx->dim()) throw ContextError("exponent arity mismatch");
        f.set_coeff(e, Scalar(ctx, c).residue());
        return f;
    }

    // single-variable monomial X_var^k
    static LaurentSeries var_power(CtxPtr ctx, std::size_t var, int k, std::int64_t c = 1) {
        ExpVec e(ctx->dim(), 0);
        e.at(var) = k;
        return monomial(std::move(ctx), e, c);
    }

    const CtxPtr& ctx() const { return ctx_; }
    const TermMap& terms() const { return terms_; }
    bool exact() const { return exact_; }
    bool is_zero() const { return terms_.empty(); }

    const Window& window() const {
        if (exact_) throw DomainError("exact series carries no window");
        return window_;
    }

    // Effective guarantee data: for exact series the support minimum doubles
    // as lo and the ceiling is infinite.
    std::vector<int> effective_lo() const {
        if (!exact_) return window_.lo;
        return support_min();
    }
    std::vector<int> effective_hi() const {
        if (!exact_) return window_.hi;
        return std::vector<int>(ctx_->dim(), kHiInf);
    }

    std::vector<int> support_min() const {
        std::vector<int> m(ctx_->dim(), kHiInf);
        for (const auto& [e, c] : terms_)
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::min(m[i], e[i]);
        return m;
    }
    std::vector<int> support_max() const {
        std::vector<int> m(ctx_->dim(), -kHiInf);
        for (const auto& [e, c] : terms_)
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::max(m[i], e[i]);
        return m;
    }

    // Is the coefficient at v determined by what we store?
    bool knows(const ExpVec& v) const {
        if (exact_) return true;
        return !window_.above_hi(v) || window_.below_lo(v);
    }

    Scalar coeff(const ExpVec& v) const {
        if (!knows(v)) throw PrecisionError("coefficient lies beyond the guaranteed window");
        auto it = terms_.find(v);
        return Scalar::raw(ctx_, it == terms_.end() ? 0 : it->second);
    }

    // ---- mutation helpers (library-internal callers keep invariants) ----

    void set_coeff(const ExpVec& e, std::uint64_t residue) {
        if (residue == 0)
            terms_.erase(e);
        else
            terms_[e] = residue;
    }

    void add_coeff(const ExpVec& e, std::uint64_t residue) {
        if (residue == 0) return;
        auto it = terms_.find(e);
        if (it == terms_.end()) {
            terms_[e] = residue;
        } else {
            it->second = addmod(it->second, residue, ctx_->pn());
            if (it->second == 0) terms_.erase(it);
        }
    }

    void mark_windowed(Window w) {
        exact_ = false;
        window_ = std::move(w);
        prune_to_window();
    }

    void mark_exact() {
        exact_ = true;
        window_ = Window();
    }

    // ---- arithmetic ----

    LaurentSeries operator-() const {
        LaurentSeries r = *this;
        for (auto& [e, c] : r.terms_) c = ctx_->pn() - c;
        return r;
    }

    LaurentSeries operator+(const LaurentSeries& o) const {
        check(o);
        LaurentSeries r = *this;
        for (const auto& [e, c] : o.terms_) r.add_coeff(e, c);
        r.combine_window_add(*this, o);
        return r;
    }

    LaurentSeries operator-(const LaurentSeries& o) const {
        check(o);
        LaurentSeries r = *this;
        for (const auto& [e, c] : o.terms_) r.add_coeff(e, ctx_->pn() - c);
        r.combine_window_add(*this, o);
        return r;
    }

    LaurentSeries operator*(const Scalar& s) const {
        require_same_ctx(*ctx_, *s.ctx());
        LaurentSeries r(ctx_);
        for (const auto& [e, c] : terms_) r.set_coeff(e, mulmod(c, s.residue(), ctx_->pn()));
        if (!exact_) r.mark_windowed(window_);
        return r;
    }

    LaurentSeries operator*(const LaurentSeries& o) const {
        check(o);
        LaurentSeries r(ctx_);
        // exact zero absorbs everything; a windowed empty series does not
        // (its unknown tail could still contribute)
        if ((is_zero() && exact_) || (o.is_zero() && o.exact_)) return r;

        bool windowed = !exact_ || !o.exact_;
        Window w;
        if (windowed) {
            auto flo = effective_lo(), fhi = effective_hi();
            auto glo = o.effective_lo(), ghi = o.effective_hi();
            w.lo.resize(ctx_->dim());
            w.hi.resize(ctx_->dim());
            for (std::size_t i = 0; i < ctx_->dim(); ++i) {
                w.lo[i] = flo[i] + glo[i];
                w.hi[i] = std::min(sat_add(fhi[i], glo[i]), sat_add(ghi[i], flo[i]));
            }
        }

        const std::uint64_t m = ctx_->pn();
        ExpVec e(ctx_->dim());
        for (const auto& [ef, cf] : terms_) {
            for (const auto& [eg, cg] : o.terms_) {
                for (std::size_t i = 0; i < e.size(); ++i) e[i] = ef[i] + eg[i];
                if (windowed && w.above_hi(e)) continue;
                r.add_coeff(e, mulmod(cf, cg, m));
            }
        }
        if (windowed) r.mark_windowed(w);
        return r;
    }

    // exponent shift by a monomial X^s (unit direction only; no window change
    // beyond the translation)
    LaurentSeries shifted(const ExpVec& s) const {
        LaurentSeries r(ctx_);
        ExpVec e(ctx_->dim());
        for (const auto& [ef, c] : terms_) {
            for (std::size_t i = 0; i < e.size(); ++i) e[i] = ef[i] + s[i];
            r.terms_[e] = c;
        }
        if (!exact_) {
            Window w = window_;
            for (std::size_t i = 0; i < w.dim(); ++i) {
                w.lo[i] += s[i];
                w.hi[i] = sat_add(w.hi[i], s[i]);
            }
            r.mark_windowed(w);
        }
        return r;
    }

    // Coefficients reduced mod p^level (for torsion coordinates).
    LaurentSeries reduced_mod(unsigned level) const {
        if (level >= ctx_->n()) return *this;
        std::uint64_t pl = ctx_->ppow(level);
        LaurentSeries r(ctx_);
        for (const auto& [e, c] : terms_) r.set_coeff(e, c % pl);
        if (!exact_) r.mark_windowed(window_);
        return r;
    }

    // Keep only the box part, as an exact polynomial. The guarantee must
    // cover the box.
    LaurentSeries clipped_to_box(const Window& box) const {
        if (!exact_) {
            for (std::size_t i = 0; i < box.dim(); ++i)
                if (box.hi[i] > window_.hi[i])
                    throw PrecisionError("box extends beyond the guaranteed window");
        }
        LaurentSeries r(ctx_);
        for (const auto& [e, c] : terms_)
            if (box.contains(e)) r.terms_[e] = c;
        return r;
    }

    // Forget guarantees above w.hi (support bound is kept as-is).
    LaurentSeries weakened_to(const Window& w) const {
        LaurentSeries r = *this;
        Window nw;
        nw.lo = effective_lo();
        auto hi = effective_hi();
        nw.hi.resize(ctx_->dim());
        for (std::size_t i = 0; i < ctx_->dim(); ++i) nw.hi[i] = std::min(hi[i], w.hi[i]);
        if (r.is_zero() && r.exact_) return r;
        r.mark_windowed(nw);
        return r;
    }

    bool operator==(const LaurentSeries& o) const {
        check(o);
        if (exact_ != o.exact_) return false;
        if (!exact_ && !(window_ == o.window_)) return false;
        return terms_ == o.terms_;
    }
    bool operator!=(const LaurentSeries& o) const { return !(*this == o); }

    // ---- canonical text form ----
    // Terms in exponent-lexicographic order; balanced coefficients; "*"
    // between coefficient and variables; "^" only for exponents != 1.
    std::string to_string() const {
        if (terms_.empty()) return "0";
        std::ostringstream out;
        bool first = true;
        for (const auto& [e, c] : terms_) {
            std::int64_t b = Scalar::raw(ctx_, c).balanced();
            bool neg = b < 0;
            std::uint64_t mag = neg ? static_cast<std::uint64_t>(-b) : static_cast<std::uint64_t>(b);
            if (first) {
                if (neg) out << "-";
                first = false;
            } else {
                out << (neg ? " - " : " + ");
            }
            bool any_var = false;
            std::ostringstream vars;
            for (std::size_t i = 0; i < e.size(); ++i) {
                if (e[i] == 0) continue;
                if (any_var) vars << "*";
                vars << "X" << ctx_->vars()[i];
                if (e[i] != 1) vars << "^" << e[i];
                any_var = true;
            }
            if (!any_var) {
                out << mag;
            } else if (mag == 1) {
                out << vars.str();
            } else {
                out << mag << "*" << vars.str();
            }
        }
        return out.str();
    }

  private:
    void check(const LaurentSeries& o) const { require_same_ctx(*ctx_, *o.ctx_); }

    void prune_to_window() {
        for (auto it = terms_.begin(); it != terms_.end();) {
            if (window_.above_hi(it->first))
                it = terms_.erase(it);
            else
                ++it;
        }
    }

    void combine_window_add(const LaurentSeries& f, const LaurentSeries& g) {
        if (f.exact_ && g.exact_) {
            mark_exact();
            return;
        }
        auto flo = f.effective_lo(), fhi = f.effective_hi();
        auto glo = g.effective_lo(), ghi = g.effective_hi();
        Window w;
        w.lo.resize(ctx_->dim());
        w.hi.resize(ctx_->dim());
        for (std::size_t i = 0; i < ctx_->dim(); ++i) {
            w.lo[i] = std::min(flo[i], glo[i]);
            w.hi[i] = std::min(fhi[i], ghi[i]);
        }
        mark_windowed(w);
    }

    CtxPtr ctx_;
    TermMap terms_;
    bool exact_;
    Window window_;
};

// ---------------------------------------------------------------------------
// Window-aware comparison: do f and g agree on every exponent inside w?
// Throws PrecisionError if either operand cannot vouch for all of w.
// ---------------------------------------------------------------------------

inline bool window_guaranteed(const LaurentSeries& f, const Window& w) {
    if (f.exact()) return true;
    const Window& fw = f.window();
    // unguaranteed points of f inside w exist iff the box
    // { max(w.lo, fw.lo) <= v <= w.hi } is nonempty and pokes above fw.hi
    bool nonempty = true, above = false;
    for (std::size_t i = 0; i < w.dim(); ++i) {
        if (std::max(w.lo[i], fw.lo[i]) > w.hi[i]) nonempty = false;
        if (w.hi[i] > fw.hi[i]) above = true;
    }
    return !(nonempty && above);
}

inline bool compare_at(const LaurentSeries& f, const LaurentSeries& g, const Window& w) {
    require_same_ctx(*f.ctx(), *g.ctx());
    if (!window_guaranteed(f, w) || !window_guaranteed(g, w))
        throw PrecisionError("comparison window exceeds a guaranteed window");
    for (const auto& [e, c] : f.terms()) {
        if (!w.contains(e)) continue;
        auto it = g.terms().find(e);
        if (it == g.terms().end() || it->second != c) return false;
    }
    for (const auto& [e, c] : g.terms()) {
        if (!w.contains(e)) continue;
        if (f.terms().find(e) == f.terms().end()) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Inversion. Precondition: the mod-p image of f is monomial * (unit constant
// + terms of nonnegative exponent). Writing X^-m f / c = 1 + s + t with s the
// unit-level tail and t the p-divisible part, the inverse is
//   c^-1 X^-m * (1+s)^-1-style geometric accumulation,
// which terminates exactly when s = 0 (t is nilpotent: sum_{j<n} (-t)^j).
// With s != 0 the result is an infinite series and a window is required.
// ---------------------------------------------------------------------------

inline LaurentSeries invert(const LaurentSeries& f,
                            const std::optional<Window>& win = std::nullopt) {
    const CtxPtr& ctx = f.ctx();
    const std::uint64_t p = ctx->p(), pn = ctx->pn();
    const std::size_t d = ctx->dim();
    if (f.is_zero()) throw NotAUnit("zero is not invertible");

    // mod-p support minimum
    ExpVec m(d, kHiInf);
    bool any_unit = false;
    for (const auto& [e, c] : f.terms()) {
        if (c % p == 0) continue;
        any_unit = true;
        for (std::size_t i = 0; i < d; ++i) m[i] = std::min(m[i], e[i]);
    }
    if (!any_unit) throw NotAUnit("series vanishes mod p");
    auto pivot = f.terms().find(m);
    if (pivot == f.terms().end() || pivot->second % p == 0)
        throw NotAUnit("mod-p image is not monomial * unit power series");

    const std::uint64_t c0 = pivot->second;
    ExpVec mneg(d);
    for (std::size_t i = 0; i < d; ++i) mneg[i] = -m[i];

    // g = X^-m f / c0 = 1 + s + t
    LaurentSeries s(ctx), t(ctx);
    const std::uint64_t c0inv = invmod(c0, pn);
    ExpVec tneg(d, 0);  // how far t reaches below zero, per variable
    for (const auto& [e, c] : f.terms()) {
        ExpVec v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = e[i] - m[i];
        std::uint64_t cc = mulmod(c, c0inv, pn);
        bool origin = std::all_of(v.begin(), v.end(), [](int x) { return x == 0; });
        if (origin) continue;  // normalized to 1
        if (cc % p != 0) {
            s.set_coeff(v, cc);
        } else {
            t.set_coeff(v, cc);
            for (std::size_t i = 0; i < d; ++i) tneg[i] = std::max(tneg[i], -v[i]);
        }
    }

    const unsigned n = ctx->n();
    const bool exact_path = s.is_zero() && f.exact();
    if (!s.is_zero() && !win)
        throw PrecisionError("inversion yields an infinite series; a window is required");

    // clip box for the accumulating powers (series part, before the X^-m shift)
    Window clip;
    if (!exact_path) {
        clip.lo.assign(d, 0);
        clip.hi.resize(d);
        std::vector<int> fhi = f.effective_hi();
        for (std::size_t i = 0; i < d; ++i) {
            int want = win ? sat_add(win->hi[i], m[i]) : kHiInf;
            int know = sat_add(sat_add(fhi[i], -m[i]), -static_cast<int>(n - 1) * tneg[i]);
            clip.hi[i] = std::min(want, know);
            clip.lo[i] = -static_cast<int>(n - 1) * tneg[i];
        }
    }

    // inv_series = sum_j (-(s+t))^j, clipped as we go
    LaurentSeries q = s + t;
    LaurentSeries acc = LaurentSeries::constant(ctx, 1);
    LaurentSeries power = LaurentSeries::constant(ctx, 1);
    long total_hi = 0;
    for (std::size_t i = 0; i < d; ++i)
        if (!exact_path) total_hi += std::max(0, clip.hi[i] - clip.lo[i]);
    const long jmax = exact_path ? n : total_hi + static_cast<long>(n) * (1 + *std::max_element(tneg.begin(), tneg.end()) * static_cast<long>(d)) + 4;
    for (long j = 1; j <= jmax; ++j) {
        power = power * (-q);
        if (!exact_path) {
            // drop everything outside the clip box ceiling
            LaurentSeries clipped(ctx);
            for (const auto& [e, c] : power.terms())
                if (!clip.above_hi(e)) clipped.set_coeff(e, c);
            power = clipped;
        }
        if (power.is_zero()) break;
        acc = acc + power;
    }

    LaurentSeries result(ctx);
    for (const auto& [e, c] : acc.terms()) {
        ExpVec v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = e[i] - m[i];
        result.set_coeff(v, mulmod(c, c0inv, pn));
    }
    if (!exact_path) {
        Window w;
        w.lo.resize(d);
        w.hi.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            w.lo[i] = -m[i] + clip.lo[i];
            w.hi[i] = sat_add(clip.hi[i], -m[i]);
        }
        result.mark_windowed(w);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Residue: the coefficient of 1/X_D in F * prod (1+X_a)^-1. Expanding each
// (1+X_a)^-1 upward gives the exact finite formula
//   res(F) = sum_{v <= -1 coordinatewise} F_v * prod (-1)^(-1-v_a),
// which needs the guarantee to cover [support floor, (-1,...,-1)].
// ---------------------------------------------------------------------------

inline Scalar residue(const LaurentSeries& f) {
    const CtxPtr& ctx = f.ctx();
    if (!f.exact()) {
        for (std::size_t i = 0; i < ctx->dim(); ++i)
            if (f.window().hi[i] < -1)
                throw PrecisionError("residue needs the window to reach exponent -1");
    }
    std::uint64_t acc = 0;
    const std::uint64_t pn = ctx->pn();
    for (const auto& [e, c] : f.terms()) {
        bool all_neg = std::all_of(e.begin(), e.end(), [](int x) { return x <= -1; });
        if (!all_neg) continue;
        int sign = 0;
        for (int x : e) sign += (-1 - x);
        std::uint64_t term = (sign % 2 == 0) ? c : pn - c;
        acc = addmod(acc, term, pn);
    }
    return Scalar::raw(ctx, acc);
}

}  // namespace pgk
