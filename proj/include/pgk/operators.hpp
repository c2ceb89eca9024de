#pragma once

#include <optional>

#include "laurent.hpp"

namespace pgk {

namespace detail {

inline int floordiv(long a, long b) {  // b > 0
    long q = a / b, r = a % b;
    if (r != 0 && r < 0) --q;
    return static_cast<int>(q);
}

// Pascal triangle mod p, rows 0..p-1 (digit systems never need more)
inline std::vector<std::vector<std::uint64_t>> pascal_mod_p(std::uint64_t p) {
    std::vector<std::vector<std::uint64_t>> C(p);
    for (std::uint64_t i = 0; i < p; ++i) {
        C[i].assign(i + 1, 1);
        for (std::uint64_t j = 1; j < i; ++j) C[i][j] = (C[i - 1][j - 1] + C[i - 1][j]) % p;
    }
    return C;
}

// every coefficient must be divisible by p; anything else is a logic error
inline LaurentSeries divided_by_p(const LaurentSeries& f) {
    const CtxPtr& ctx = f.ctx();
    LaurentSeries r(ctx);
    for (const auto& [e, c] : f.terms()) {
        if (c % ctx->p() != 0) throw DomainError("internal: residual not divisible by p");
        r.set_coeff(e, c / ctx->p());
    }
    return r;
}

// (1+X_alpha)^j for 0 <= j < p, exact
inline std::vector<LaurentSeries> one_plus_x_powers(const CtxPtr& ctx, std::size_t alpha,
                                                    std::uint64_t count) {
    std::vector<LaurentSeries> pw;
    pw.reserve(count);
    pw.push_back(LaurentSeries::constant(ctx, 1));
    LaurentSeries step = LaurentSeries::constant(ctx, 1) + LaurentSeries::var_power(ctx, alpha, 1);
    for (std::uint64_t j = 1; j < count; ++j) pw.push_back(pw.back() * step);
    return pw;
}

// Iterative power cache around a fixed exact unit base (negative exponents via
// one exact inversion). Bases here are monomial * (1 + nilpotent), so every
// power is an exact Laurent polynomial.
class ExactPowers {
  public:
    explicit ExactPowers(LaurentSeries base) : base_(std::move(base)) {
        cache_.emplace(0, LaurentSeries::constant(base_.ctx(), 1));
    }

    const LaurentSeries& operator()(int k) {
        auto it = cache_.find(k);
        if (it != cache_.end()) return it->second;
        if (k > 0) {
            int j = k;
            while (!cache_.count(j)) --j;
            for (; j < k; ++j) cache_.emplace(j + 1, cache_.at(j) * base_);
        } else {
            if (!inv_) inv_ = invert(base_);
            int j = k;
            while (!cache_.count(j)) ++j;
            for (; j > k; --j) cache_.emplace(j - 1, cache_.at(j) * *inv_);
        }
        return cache_.at(k);
    }

  private:
    LaurentSeries base_;
    std::optional<LaurentSeries> inv_;
    std::map<int, LaurentSeries> cache_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Partial Frobenius: X_alpha -> (1+X_alpha)^p - 1, other variables fixed.
// Exact on Laurent polynomials: (1+X)^p - 1 = X^p * (1 + t) with t p-divisible
// of bounded depth, so negative powers invert to finite sums mod p^n.
// ---------------------------------------------------------------------------

inline LaurentSeries phi_base(const CtxPtr& ctx, std::size_t alpha) {
    LaurentSeries base(ctx);
    auto pexp = PadicExponent::integer(ctx, static_cast<std::int64_t>(ctx->p()));
    ExpVec e(ctx->dim(), 0);
    for (std::uint64_t i = 1; i <= ctx->p(); ++i) {
        e[alpha] = static_cast<int>(i);
        base.add_coeff(e, binom_padic(pexp, static_cast<std::int64_t>(i), ctx).residue());
    }
    return base;
}

inline LaurentSeries phi(const LaurentSeries& f, std::size_t alpha) {
    const CtxPtr& ctx = f.ctx();
    if (alpha >= ctx->dim()) throw ContextError("phi: variable index out of range");
    const long p = static_cast<long>(ctx->p());
    const long n = ctx->n();

    detail::ExactPowers power(phi_base(ctx, alpha));
    LaurentSeries out(ctx);
    ExpVec v(ctx->dim());
    for (const auto& [e, c] : f.terms()) {
        const LaurentSeries& P = power(e[alpha]);
        for (const auto& [pe, pc] : P.terms()) {
            v = e;
            v[alpha] = pe[alpha];
            out.add_coeff(v, mulmod(c, pc, ctx->pn()));
        }
    }

    if (!f.exact()) {
        Window w = f.window();
        long lo = w.lo[alpha], hi = w.hi[alpha];
        w.lo[alpha] = lo < 0 ? static_cast<int>(p * lo - (n - 1) * (p - 1)) : w.lo[alpha];
        if (hi < kHiInf && hi < 0)
            w.hi[alpha] = static_cast<int>(p * (hi + 1) - (n - 1) * (p - 1) - 1);
        out.mark_windowed(w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Digit decomposition f = sum_{i<p} (1+X_alpha)^i phi_alpha(x_i) and the left
// inverse psi_alpha(f) = x_0.
//
// p-adic digit lifting: mod p the equation reads
//   fbar = sum_i (1+X)^i gbar_i(X^p),
// so each degree class pk+s gives the unipotent triangular system
//   fbar_{pk+s} = sum_{i>=s} C(i,s) gbar_{i,k},
// solved by back-substitution from i = p-1 down. Lift the digits, subtract
// sum_i (1+X)^i phi(lift), divide by p, recurse; x_i = sum_m p^m g_i^(m).
// ---------------------------------------------------------------------------

inline std::vector<LaurentSeries> phi_digits(const LaurentSeries& f, std::size_t alpha) {
    const CtxPtr& ctx = f.ctx();
    if (alpha >= ctx->dim()) throw ContextError("phi_digits: variable index out of range");
    if (!f.exact())
        throw PrecisionError("digit extraction needs an exact input; clip to a box first");
    const std::uint64_t p = ctx->p();
    const auto C = detail::pascal_mod_p(p);
    const auto onepx = detail::one_plus_x_powers(ctx, alpha, p);
    const int pi = static_cast<int>(p);

    std::vector<LaurentSeries> digits(p, LaurentSeries(ctx));
    LaurentSeries r = f;
    std::uint64_t pm = 1;
    for (unsigned m = 0; m < ctx->n() && !r.is_zero(); ++m, pm *= p) {
        std::map<ExpVec, std::vector<std::uint64_t>> classes;
        for (const auto& [e, c] : r.terms()) {
            std::uint64_t cp = c % p;
            if (cp == 0) continue;
            int k = detail::floordiv(e[alpha], pi);
            int s = e[alpha] - pi * k;
            ExpVec key = e;
            key[alpha] = k;
            auto [it, fresh] = classes.try_emplace(key);
            if (fresh) it->second.assign(p, 0);
            it->second[static_cast<std::size_t>(s)] = cp;
        }
        if (classes.empty()) {
            r = detail::divided_by_p(r);
            continue;
        }

        std::vector<LaurentSeries> G(p, LaurentSeries(ctx));
        std::vector<std::uint64_t> g(p);
        for (const auto& [key, rb] : classes) {
            for (int i = pi - 1; i >= 0; --i) {
                std::uint64_t acc = rb[static_cast<std::size_t>(i)];
                for (int j = i + 1; j < pi; ++j)
                    acc = submod(acc, mulmod(C[j][i], g[j], p), p);
                g[static_cast<std::size_t>(i)] = acc;
                if (acc) G[static_cast<std::size_t>(i)].add_coeff(key, acc);
            }
        }

        LaurentSeries sub(ctx);
        for (std::uint64_t i = 0; i < p; ++i)
            if (!G[i].is_zero()) sub = sub + onepx[i] * phi(G[i], alpha);
        r = detail::divided_by_p(r - sub);

        Scalar scale = Scalar::raw(ctx, pm % ctx->pn());
        for (std::uint64_t i = 0; i < p; ++i)
            if (!G[i].is_zero()) digits[i] = digits[i] + G[i] * scale;
    }
    return digits;
}

inline LaurentSeries psi(const LaurentSeries& f, std::size_t alpha) {
    if (f.exact()) return phi_digits(f, alpha)[0];

    // Clip to the guaranteed box, extract exactly, then claim only what the
    // unknown tail provably cannot touch. Across the n lifting layers a term
    // can drift downward by at most (n-1)(p-1) degrees of paid p-divisible
    // spread plus (n-1)(p-1) of free class-flooring loss, so both window
    // bounds contract by 2(n-1)(p-1) before the final division by p.
    const CtxPtr& ctx = f.ctx();
    const Window& w = f.window();
    LaurentSeries out = phi_digits(f.clipped_to_box(w), alpha)[0];

    const long p = static_cast<long>(ctx->p());
    const long n = ctx->n();
    const long drift = 2 * (n - 1) * (p - 1);

    Window nw = w;
    long lo = w.lo[alpha], hi = w.hi[alpha];
    nw.lo[alpha] = detail::floordiv(lo - drift, p);
    nw.hi[alpha] =
        hi >= kHiInf ? kHiInf : detail::floordiv(hi + 1 - drift, p) - 1;
    out.mark_windowed(nw);
    return out;
}

// ---------------------------------------------------------------------------
// Gamma action. One unit exponent per variable; gamma(X_alpha) =
// (1+X_alpha)^{c_alpha} - 1. Defaults to the identity everywhere.
// ---------------------------------------------------------------------------

class GammaElement {
  public:
    static GammaElement identity(CtxPtr ctx) {
        GammaElement g(std::move(ctx));
        g.c_.assign(g.ctx_->dim(), PadicExponent::integer(g.ctx_, 1));
        return g;
    }

    // the fixed topological generator 1+p in every variable
    static GammaElement canonical(const CtxPtr& ctx) {
        GammaElement g = identity(ctx);
        for (std::size_t a = 0; a < ctx->dim(); ++a)
            g.c_[a] = PadicExponent::integer(ctx, 1 + static_cast<std::int64_t>(ctx->p()));
        return g;
    }

    GammaElement with(std::size_t alpha, PadicExponent c) const {
        if (alpha >= ctx_->dim()) throw ContextError("gamma: variable index out of range");
        if (!c.is_unit()) throw DomainError("gamma exponent must be a unit");
        GammaElement g = *this;
        g.c_[alpha] = std::move(c);
        return g;
    }

    const CtxPtr& ctx() const { return ctx_; }
    const PadicExponent& exponent(std::size_t alpha) const { return c_.at(alpha); }
    bool trivial_at(std::size_t alpha) const { return c_[alpha].is_one(); }

    GammaElement operator*(const GammaElement& o) const {
        require_same_ctx(*ctx_, *o.ctx_);
        GammaElement g = *this;
        for (std::size_t a = 0; a < ctx_->dim(); ++a) g.c_[a] = c_[a] * o.c_[a];
        return g;
    }

  private:
    explicit GammaElement(CtxPtr ctx) : ctx_(std::move(ctx)) {}
    CtxPtr ctx_;
    std::vector<PadicExponent> c_;
};

namespace detail {

// truncated (1+X_alpha)^c - 1 through degree cap
inline LaurentSeries gamma_base(const CtxPtr& ctx, std::size_t alpha, const PadicExponent& c,
                                int cap) {
    LaurentSeries base(ctx);
    for (int j = 1; j <= cap; ++j) {
        ExpVec e(ctx->dim(), 0);
        e[alpha] = j;
        base.add_coeff(e, binom_padic(c, j, ctx).residue());
    }
    return base;
}

// drop terms whose alpha-exponent exceeds cap
inline LaurentSeries capped(const LaurentSeries& f, std::size_t alpha, int cap) {
    if (cap >= kHiInf) return f;
    LaurentSeries r(f.ctx());
    for (const auto& [e, c] : f.terms())
        if (e[alpha] <= cap) r.set_coeff(e, c);
    return r;
}

// gamma(X_alpha^k) for the demanded exponents, through alpha-degree cap
class GammaPowers {
  public:
    GammaPowers(CtxPtr ctx, std::size_t alpha, PadicExponent c, int cap)
        : ctx_(std::move(ctx)), alpha_(alpha), c_(std::move(c)), cap_(cap) {
        cache_.emplace(0, LaurentSeries::constant(ctx_, 1));
    }

    bool exact_for(int k) const {
        return k >= 0 && c_.exact() && c_.exact_value() >= 0 &&
               (cap_ >= kHiInf || c_.exact_value() <= cap_);
    }

    const LaurentSeries& operator()(int k) {
        auto it = cache_.find(k);
        if (it != cache_.end()) return it->second;
        if (k > 0) {
            ensure_base();
            int j = k;
            while (!cache_.count(j)) --j;
            for (; j < k; ++j) {
                LaurentSeries next = cache_.at(j) * base_;
                if (!exact_for(k)) next = capped(next, alpha_, cap_);
                cache_.emplace(j + 1, std::move(next));
            }
        } else {
            if (cap_ >= kHiInf)
                throw PrecisionError(
                    "gamma of a negative power is an infinite series; a window is required");
            // Invert base^m on a deepened box: knowing X^m * u through degree
            // D determines the inverse only through D - 2m.
            for (int j = k; j < 0; ++j)
                if (!cache_.count(j)) {
                    int m = -j;
                    int deep = cap_ + 2 * m;
                    LaurentSeries tb = gamma_base(ctx_, alpha_, c_, deep);
                    LaurentSeries pw = LaurentSeries::constant(ctx_, 1);
                    for (int i = 0; i < m; ++i) pw = capped(pw * tb, alpha_, deep);
                    Window claim(std::vector<int>(ctx_->dim(), 0),
                                 std::vector<int>(ctx_->dim(), kHiInf));
                    claim.lo[alpha_] = m;
                    claim.hi[alpha_] = deep;
                    pw.mark_windowed(claim);
                    Window want(std::vector<int>(ctx_->dim(), 0),
                                std::vector<int>(ctx_->dim(), kHiInf / 2));
                    want.hi[alpha_] = cap_;
                    LaurentSeries inv = invert(pw, want);
                    LaurentSeries flat(ctx_);
                    for (const auto& [e, c] : inv.terms()) flat.set_coeff(e, c);
                    cache_.emplace(j, capped(flat, alpha_, cap_));
                }
        }
        return cache_.at(k);
    }

  private:
    void ensure_base() {
        if (base_ready_) return;
        if (c_.exact() && c_.exact_value() >= 0) {
            std::int64_t cv = c_.exact_value();
            int top = (cap_ >= kHiInf || cv <= cap_) ? static_cast<int>(cv) : cap_;
            base_ = gamma_base(ctx_, alpha_, c_, top);
        } else {
            if (cap_ >= kHiInf)
                throw PrecisionError(
                    "gamma expansion is an infinite series; a window is required");
            base_ = gamma_base(ctx_, alpha_, c_, cap_);
        }
        base_ready_ = true;
    }

    CtxPtr ctx_;
    std::size_t alpha_;
    PadicExponent c_;
    int cap_;
    bool base_ready_ = false;
    LaurentSeries base_{ctx_};
    std::map<int, LaurentSeries> cache_;
};

}  // namespace detail

// Simultaneous substitution X_alpha -> (1+X_alpha)^{c_alpha} - 1. The window
// argument bounds the expansion of the infinite directions; it may be omitted
// when every substitution is finite (integer c >= 0, no negative exponents in
// the moved variables).
inline LaurentSeries gamma_apply(const LaurentSeries& f, const GammaElement& g,
                                 const std::optional<Window>& win = std::nullopt) {
    const CtxPtr& ctx = f.ctx();
    require_same_ctx(*ctx, *g.ctx());
    const std::size_t d = ctx->dim();

    // per-variable degree ceilings for the computation
    std::vector<int> cap(d, kHiInf);
    auto fhi = f.effective_hi();
    auto flo = f.effective_lo();
    for (std::size_t a = 0; a < d; ++a) {
        int want = win ? win->hi[a] : kHiInf;
        cap[a] = std::min(want, fhi[a]);
    }

    std::vector<std::optional<detail::GammaPowers>> powers(d);
    for (std::size_t a = 0; a < d; ++a)
        if (!g.trivial_at(a)) powers[a].emplace(ctx, a, g.exponent(a), cap[a]);

    bool exact = f.exact();
    LaurentSeries out(ctx);
    for (const auto& [e, c] : f.terms()) {
        ExpVec rest = e;
        for (std::size_t a = 0; a < d; ++a)
            if (powers[a]) rest[a] = 0;
        LaurentSeries term = LaurentSeries::monomial(ctx, rest) * Scalar::raw(ctx, c);
        for (std::size_t a = 0; a < d; ++a)
            if (powers[a] && e[a] != 0) {
                if (!powers[a]->exact_for(e[a])) exact = false;
                term = term * (*powers[a])(e[a]);
            }
        out = out + term;
    }

    if (!exact) {
        Window w;
        w.lo = flo;  // gamma(X^k) = c^k X^k + strictly higher terms
        w.hi = cap;
        out.mark_windowed(w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// The involution #: (1+X_alpha) -> (1+X_alpha)^{-1} in every variable, i.e.
// X_alpha -> -X_alpha/(1+X_alpha). Exact on nonpositive supports (there
// X^k(1+X)^{-k} is a polynomial); positive exponents need a window.
// ---------------------------------------------------------------------------

inline LaurentSeries sharp(const LaurentSeries& f,
                           const std::optional<Window>& win = std::nullopt) {
    const CtxPtr& ctx = f.ctx();
    const std::size_t d = ctx->dim();

    std::vector<int> cap(d, kHiInf);
    auto fhi = f.effective_hi();
    auto flo = f.effective_lo();
    for (std::size_t a = 0; a < d; ++a) cap[a] = std::min(win ? win->hi[a] : kHiInf, fhi[a]);

    // factor table: X_alpha^k -> (-1)^k X^k (1+X)^{-k}, truncated to cap
    std::vector<std::map<int, LaurentSeries>> table(d);
    auto factor = [&](std::size_t a, int k) -> const LaurentSeries& {
        auto it = table[a].find(k);
        if (it != table[a].end()) return it->second;
        if (k > 0 && cap[a] >= kHiInf)
            throw PrecisionError("sharp of a positive power needs a window");
        auto cexp = PadicExponent::integer(ctx, -static_cast<std::int64_t>(k));
        int jmax = k <= 0 ? -k : cap[a] - k;  // negative: everything lands above cap
        LaurentSeries fac(ctx);
        for (int j = 0; j <= jmax; ++j) {
            ExpVec e(d, 0);
            e[a] = k + j;
            std::uint64_t b = binom_padic(cexp, j, ctx).residue();
            if (k % 2 != 0 && b != 0) b = ctx->pn() - b;  // (-1)^k
            fac.add_coeff(e, b);
        }
        return table[a].emplace(k, std::move(fac)).first->second;
    };

    bool exact = f.exact();
    LaurentSeries out(ctx);
    for (const auto& [e, c] : f.terms()) {
        LaurentSeries term = LaurentSeries::constant(ctx, 1) * Scalar::raw(ctx, c);
        for (std::size_t a = 0; a < d; ++a)
            if (e[a] != 0) {
                if (e[a] > 0) exact = false;
                term = term * factor(a, e[a]);
            }
        out = out + term;
    }

    if (!exact) {
        Window w;
        w.lo = flo;  // #(X^k) = (-1)^k X^k (1 + higher)
        w.hi = cap;
        out.mark_windowed(w);
    }
    return out;
}

}  // namespace pgk
