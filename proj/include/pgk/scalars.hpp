#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgk {

// ---------------------------------------------------------------------------
// Error taxonomy. Everything the library throws derives from std::runtime_error
// so callers can catch coarsely; the distinct types matter for tests and for
// the CLI's exit-code mapping.
// ---------------------------------------------------------------------------

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ContextError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Requested data that the stored precision / window cannot guarantee.
struct PrecisionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotAUnit : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotEtale : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct Unstable : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CapExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SyntaxError : std::runtime_error {
    std::size_t position;
    SyntaxError(const std::string& what, std::size_t pos)
        : std::runtime_error(what + " (at offset " + std::to_string(pos) + ")"),
          position(pos) {}
};
struct UnknownVariable : SyntaxError {
    using SyntaxError::SyntaxError;
};

// ---------------------------------------------------------------------------
// Modular helpers. Working moduli stay below 2^62, so a 128-bit intermediate
// is always enough.
// ---------------------------------------------------------------------------

inline std::uint64_t mulmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(a) * b) % m);
}

inline std::uint64_t addmod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
    std::uint64_t s = a + b;  // a,b < m <= 2^62: no wraparound
    return s >= m ? s - m : s;
}

inline std::uint64_t submod(std::uint64_t a, std::uint64_t b, std::uint64_t m) {
    return a >= b ? a - b : a + m - b;
}

inline std::uint64_t powmod(std::uint64_t a, std::uint64_t e, std::uint64_t m) {
    std::uint64_t r = 1 % m;
    a %= m;
    while (e) {
        if (e & 1) r = mulmod(r, a, m);
        a = mulmod(a, a, m);
        e >>= 1;
    }
    return r;
}

// Inverse of a unit mod m (m a prime power here). Extended Euclid.
inline std::uint64_t invmod(std::uint64_t a, std::uint64_t m) {
    std::int64_t t = 0, nt = 1;
    std::int64_t r = static_cast<std::int64_t>(m), nr = static_cast<std::int64_t>(a % m);
    while (nr != 0) {
        std::int64_t q = r / nr;
        std::int64_t tmp = t - q * nt;
        t = nt;
        nt = tmp;
        tmp = r - q * nr;
        r = nr;
        nr = tmp;
    }
    if (r != 1) throw NotAUnit("invmod: argument shares a factor with the modulus");
    if (t < 0) t += static_cast<std::int64_t>(m);
    return static_cast<std::uint64_t>(t);
}

// p-adic valuation of a residue r mod p^level; returns level for r == 0
// (the residue carries no information beyond that point).
inline unsigned residue_valuation(std::uint64_t r, std::uint64_t p, unsigned level) {
    if (r == 0) return level;
    unsigned v = 0;
    while (r % p == 0) {
        r /= p;
        ++v;
    }
    return v;
}

// ---------------------------------------------------------------------------
// PrecCtx: the ambient arithmetic context. p an odd prime, coefficients live
// in Z/p^n, and `slack` extra working digits back the p-adic exponent
// arithmetic (binomials of non-integer exponents lose v_p(k!) digits; the
// context must be built with slack >= v_p(k!) for every binomial it will be
// asked for).
// ---------------------------------------------------------------------------

class PrecCtx {
  public:
    PrecCtx(std::uint64_t p, unsigned n, std::vector<std::string> vars, unsigned slack = 0)
        : p_(p), n_(n), slack_(slack), vars_(std::move(vars)) {
        if (p < 3) throw DomainError("p must be an odd prime (p = 2 is out of scope)");
        if (!is_prime(p)) throw DomainError("p must be prime");
        if (n < 1) throw DomainError("coefficient precision n must be >= 1");
        if (vars_.empty()) throw DomainError("variable set must be nonempty");
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            if (vars_[i].empty()) throw DomainError("variable names must be nonempty");
            for (std::size_t j = i + 1; j < vars_.size(); ++j)
                if (vars_[i] == vars_[j]) throw DomainError("duplicate variable name: " + vars_[i]);
        }
        pn_ = checked_pow(p, n);
        pwork_ = checked_pow(p, n + slack);
    }

    std::uint64_t p() const { return p_; }
    unsigned n() const { return n_; }
    unsigned slack() const { return slack_; }
    std::uint64_t pn() const { return pn_; }
    std::uint64_t pwork() const { return pwork_; }
    const std::vector<std::string>& vars() const { return vars_; }
    std::size_t dim() const { return vars_.size(); }

    std::size_t var_index(const std::string& name) const {
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i] == name) return i;
        throw UnknownVariable("unknown variable: " + name, 0);
    }

    bool operator==(const PrecCtx& o) const {
        return p_ == o.p_ && n_ == o.n_ && slack_ == o.slack_ && vars_ == o.vars_;
    }
    bool operator!=(const PrecCtx& o) const { return !(*this == o); }

    // p^k for 0 <= k <= n (tabulating would be overkill).
    std::uint64_t ppow(unsigned k) const {
        std::uint64_t r = 1;
        while (k--) r *= p_;
        return r;
    }

    static bool is_prime(std::uint64_t v) {
        if (v < 2) return false;
        for (std::uint64_t d = 2; d * d <= v; ++d)
            if (v % d == 0) return false;
        return true;
    }

  private:
    static std::uint64_t checked_pow(std::uint64_t p, unsigned e) {
        std::uint64_t r = 1;
        const std::uint64_t cap = std::uint64_t(1) << 62;
        while (e--) {
            if (r > cap / p) throw DomainError("p^(n+slack) exceeds the 62-bit working range");
            r *= p;
        }
        return r;
    }

    std::uint64_t p_;
    unsigned n_;
    unsigned slack_;
    std::vector<std::string> vars_;
    std::uint64_t pn_;
    std::uint64_t pwork_;
};

using CtxPtr = std::shared_ptr<const PrecCtx>;

inline CtxPtr make_ctx(std::uint64_t p, unsigned n, std::vector<std::string> vars,
                       unsigned slack = 0) {
    return std::make_shared<PrecCtx>(p, n, std::move(vars), slack);
}

inline void require_same_ctx(const PrecCtx& a, const PrecCtx& b) {
    if (a != b) throw ContextError("mixed arithmetic contexts");
}

// ---------------------------------------------------------------------------
// Scalar: an element of Z/p^n.
// ---------------------------------------------------------------------------

class Scalar {
  public:
    static constexpr int val_infinity = std::numeric_limits<int>::max();

    Scalar(CtxPtr ctx, std::int64_t v) : ctx_(std::move(ctx)) {
        std::int64_t m = static_cast<std::int64_t>(ctx_->pn());
        std::int64_t r = v % m;
        if (r < 0) r += m;
        v_ = static_cast<std::uint64_t>(r);
    }

    std::uint64_t residue() const { return v_; }
    const CtxPtr& ctx() const { return ctx_; }
    bool is_zero() const { return v_ == 0; }
    bool is_unit() const { return v_ % ctx_->p() != 0; }

    // v_p; val_infinity for 0.
    int valuation() const {
        if (v_ == 0) return val_infinity;
        return static_cast<int>(residue_valuation(v_, ctx_->p(), ctx_->n()));
    }

    Scalar operator+(const Scalar& o) const {
        check(o);
        return raw(ctx_, addmod(v_, o.v_, ctx_->pn()));
    }
    Scalar operator-(const Scalar& o) const {
        check(o);
        return raw(ctx_, submod(v_, o.v_, ctx_->pn()));
    }
    Scalar operator*(const Scalar& o) const {
        check(o);
        return raw(ctx_, mulmod(v_, o.v_, ctx_->pn()));
    }
    Scalar operator-() const { return raw(ctx_, v_ == 0 ? 0 : ctx_->pn() - v_); }

    Scalar inverse() const {
        if (!is_unit()) throw NotAUnit("scalar is not a unit mod p");
        return raw(ctx_, invmod(v_, ctx_->pn()));
    }

    Scalar pow(std::int64_t e) const {
        if (e < 0) return inverse().pow(-e);
        return raw(ctx_, powmod(v_, static_cast<std::uint64_t>(e), ctx_->pn()));
    }

    bool operator==(const Scalar& o) const {
        check(o);
        return v_ == o.v_;
    }
    bool operator!=(const Scalar& o) const { return !(*this == o); }

    // Balanced representative: minimal absolute value, ties resolved positive.
    std::int64_t balanced() const {
        std::uint64_t m = ctx_->pn();
        if (2 * v_ > m) return static_cast<std::int64_t>(v_) - static_cast<std::int64_t>(m);
        return static_cast<std::int64_t>(v_);
    }

    std::string to_string() const { return std::to_string(balanced()); }

    static Scalar raw(CtxPtr ctx, std::uint64_t residue) {
        Scalar s(std::move(ctx));
        s.v_ = residue;
        return s;
    }

  private:
    explicit Scalar(CtxPtr ctx) : ctx_(std::move(ctx)), v_(0) {}
    void check(const Scalar& o) const { require_same_ctx(*ctx_, *o.ctx_); }

    CtxPtr ctx_;
    std::uint64_t v_;
};

// ---------------------------------------------------------------------------
// PadicExponent: a p-adic integer used as a substitution exponent, known
// either exactly (an honest integer) or as a residue mod p^{n+slack}.
// ---------------------------------------------------------------------------

class PadicExponent {
  public:
    static PadicExponent integer(CtxPtr ctx, std::int64_t v) {
        PadicExponent e(std::move(ctx));
        e.exact_ = true;
        e.value_ = v;
        std::int64_t m = static_cast<std::int64_t>(e.ctx_->pwork());
        std::int64_t r = v % m;
        if (r < 0) r += m;
        e.approx_ = static_cast<std::uint64_t>(r);
        return e;
    }

    static PadicExponent approximate(CtxPtr ctx, std::uint64_t residue_mod_pwork) {
        PadicExponent e(std::move(ctx));
        e.exact_ = false;
        e.value_ = 0;
        e.approx_ = residue_mod_pwork % e.ctx_->pwork();
        return e;
    }

    const CtxPtr& ctx() const { return ctx_; }
    bool exact() const { return exact_; }
    std::int64_t exact_value() const {
        if (!exact_) throw DomainError("exponent is not integer-exact");
        return value_;
    }
    std::uint64_t approx() const { return approx_; }
    bool is_unit() const { return approx_ % ctx_->p() != 0; }
    bool is_one() const { return exact_ && value_ == 1; }

    Scalar as_scalar() const { return Scalar::raw(ctx_, approx_ % ctx_->pn()); }

    PadicExponent operator*(const PadicExponent& o) const {
        require_same_ctx(*ctx_, *o.ctx_);
        if (exact_ && o.exact_) {
            // guard: exponents in practice stay tiny, but keep the product honest
            __int128 prod = static_cast<__int128>(value_) * o.value_;
            if (prod <= std::numeric_limits<std::int64_t>::max() &&
                prod >= std::numeric_limits<std::int64_t>::min())
                return integer(ctx_, static_cast<std::int64_t>(prod));
        }
        return approximate(ctx_, mulmod(approx_, o.approx_, ctx_->pwork()));
    }

  private:
    explicit PadicExponent(CtxPtr ctx) : ctx_(std::move(ctx)) {}
    CtxPtr ctx_;
    bool exact_ = false;
    std::int64_t value_ = 0;
    std::uint64_t approx_ = 0;
};

// ---------------------------------------------------------------------------
// Teichmuller lift: the unique (p-1)-st root of unity congruent to a mod p.
// x -> x^p gains one guaranteed digit per step, so n+slack steps from a
// one-digit seed land on the full working precision.
// ---------------------------------------------------------------------------

inline std::uint64_t teichmuller_residue(std::uint64_t a, const PrecCtx& ctx) {
    std::uint64_t m = ctx.pwork();
    std::uint64_t x = a % m;
    if (x % ctx.p() == 0) throw DomainError("teichmuller: argument not a unit mod p");
    for (unsigned i = 0; i < ctx.n() + ctx.slack(); ++i) x = powmod(x, ctx.p(), m);
    return x;
}

inline Scalar teichmuller(std::uint64_t a, const CtxPtr& ctx) {
    return Scalar::raw(ctx, teichmuller_residue(a, *ctx) % ctx->pn());
}

inline PadicExponent teichmuller_exponent(std::uint64_t a, const CtxPtr& ctx) {
    return PadicExponent::approximate(ctx, teichmuller_residue(a, *ctx));
}

inline std::uint64_t smallest_primitive_root(std::uint64_t p) {
    for (std::uint64_t g = 2; g < p; ++g) {
        // order of g divides p-1; primitive iff no proper divisor works
        bool primitive = true;
        for (std::uint64_t d = 1; d < p - 1 && primitive; ++d)
            if ((p - 1) % d == 0 && powmod(g, d, p) == 1) primitive = false;
        if (primitive) return g;
    }
    throw DomainError("no primitive root found (p not prime?)");
}

// ---------------------------------------------------------------------------
// p-adic binomial coefficient C(c, k) in Z/p^n.
//
// Integer-exact c: numerator and denominator factors are stripped of their
// p-parts as honest integers, so the result is exact with no slack needed.
// Approximate c: the product prod_{i<k}(c-i) is formed mod p^{n+slack} and
// divided by k! = p^w * unit; this costs w = v_p(k!) guaranteed digits, hence
// the slack >= w requirement.
// ---------------------------------------------------------------------------

namespace detail {

inline unsigned factorial_valuation(std::uint64_t k, std::uint64_t p) {
    unsigned v = 0;
    while (k) {
        k /= p;
        v += static_cast<unsigned>(k);
    }
    return v;
}

// unit part of k! mod m (m a power of p)
inline std::uint64_t factorial_unit(std::uint64_t k, std::uint64_t p, std::uint64_t m) {
    std::uint64_t u = 1 % m;
    for (std::uint64_t j = 2; j <= k; ++j) {
        std::uint64_t f = j;
        while (f % p == 0) f /= p;
        u = mulmod(u, f % m, m);
    }
    return u;
}

inline std::uint64_t binom_nonneg_exact(std::uint64_t c, std::uint64_t k, const PrecCtx& ctx) {
    if (k > c) return 0;
    if (k > c - k) k = c - k;
    const std::uint64_t p = ctx.p(), m = ctx.pn();
    std::uint64_t unit = 1 % m;
    long val = 0;
    for (std::uint64_t i = 1; i <= k; ++i) {
        std::uint64_t num = c - k + i, den = i;
        while (num % p == 0) {
            num /= p;
            ++val;
        }
        while (den % p == 0) {
            den /= p;
            --val;
        }
        unit = mulmod(unit, num % m, m);
        unit = mulmod(unit, invmod(den % m, m), m);
    }
    if (val >= static_cast<long>(ctx.n())) return 0;
    return mulmod(unit, ctx.ppow(static_cast<unsigned>(val)), m);
}

}  // namespace detail

inline Scalar binom_padic(const PadicExponent& c, std::int64_t k, const CtxPtr& ctx) {
    require_same_ctx(*c.ctx(), *ctx);
    if (k < 0) throw DomainError("binom_padic: k must be nonnegative");
    if (k == 0) return Scalar::raw(ctx, 1 % ctx->pn());
    const std::uint64_t kk = static_cast<std::uint64_t>(k);

    if (c.exact()) {
        std::int64_t cv = c.exact_value();
        if (cv >= 0) return Scalar::raw(ctx, detail::binom_nonneg_exact(
                                                 static_cast<std::uint64_t>(cv), kk, *ctx));
        // C(c,k) = (-1)^k C(k-c-1, k)
        std::uint64_t top = static_cast<std::uint64_t>(k - cv - 1);
        std::uint64_t b = detail::binom_nonneg_exact(top, kk, *ctx);
        if (k % 2 == 1 && b != 0) b = ctx->pn() - b;
        return Scalar::raw(ctx, b);
    }

    const unsigned w = detail::factorial_valuation(kk, ctx->p());
    if (w > ctx->slack())
        throw PrecisionError("binom_padic: v_p(k!) = " + std::to_string(w) +
                             " exceeds slack " + std::to_string(ctx->slack()));
    const std::uint64_t mw = ctx->pwork();
    std::uint64_t prod = 1 % mw;
    std::uint64_t cc = c.approx();
    for (std::uint64_t i = 0; i < kk; ++i)
        prod = mulmod(prod, submod(cc, i % mw, mw), mw);
    std::uint64_t pw = 1;
    for (unsigned i = 0; i < w; ++i) pw *= ctx->p();
    if (prod % pw != 0)
        throw PrecisionError("binom_padic: numerator not divisible by v_p(k!) power");
    std::uint64_t q = prod / pw;
    std::uint64_t funit = detail::factorial_unit(kk, ctx->p(), mw);
    q = mulmod(q, invmod(funit, mw), mw);
    return Scalar::raw(ctx, q % ctx->pn());
}

}  // namespace pgk
