#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "pgk/pgmodule.hpp"
#include "pgk/zpn_linalg.hpp"

namespace pgk {

// ---------------------------------------------------------------------------
// Signed Koszul complexes for the commuting operator families. Terms are
// indexed by subsets of the variable set (pairs of subsets for the two total
// complexes); differentials enter a new variable β with the sign conventions
//   ε(S,β) = #{α ∈ S : α < β}        (φ- and γ-type columns)
//   η(S,β) = #{α ∈ Δ∖S : α < β}      (ψ-type columns)
// which make the complex pairing adjoint without correction factors.
// ---------------------------------------------------------------------------

enum class Flavor { Phi, Psi, Psi0, Gamma, PhiGammaTotal, PsiGammaTotal };

inline bool is_total(Flavor f) {
    return f == Flavor::PhiGammaTotal || f == Flavor::PsiGammaTotal;
}
inline bool uses_psi(Flavor f) {
    return f == Flavor::Psi || f == Flavor::Psi0 || f == Flavor::PsiGammaTotal;
}

struct DiffOp {
    enum Kind { OneMinusPhi, OneMinusPsi, PsiRaw, OneMinusGamma } kind;
    std::size_t alpha;
};

struct KTerm {
    unsigned a = 0;  // φ/ψ-direction subset mask
    unsigned b = 0;  // γ-direction subset mask (totals only)
    bool operator<(const KTerm& o) const { return a != o.a ? a < o.a : b < o.b; }
    bool operator==(const KTerm& o) const { return a == o.a && b == o.b; }
};

struct Arrow {
    std::size_t src, dst;  // indices into the degree-r and degree-(r+1) term lists
    int sign;              // ±1
    DiffOp op;
};

namespace detail {
inline int eps_sign(unsigned mask, std::size_t beta) {
    unsigned below = mask & ((1u << beta) - 1u);
    return std::popcount(below) % 2 == 0 ? 1 : -1;
}
inline int eta_sign(unsigned mask, std::size_t beta, std::size_t dim) {
    unsigned complement = ~mask & ((1u << dim) - 1u);
    return eps_sign(complement, beta);
}
}  // namespace detail

class KoszulComplex {
public:
    KoszulComplex(Flavor flavor, PhiGammaModule mod)
        : flavor_(flavor), mod_(std::move(mod)), dim_(mod_.ctx()->dim()) {
        if (uses_psi(flavor_))
            for (bool ok : etale_check(mod_))
                if (!ok) throw NotEtale("psi-type complexes need an etale module");
        build_terms();
        build_arrows();
    }

    Flavor flavor() const { return flavor_; }
    const PhiGammaModule& module() const { return mod_; }
    std::size_t dim() const { return dim_; }
    std::size_t top_degree() const { return terms_.size() - 1; }
    const std::vector<KTerm>& terms(std::size_t r) const { return terms_.at(r); }
    const std::vector<Arrow>& arrows_from(std::size_t r) const { return arrows_.at(r); }

private:
    void build_terms() {
        const unsigned full = (1u << dim_) - 1u;
        const std::size_t top = is_total(flavor_) ? 2 * dim_ : dim_;
        terms_.assign(top + 1, {});
        if (is_total(flavor_)) {
            for (unsigned a = 0; a <= full; ++a)
                for (unsigned b = 0; b <= full; ++b)
                    terms_[static_cast<std::size_t>(std::popcount(a) + std::popcount(b))]
                        .push_back({a, b});
        } else {
            for (unsigned a = 0; a <= full; ++a)
                terms_[static_cast<std::size_t>(std::popcount(a))].push_back({a, 0});
        }
        for (auto& level : terms_) std::sort(level.begin(), level.end());
    }

    std::size_t term_index(std::size_t r, KTerm t) const {
        const auto& level = terms_[r];
        auto it = std::lower_bound(level.begin(), level.end(), t);
        return static_cast<std::size_t>(it - level.begin());
    }

    void build_arrows() {
        const std::size_t top = top_degree();
        arrows_.assign(top, {});
        DiffOp::Kind first_kind = flavor_ == Flavor::Psi0  ? DiffOp::PsiRaw
                                  : uses_psi(flavor_)      ? DiffOp::OneMinusPsi
                                  : flavor_ == Flavor::Gamma ? DiffOp::OneMinusGamma
                                                             : DiffOp::OneMinusPhi;
        for (std::size_t r = 0; r < top; ++r) {
            for (std::size_t s = 0; s < terms_[r].size(); ++s) {
                KTerm t = terms_[r][s];
                for (std::size_t beta = 0; beta < dim_; ++beta) {
                    if (!(t.a & (1u << beta))) {
                        KTerm u{t.a | (1u << beta), t.b};
                        int sign = uses_psi(flavor_)
                                       ? detail::eta_sign(t.a, beta, dim_)
                                       : detail::eps_sign(t.a, beta);
                        arrows_[r].push_back(
                            {s, term_index(r + 1, u), sign, {first_kind, beta}});
                    }
                    if (is_total(flavor_) && !(t.b & (1u << beta))) {
                        KTerm u{t.a, t.b | (1u << beta)};
                        int sign = detail::eps_sign(t.b, beta) *
                                   (std::popcount(t.a) % 2 == 0 ? 1 : -1);
                        arrows_[r].push_back(
                            {s, term_index(r + 1, u), sign, {DiffOp::OneMinusGamma, beta}});
                    }
                }
            }
        }
    }

    Flavor flavor_;
    PhiGammaModule mod_;
    std::size_t dim_;
    std::vector<std::vector<KTerm>> terms_;
    std::vector<std::vector<Arrow>> arrows_;
};

inline KoszulComplex build(Flavor flavor, PhiGammaModule mod) {
    return KoszulComplex(flavor, std::move(mod));
}

inline std::vector<ModuleElement> zero_tuple(const KoszulComplex& K, std::size_t r) {
    ModuleElement z(static_cast<std::size_t>(K.module().rank()),
                    LaurentSeries::zero(K.module().ctx()));
    return std::vector<ModuleElement>(K.terms(r).size(), z);
}

inline std::vector<ModuleElement> apply_differential(const KoszulComplex& K, std::size_t r,
                                                     const std::vector<ModuleElement>& x,
                                                     const std::optional<Window>& win = {}) {
    if (x.size() != K.terms(r).size())
        throw ContextError("element tuple does not match the degree's term count");
    const PhiGammaModule& M = K.module();
    auto out = zero_tuple(K, r + 1);
    auto is_zero_elem = [](const ModuleElement& v) {
        for (const auto& s : v)
            if (!s.is_zero() || !s.exact()) return false;
        return true;
    };
    // psi divides certification depth by p, so its expansions must run deeper
    // for the output to stay certified to the caller's ceiling
    std::optional<Window> win_psi = win;
    if (win_psi) {
        const CtxPtr& ctx = M.ctx();
        const int drift = 2 * static_cast<int>((ctx->n() - 1) * (ctx->p() - 1));
        for (auto& h : win_psi->hi)
            h = static_cast<int>(ctx->p()) * (h + 2) + drift;
    }
    for (const Arrow& ar : K.arrows_from(r)) {
        const ModuleElement& src = x[ar.src];
        if (is_zero_elem(src)) continue;
        ModuleElement piece;
        switch (ar.op.kind) {
            case DiffOp::OneMinusPhi: {
                ModuleElement t = mod_phi(M, src, ar.op.alpha);
                piece = src;
                for (std::size_t i = 0; i < piece.size(); ++i) piece[i] = piece[i] - t[i];
                break;
            }
            case DiffOp::OneMinusPsi: {
                ModuleElement t = mod_psi(M, src, ar.op.alpha, win_psi);
                piece = src;
                for (std::size_t i = 0; i < piece.size(); ++i) piece[i] = piece[i] - t[i];
                break;
            }
            case DiffOp::PsiRaw:
                piece = mod_psi(M, src, ar.op.alpha, win_psi);
                break;
            case DiffOp::OneMinusGamma: {
                ModuleElement t = mod_gamma(M, src, ar.op.alpha, win);
                piece = src;
                for (std::size_t i = 0; i < piece.size(); ++i) piece[i] = piece[i] - t[i];
                break;
            }
        }
        ModuleElement& dst = out[ar.dst];
        for (std::size_t i = 0; i < dst.size(); ++i)
            dst[i] = ar.sign > 0 ? dst[i] + piece[i] : dst[i] - piece[i];
    }
    for (auto& v : out) v = mod_reduce(M, std::move(v));
    return out;
}

// Σ_S {x_{Δ∖S}, y_S}: the degree-r copies of the dual-side complex pair with
// the complementary copies of the module side, all other pairs orthogonal.
inline Scalar complex_pairing(const PhiGammaModule& M, std::size_t r,
                              const std::vector<ModuleElement>& y_dual,
                              const std::vector<ModuleElement>& x) {
    const std::size_t d = M.ctx()->dim();
    if (r > d) throw ContextError("degree exceeds the variable count");
    const unsigned full = (1u << d) - 1u;
    std::vector<unsigned> masks_r, masks_c;
    for (unsigned m = 0; m <= full; ++m) {
        if (static_cast<std::size_t>(std::popcount(m)) == r) masks_r.push_back(m);
        if (static_cast<std::size_t>(std::popcount(m)) == d - r) masks_c.push_back(m);
    }
    if (y_dual.size() != masks_r.size() || x.size() != masks_c.size())
        throw ContextError("tuple sizes do not match the complex degrees");
    Scalar acc(M.ctx(), 0);
    for (std::size_t i = 0; i < masks_r.size(); ++i) {
        unsigned partner = full & ~masks_r[i];
        std::size_t j = static_cast<std::size_t>(
            std::lower_bound(masks_c.begin(), masks_c.end(), partner) - masks_c.begin());
        acc = acc + pairing(M, x[j], y_dual[i]);
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Truncation to finite boxes and cohomology of the assembled matrices.
//
// Every Koszul term owns its own box. Starting from the reporting box, the
// pole depth of a variable deepens by a factor p plus an (n−1)(p−1) fringe
// once that variable's φ-leg is done; on ψ-type complexes the degree cap
// stretches the same way while the ψ-leg is still pending. Sized this way,
// no differential ever pushes support below a target floor — the deep image
// of a pole monomial is kept, never clipped — and whatever a ψ-leg contracts
// back down stays beyond the next term's cap. Two consequences are built in
// rather than patched: d∘d = 0 holds exactly on the assembled matrices, and
// projection loss can only happen on the cap side, where the dropped tails
// carry no residue and pair to zero against every dual box.
//
// The deepened and stretched coordinates exist as scaffolding for honest
// arrows — they carry the boundaries that cover deep images — but kernel
// vectors supported only out there are truncation artifacts that no
// enclosing box ever confirms. Every degree's report is therefore cut to
// the classes with a representative inside the reporting-box copy of each
// term:  h = rank[S | d_prev] − rank(d·S) − rank(d_prev),  where S embeds
// the reporting-box monomials into the degree's coordinates. On a degree
// whose terms all sit on the reporting box itself S spans everything and
// the formula collapses to the classical one.
//
// Total flavors of a module carrying torsion data live on the C_Δ-invariant
// part: each term's basis is the column-reduced image of c_delta_projector
// over its box monomials, and every differential image is compressed through
// the projector matrix before being solved in that echelon span. The
// projector commutes with every arrow, so compression is the identity on
// images that never left the box; what it redirects is exactly the boundary
// smear of the truncated basis vectors, keeping the solve residue-free.
// For rank-one modules with constant structure matrices the projector, the
// bases and the arrows all factorize variable by variable, and the assembly
// runs on tensor products of per-variable interval bases instead of the
// full product box.
// ---------------------------------------------------------------------------

struct TruncationBox {
    std::vector<int> pole, cap;  // exponents live in [-pole_α, cap_α]

    static TruncationBox uniform(const CtxPtr& ctx, int c, int N) {
        if (c < 0 || N < 0) throw DomainError("truncation box wants c, N >= 0");
        return {std::vector<int>(ctx->dim(), c), std::vector<int>(ctx->dim(), N)};
    }
    std::size_t dim() const { return pole.size(); }
    long monomials() const {
        long m = 1;
        for (std::size_t i = 0; i < pole.size(); ++i)
            m *= std::max(pole[i] + cap[i] + 1, 0);
        return m;
    }
    bool contains(const ExpVec& e) const {
        for (std::size_t i = 0; i < e.size(); ++i)
            if (e[i] < -pole[i] || e[i] > cap[i]) return false;
        return true;
    }
    long offset(const ExpVec& e) const {
        long o = 0;
        for (std::size_t i = 0; i < e.size(); ++i)
            o = o * (pole[i] + cap[i] + 1) + (e[i] + pole[i]);
        return o;
    }
    bool operator==(const TruncationBox& o) const { return pole == o.pole && cap == o.cap; }
};

// Box of one Koszul term: poles deepen once the φ-leg of a variable is done,
// caps stretch while its ψ-leg is pending, γ legs change nothing.
inline TruncationBox term_box(Flavor fl, const TruncationBox& base, KTerm t, const CtxPtr& ctx) {
    TruncationBox b = base;
    const int p = static_cast<int>(ctx->p());
    const int fringe = static_cast<int>((ctx->n() - 1) * (ctx->p() - 1));
    for (std::size_t i = 0; i < b.dim(); ++i) {
        const bool done = (t.a >> i) & 1u;
        if (uses_psi(fl)) {
            if (!done) b.cap[i] = p * b.cap[i] + 2 * fringe;
        } else if (fl != Flavor::Gamma) {
            if (done) b.pole[i] = p * b.pole[i] + fringe;
        }
    }
    return b;
}

struct AssembledComplex {
    std::vector<SparseMatrix> d;          // d[r]: block matrix degree r -> r+1
    std::vector<std::vector<bool>> loss;  // loss[r][col]: column suffered projection loss
    TruncationBox box;                    // reporting box
    std::vector<std::vector<TruncationBox>> term_box;  // [r][t]
    std::vector<std::vector<long>> term_rank;          // [r][t] basis size
    std::vector<std::vector<long>> term_base;          // [r][t] coordinate offset
    std::vector<long> space;                           // per degree
    std::vector<SparseMatrix> inner;   // [r] reporting-box images in degree coordinates
    std::vector<bool> inner_identity;  // [r] every term is the reporting box itself
};

namespace detail {

inline std::vector<ExpVec> box_monomials(const TruncationBox& box) {
    std::vector<ExpVec> exps;
    const long m = box.monomials();
    if (m == 0) return exps;
    exps.reserve(static_cast<std::size_t>(m));
    ExpVec e(box.dim());
    for (std::size_t i = 0; i < box.dim(); ++i) e[i] = -box.pole[i];
    bool more = true;
    while (more) {
        exps.push_back(e);
        more = false;
        std::size_t i = box.dim();
        while (i > 0) {
            --i;
            if (e[i] < box.cap[i]) {
                ++e[i];
                for (std::size_t j = i + 1; j < box.dim(); ++j) e[j] = -box.pole[j];
                more = true;
                break;
            }
        }
    }
    return exps;
}

// Rows are appended in increasing offset order (terms() iterates
// lexicographically and offset is the lexicographic rank), so the sparse
// column stays sorted as long as blocks arrive in increasing row_base order.
inline void project_series(const LaurentSeries& f, const TruncationBox& box, SparseMatrix& mat,
                           long col, long row_base, bool& lost) {
    if (box.monomials() == 0) return;  // zero quotient: everything is structure
    if (!f.exact()) {
        // window lo is a support floor, so only the ceiling can hide data
        const Window& w = f.window();
        for (std::size_t i = 0; i < box.dim(); ++i)
            if (w.hi[i] < box.cap[i])
                throw PrecisionError("assembly window does not cover the truncation box");
    }
    auto& column = mat.col[static_cast<std::size_t>(col)];
    for (const auto& [e, c] : f.terms()) {
        if (c == 0) continue;
        if (box.contains(e)) column.emplace_back(row_base + box.offset(e), c);
        else lost = true;  // anything outside the box is projection loss
    }
}

// same projection, into a coordinate map for basis reduction
inline void project_to_map(const LaurentSeries& f, const TruncationBox& box, long row_base,
                           std::map<long, std::uint64_t>& w, bool& lost) {
    if (!f.exact()) {
        const Window& win = f.window();
        for (std::size_t i = 0; i < box.dim(); ++i)
            if (win.hi[i] < box.cap[i])
                throw PrecisionError("assembly window does not cover the truncation box");
    }
    for (const auto& [e, c] : f.terms()) {
        if (c == 0) continue;
        if (box.contains(e)) w[row_base + box.offset(e)] = c;
        else lost = true;
    }
}

// Echelon basis of the C_Δ-invariant part of one Koszul term copy. Pivot
// rows are unique, every pivot is normalized to a pure power of p (unit part
// scaled away), and col_of_row inverts the pivot assignment. P keeps the raw
// projector column of every box monomial; column operations preserve span,
// so span(P) = span(V) and solving a P-image in V never leaves a residue.
struct ReducedBasis {
    SparseMatrix V;
    std::vector<std::uint64_t> pivot;  // leading value of each column
    std::vector<long> col_of_row;      // pivot column per leading row, -1 if none
    std::vector<std::vector<std::pair<long, std::uint64_t>>> P;  // projector matrix columns
};

using SparseCol = std::vector<std::pair<long, std::uint64_t>>;

// out = a + f·b for sorted sparse columns, zero entries dropped
inline void axpy(const SparseCol& a, std::uint64_t f, const SparseCol& b, const Barrett& br,
                 SparseCol& out) {
    out.clear();
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        long ra = i < a.size() ? a[i].first : std::numeric_limits<long>::max();
        long rb = j < b.size() ? b[j].first : std::numeric_limits<long>::max();
        long row = std::min(ra, rb);
        std::uint64_t v = 0;
        if (ra == row) v = a[i++].second;
        if (rb == row) v = br.reduce(v + br.reduce(f * b[j++].second));
        if (v != 0) out.emplace_back(row, v);
    }
}

// scale a column so its leading value becomes a pure p-power; returns it
inline std::uint64_t normalize_lead(SparseCol& c, std::uint64_t p, std::uint64_t pn,
                                    const Barrett& br) {
    std::uint64_t lead = c.front().second, pv = 1;
    while (lead % p == 0) {
        lead /= p;
        pv *= p;
    }
    const std::uint64_t s = invmod(lead, pn);
    if (s != 1)
        for (auto& [r, v] : c) v = br.reduce(v * s);
    return pv;
}

// Eliminate one incoming column against the echelon basis, growing it when a
// new pivot row appears; valuation-aware pivot swaps keep pivots minimal.
inline void echelon_insert(ReducedBasis& B, SparseCol cur, std::uint64_t p, std::uint64_t pn,
                           const Barrett& br) {
    SparseCol tmp;
    while (!cur.empty()) {
        const long r0 = cur.front().first;
        long& at = B.col_of_row[static_cast<std::size_t>(r0)];
        if (at < 0) {
            const std::uint64_t pv = normalize_lead(cur, p, pn, br);
            at = B.V.cols;
            B.pivot.push_back(pv);
            B.V.col.push_back(cur);
            ++B.V.cols;
            break;
        }
        SparseCol& pc = B.V.col[static_cast<std::size_t>(at)];
        std::uint64_t& ppow = B.pivot[static_cast<std::size_t>(at)];
        if (cur.front().second % ppow != 0) {
            // the incoming column has the smaller valuation: swap it in
            const std::uint64_t pv = normalize_lead(cur, p, pn, br);
            std::swap(cur, pc);
            ppow = pv;
        }
        const std::uint64_t f = br.reduce(pn - cur.front().second / ppow % pn);
        axpy(cur, f, pc, br, tmp);
        std::swap(cur, tmp);
    }
}

// Column-reduce the projector image of every box monomial: Gaussian
// elimination over Z/p^n with valuation-aware pivot swaps.
inline ReducedBasis projector_basis(const PhiGammaModule& M, const TruncationBox& box,
                                    const std::vector<ExpVec>& exps, const Window& win) {
    const CtxPtr& ctx = M.ctx();
    const std::uint64_t pn = ctx->pn(), p = ctx->p();
    const long d_rank = M.rank();
    const long E = static_cast<long>(exps.size());
    ReducedBasis B{SparseMatrix(d_rank * E, 0, pn), {}, std::vector<long>(d_rank * E, -1), {}};
    B.P.reserve(static_cast<std::size_t>(d_rank) * E);
    const Barrett br(pn);
    SparseCol cur;
    for (long i = 0; i < d_rank; ++i)
        for (long k = 0; k < E; ++k) {
            ModuleElement x(static_cast<std::size_t>(d_rank), LaurentSeries::zero(ctx));
            x[static_cast<std::size_t>(i)] =
                LaurentSeries::monomial(ctx, exps[static_cast<std::size_t>(k)]);
            ModuleElement y = c_delta_projector(M, x, win);
            cur.clear();
            for (long j = 0; j < d_rank; ++j)
                for (const auto& [e, c] : y[static_cast<std::size_t>(j)].terms())
                    if (c != 0 && box.contains(e)) cur.emplace_back(j * E + box.offset(e), c);
            B.P.push_back(cur);
            echelon_insert(B, std::move(cur), p, pn, br);
        }
    return B;
}

// Per-variable invariant basis over one exponent interval. For rank-one
// modules with constant structure matrices the C_Δ-average acts variable by
// variable, so the box basis is the tensor product of these interval bases.
inline ReducedBasis leg_basis(const PhiGammaModule& M, std::size_t alpha, int pole, int cap,
                              const Window& win) {
    const CtxPtr& ctx = M.ctx();
    const std::uint64_t pn = ctx->pn(), p = ctx->p();
    const long E = static_cast<long>(pole) + cap + 1;
    ReducedBasis B{SparseMatrix(E, 0, pn), {}, std::vector<long>(E, -1), {}};
    B.P.reserve(static_cast<std::size_t>(E));
    const Barrett br(pn);
    const unsigned red = static_cast<unsigned>(M.divisors()[0]);
    const LaurentSeries& tmat = M.torsion(alpha).T.at(0, 0);
    const GammaElement gtor = GammaElement::identity(ctx).with(alpha, M.torsion(alpha).omega);
    const Scalar avg = Scalar(ctx, static_cast<std::int64_t>(p) - 1).inverse();
    SparseCol cur;
    for (long k = 0; k < E; ++k) {
        ExpVec e(ctx->dim(), 0);
        e[alpha] = static_cast<int>(k) - pole;
        LaurentSeries x = LaurentSeries::monomial(ctx, e);
        LaurentSeries acc = x, power = x;
        for (std::uint64_t s = 1; s + 1 < p; ++s) {
            power = (tmat * gamma_apply(power, gtor, win)).reduced_mod(red);
            acc = acc + power;
        }
        acc = (acc * avg).reduced_mod(red);
        cur.clear();
        for (const auto& [ee, c] : acc.terms())
            if (c != 0 && ee[alpha] >= -pole && ee[alpha] <= cap)
                cur.emplace_back(ee[alpha] + pole, c);
        B.P.push_back(cur);
        echelon_insert(B, std::move(cur), p, pn, br);
    }
    return B;
}

// Express a vector of the echelon span in its basis coordinates; consumes z.
inline void solve_in_basis(const ReducedBasis& B, std::map<long, std::uint64_t>& z,
                           std::uint64_t pn, const Barrett& br, SparseCol& coords) {
    coords.clear();
    while (!z.empty()) {
        const auto [r0, v] = *z.begin();
        z.erase(z.begin());
        if (v == 0) continue;
        const long j = B.col_of_row[static_cast<std::size_t>(r0)];
        if (j < 0 || v % B.pivot[static_cast<std::size_t>(j)] != 0)
            throw ContextError("projector image escapes its own span");
        const std::uint64_t q = v / B.pivot[static_cast<std::size_t>(j)];
        coords.emplace_back(j, q);
        bool lead = true;
        for (const auto& [row, g] : B.V.col[static_cast<std::size_t>(j)]) {
            if (lead) {  // the leading row is already consumed
                lead = false;
                continue;
            }
            auto& slot = z[row];
            slot = br.reduce(slot + br.reduce((pn - q) * g));
            if (slot == 0) z.erase(row);
        }
    }
    std::sort(coords.begin(), coords.end());
}

// Re-project an in-box image through the projector matrix, then express it in
// the echelon basis. The solve is exact — span(P) = span(V) — so projection
// loss upstream (box escape) is the only dishonesty in the matrix entry.
inline void compress_to_basis(const ReducedBasis& B, const std::map<long, std::uint64_t>& w,
                              std::uint64_t pn, const Barrett& br, SparseCol& coords) {
    std::map<long, std::uint64_t> z;
    for (const auto& [r, v] : w)
        for (const auto& [row, g] : B.P[static_cast<std::size_t>(r)]) {
            auto& slot = z[row];
            slot = br.reduce(slot + br.reduce(v * g));
            if (slot == 0) z.erase(row);
        }
    solve_in_basis(B, z, pn, br, coords);
}

// Basis data of one term box: its monomials plus, on the invariant part, the
// reduced projector span. Shared between terms with equal boxes.
struct BoxBasis {
    std::vector<ExpVec> exps;
    ReducedBasis rb;
    long rank = 0;
};

inline bool is_constant(const LaurentSeries& f) {
    if (!f.exact()) return false;
    for (const auto& [e, c] : f.terms()) {
        if (c == 0) continue;
        for (int v : e)
            if (v != 0) return false;
    }
    return true;
}

// One arrow restricted to a single variable: target-basis coordinates of the
// arrow's action on every source basis vector, with cap-side truncation loss.
struct LegTransfer {
    SparseMatrix T;
    std::vector<bool> loss;
};

inline LegTransfer leg_transfer(const PhiGammaModule& M, std::size_t alpha, DiffOp::Kind kind,
                                const ReducedBasis& src, int spole, const ReducedBasis& dst,
                                int dpole, int dcap, const Window& win) {
    const CtxPtr& ctx = M.ctx();
    const std::uint64_t pn = ctx->pn();
    const Barrett br(pn);
    const unsigned red = static_cast<unsigned>(M.divisors()[0]);
    LegTransfer out{SparseMatrix(dst.V.cols, src.V.cols, pn), {}};
    out.loss.assign(static_cast<std::size_t>(src.V.cols), false);
    std::optional<LaurentSeries> binv;
    if (kind == DiffOp::OneMinusPsi || kind == DiffOp::PsiRaw)
        binv = matrix_inverse(M.frobenius(alpha), win).at(0, 0);
    const GammaElement gam = GammaElement::identity(ctx).with(alpha, M.gamma_exponent(alpha));
    std::map<long, std::uint64_t> w;
    SparseCol coords;
    for (long j = 0; j < src.V.cols; ++j) {
        LaurentSeries f = LaurentSeries::zero(ctx);
        for (const auto& [row, c] : src.V.col[static_cast<std::size_t>(j)]) {
            ExpVec e(ctx->dim(), 0);
            e[alpha] = static_cast<int>(row) - spole;
            f = f + LaurentSeries::monomial(ctx, e, static_cast<std::int64_t>(c));
        }
        LaurentSeries g = LaurentSeries::zero(ctx);
        switch (kind) {
            case DiffOp::OneMinusPhi:
                g = f - (M.frobenius(alpha).at(0, 0) * phi(f, alpha)).reduced_mod(red);
                break;
            case DiffOp::OneMinusPsi:
                g = f - psi((*binv * f).reduced_mod(red), alpha).reduced_mod(red);
                break;
            case DiffOp::PsiRaw:
                g = psi((*binv * f).reduced_mod(red), alpha).reduced_mod(red);
                break;
            case DiffOp::OneMinusGamma:
                g = f - (M.gamma_matrix(alpha).at(0, 0) * gamma_apply(f, gam, win))
                            .reduced_mod(red);
                break;
        }
        if (!g.exact() && g.window().hi[alpha] < dcap)
            throw PrecisionError("assembly window does not cover the truncation box");
        w.clear();
        bool lost = false;
        for (const auto& [e, c] : g.terms()) {
            if (c == 0) continue;
            if (e[alpha] < -dpole || e[alpha] > dcap) lost = true;
            else w[e[alpha] + dpole] = c;
        }
        compress_to_basis(dst, w, pn, br, coords);
        out.T.col[static_cast<std::size_t>(j)].assign(coords.begin(), coords.end());
        out.loss[static_cast<std::size_t>(j)] = lost;
    }
    return out;
}

}  // namespace detail

namespace detail {

// General path: one full product-box basis per distinct term box.
inline void assemble_direct(const KoszulComplex& K, const TruncationBox& box, const Window& win,
                            AssembledComplex& out, bool reduced) {
    const PhiGammaModule& M = K.module();
    const CtxPtr& ctx = M.ctx();
    const long d_rank = M.rank();
    const std::size_t top = K.top_degree();

    const Barrett br(ctx->pn());
    std::map<std::vector<int>, BoxBasis> cache;
    auto basis_of = [&](const TruncationBox& b) -> BoxBasis& {
        std::vector<int> key = b.pole;
        key.insert(key.end(), b.cap.begin(), b.cap.end());
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        BoxBasis bb;
        bb.exps = detail::box_monomials(b);
        if (reduced) {
            bb.rb = projector_basis(M, b, bb.exps, win);
            bb.rank = bb.rb.V.cols;
        } else {
            bb.rank = d_rank * static_cast<long>(bb.exps.size());
        }
        return cache.emplace(std::move(key), std::move(bb)).first->second;
    };

    out.term_rank.resize(top + 1);
    out.term_base.resize(top + 1);
    out.space.assign(top + 1, 0);
    for (std::size_t r = 0; r <= top; ++r)
        for (const TruncationBox& b : out.term_box[r]) {
            out.term_base[r].push_back(out.space[r]);
            const long rk = basis_of(b).rank;
            out.term_rank[r].push_back(rk);
            out.space[r] += rk;
        }

    std::map<long, std::uint64_t> w;
    SparseCol coords;
    for (std::size_t r = 0; r < top; ++r) {
        SparseMatrix mat(out.space[r + 1], out.space[r], ctx->pn());
        std::vector<bool> lossmask(static_cast<std::size_t>(out.space[r]), false);
        const std::size_t nt = K.terms(r).size();
        for (std::size_t t = 0; t < nt; ++t) {
            const BoxBasis& src = basis_of(out.term_box[r][t]);
            const long E = static_cast<long>(src.exps.size());
            for (long b = 0; b < out.term_rank[r][t]; ++b) {
                const long col = out.term_base[r][t] + b;
                auto x = zero_tuple(K, r);
                auto& xt = x[t];
                if (reduced) {
                    for (const auto& [row, c] : src.rb.V.col[static_cast<std::size_t>(b)]) {
                        auto& s = xt[static_cast<std::size_t>(row / E)];
                        s = s + LaurentSeries::monomial(ctx, src.exps[static_cast<std::size_t>(row % E)],
                                                        static_cast<std::int64_t>(c));
                    }
                } else {
                    xt[static_cast<std::size_t>(b / E)] =
                        LaurentSeries::monomial(ctx, src.exps[static_cast<std::size_t>(b % E)]);
                }
                auto y = apply_differential(K, r, x, win);
                bool lost = false;
                for (std::size_t u = 0; u < y.size(); ++u) {
                    const TruncationBox& tb = out.term_box[r + 1][u];
                    const BoxBasis& dst = basis_of(tb);
                    const long Eu = static_cast<long>(dst.exps.size());
                    if (reduced) {
                        w.clear();
                        for (long j = 0; j < d_rank; ++j)
                            project_to_map(y[u][static_cast<std::size_t>(j)], tb, j * Eu, w,
                                           lost);
                        if (w.empty()) continue;
                        compress_to_basis(dst.rb, w, ctx->pn(), br, coords);
                        auto& column = mat.col[static_cast<std::size_t>(col)];
                        for (const auto& [jj, q] : coords)
                            column.emplace_back(out.term_base[r + 1][u] + jj, q);
                    } else {
                        for (long j = 0; j < d_rank; ++j)
                            project_series(y[u][static_cast<std::size_t>(j)], tb, mat, col,
                                           out.term_base[r + 1][u] + j * Eu, lost);
                    }
                }
                lossmask[static_cast<std::size_t>(col)] = lost;
            }
        }
        out.d.push_back(std::move(mat));
        out.loss.push_back(std::move(lossmask));
    }

    // reporting-box representatives at every degree: the projector image of
    // each reporting monomial, expressed in the owning term's span
    const std::vector<ExpVec> rep = box_monomials(box);
    const long Es = static_cast<long>(rep.size());
    out.inner.resize(top + 1);
    out.inner_identity.assign(top + 1, false);
    for (std::size_t r = 0; r <= top; ++r) {
        bool ident = true;
        for (const TruncationBox& b : out.term_box[r]) ident = ident && b == box;
        out.inner_identity[r] = ident;
        if (ident) continue;
        const std::size_t nt = K.terms(r).size();
        SparseMatrix S(out.space[r], static_cast<long>(nt) * d_rank * Es, ctx->pn());
        std::map<long, std::uint64_t> z;
        for (std::size_t t = 0; t < nt; ++t) {
            const TruncationBox& tb = out.term_box[r][t];
            const BoxBasis& big = basis_of(tb);
            const long Eu = static_cast<long>(big.exps.size());
            for (long j = 0; j < d_rank; ++j)
                for (long k = 0; k < Es; ++k) {
                    auto& column =
                        S.col[(static_cast<std::size_t>(t) * d_rank + j) * Es + k];
                    const long row = j * Eu + tb.offset(rep[static_cast<std::size_t>(k)]);
                    if (reduced) {
                        z.clear();
                        for (const auto& [rr, c] : big.rb.P[static_cast<std::size_t>(row)])
                            z[rr] = c;
                        solve_in_basis(big.rb, z, ctx->pn(), br, coords);
                        for (const auto& [jj, q] : coords)
                            column.emplace_back(out.term_base[r][t] + jj, q);
                    } else {
                        column.emplace_back(out.term_base[r][t] + row, 1);
                    }
                }
        }
        out.inner[r] = std::move(S);
    }
}

// Factored path: for rank-one modules with constant structure matrices every
// arrow acts on one variable, so differentials are Kronecker products of
// per-variable transfer matrices and no product-box basis is ever built.
inline void assemble_factored(const KoszulComplex& K, const TruncationBox& box, const Window& win,
                              AssembledComplex& out) {
    const PhiGammaModule& M = K.module();
    const CtxPtr& ctx = M.ctx();
    const std::size_t dim = ctx->dim(), top = K.top_degree();
    const std::uint64_t pn = ctx->pn();
    const Barrett br(pn);

    std::map<std::array<int, 3>, ReducedBasis> legs;
    auto leg_of = [&](std::size_t a, const TruncationBox& b) -> const ReducedBasis& {
        std::array<int, 3> key{static_cast<int>(a), b.pole[a], b.cap[a]};
        auto it = legs.find(key);
        if (it == legs.end())
            it = legs.emplace(key, leg_basis(M, a, b.pole[a], b.cap[a], win)).first;
        return it->second;
    };

    out.term_rank.resize(top + 1);
    out.term_base.resize(top + 1);
    out.space.assign(top + 1, 0);
    for (std::size_t r = 0; r <= top; ++r)
        for (const TruncationBox& b : out.term_box[r]) {
            long rk = 1;
            for (std::size_t a = 0; a < dim; ++a) rk *= leg_of(a, b).V.cols;
            out.term_base[r].push_back(out.space[r]);
            out.term_rank[r].push_back(rk);
            out.space[r] += rk;
        }

    std::map<std::tuple<std::size_t, int, int, int, int, int>, LegTransfer> transfers;
    auto transfer_of = [&](std::size_t a, DiffOp::Kind k, const TruncationBox& sb,
                           const TruncationBox& db) -> const LegTransfer& {
        auto key = std::make_tuple(a, static_cast<int>(k), sb.pole[a], sb.cap[a], db.pole[a],
                                   db.cap[a]);
        auto it = transfers.find(key);
        if (it == transfers.end())
            it = transfers
                     .emplace(key, leg_transfer(M, a, k, leg_of(a, sb), sb.pole[a],
                                                leg_of(a, db), db.pole[a], db.cap[a], win))
                     .first;
        return it->second;
    };

    std::vector<long> tup(dim), srank(dim), drank(dim), sstr(dim), dstr(dim);
    for (std::size_t r = 0; r < top; ++r) {
        SparseMatrix mat(out.space[r + 1], out.space[r], pn);
        std::vector<bool> lossmask(static_cast<std::size_t>(out.space[r]), false);
        for (const Arrow& ar : K.arrows_from(r)) {
            const TruncationBox& sb = out.term_box[r][ar.src];
            const TruncationBox& db = out.term_box[r + 1][ar.dst];
            const std::size_t beta = ar.op.alpha;
            const LegTransfer& tr = transfer_of(beta, ar.op.kind, sb, db);
            for (std::size_t a = 0; a < dim; ++a) {
                srank[a] = leg_of(a, sb).V.cols;
                drank[a] = leg_of(a, db).V.cols;
            }
            sstr[dim - 1] = dstr[dim - 1] = 1;
            for (std::size_t a = dim - 1; a > 0; --a) {
                sstr[a - 1] = sstr[a] * srank[a];
                dstr[a - 1] = dstr[a] * drank[a];
            }
            std::fill(tup.begin(), tup.end(), 0);
            for (long col = 0; col < out.term_rank[r][ar.src]; ++col) {
                long base = 0;
                for (std::size_t a = 0; a < dim; ++a)
                    if (a != beta) base += tup[a] * dstr[a];
                const long gcol = out.term_base[r][ar.src] + col;
                auto& column = mat.col[static_cast<std::size_t>(gcol)];
                for (const auto& [i, q] : tr.T.col[static_cast<std::size_t>(tup[beta])])
                    column.emplace_back(out.term_base[r + 1][ar.dst] + base + i * dstr[beta],
                                        ar.sign > 0 ? q : pn - q);
                if (tr.loss[static_cast<std::size_t>(tup[beta])])
                    lossmask[static_cast<std::size_t>(gcol)] = true;
                for (std::size_t a = dim; a > 0; --a) {
                    if (++tup[a - 1] < srank[a - 1]) break;
                    tup[a - 1] = 0;
                }
            }
        }
        for (auto& c : mat.col) std::sort(c.begin(), c.end());
        out.d.push_back(std::move(mat));
        out.loss.push_back(std::move(lossmask));
    }

    // reporting-box representatives: Kronecker products of per-variable solves
    const long Es = box.monomials();
    out.inner.resize(top + 1);
    out.inner_identity.assign(top + 1, false);
    std::map<std::array<int, 3>, SparseMatrix> leg_rep;
    auto rep_of = [&](std::size_t a, const TruncationBox& b) -> const SparseMatrix& {
        std::array<int, 3> key{static_cast<int>(a), b.pole[a], b.cap[a]};
        auto it = leg_rep.find(key);
        if (it != leg_rep.end()) return it->second;
        const ReducedBasis& L = leg_of(a, b);
        const long Er = box.pole[a] + box.cap[a] + 1;
        SparseMatrix S(L.V.cols, Er, pn);
        std::map<long, std::uint64_t> z;
        SparseCol coords;
        for (long k = 0; k < Er; ++k) {
            z.clear();
            for (const auto& [row, c] :
                 L.P[static_cast<std::size_t>(k - box.pole[a] + b.pole[a])])
                z[row] = c;
            solve_in_basis(L, z, pn, br, coords);
            S.col[static_cast<std::size_t>(k)].assign(coords.begin(), coords.end());
        }
        return leg_rep.emplace(key, std::move(S)).first->second;
    };
    std::vector<long> rtup(dim);
    SparseCol acc, nxt;
    for (std::size_t r = 0; r <= top; ++r) {
        bool ident = true;
        for (const TruncationBox& b : out.term_box[r]) ident = ident && b == box;
        out.inner_identity[r] = ident;
        if (ident) continue;
        const std::size_t nt = K.terms(r).size();
        SparseMatrix S(out.space[r], static_cast<long>(nt) * Es, pn);
        for (std::size_t t = 0; t < nt; ++t) {
            const TruncationBox& tb = out.term_box[r][t];
            for (std::size_t a = 0; a < dim; ++a) drank[a] = leg_of(a, tb).V.cols;
            std::fill(rtup.begin(), rtup.end(), 0);
            for (long k = 0; k < Es; ++k) {
                acc.assign(1, {0, 1});
                for (std::size_t a = 0; a < dim && !acc.empty(); ++a) {
                    const auto& lc = rep_of(a, tb).col[static_cast<std::size_t>(rtup[a])];
                    nxt.clear();
                    for (const auto& [row, v] : acc)
                        for (const auto& [i, q] : lc)
                            nxt.emplace_back(row * drank[a] + i, br.reduce(v * q));
                    std::swap(acc, nxt);
                }
                auto& column = S.col[static_cast<std::size_t>(t) * Es + k];
                for (const auto& [row, v] : acc)
                    column.emplace_back(out.term_base[r][t] + row, v);
                for (std::size_t a = dim; a > 0; --a) {
                    if (++rtup[a - 1] <= box.pole[a - 1] + box.cap[a - 1]) break;
                    rtup[a - 1] = 0;
                }
            }
        }
        out.inner[r] = std::move(S);
    }
}

}  // namespace detail

inline AssembledComplex assemble(const KoszulComplex& K, const TruncationBox& box) {
    const PhiGammaModule& M = K.module();
    const CtxPtr& ctx = M.ctx();
    if (box.dim() != ctx->dim()) throw ContextError("box arity mismatch");
    const bool reduced = is_total(K.flavor()) && M.has_torsion();
    const std::size_t top = K.top_degree();

    AssembledComplex out;
    out.box = box;
    out.term_box.resize(top + 1);
    for (std::size_t r = 0; r <= top; ++r)
        for (KTerm t : K.terms(r)) out.term_box[r].push_back(term_box(K.flavor(), box, t, ctx));

    // one window hull serves every arrow: γ wants a certified ceiling at the
    // deepest cap in play, φ and ψ are exact on exact sources
    Window win;
    win.lo.resize(ctx->dim());
    win.hi.resize(ctx->dim());
    for (std::size_t i = 0; i < ctx->dim(); ++i) {
        win.lo[i] = -box.pole[i] - 2;
        win.hi[i] = box.cap[i] + 2;
    }
    for (std::size_t r = 0; r <= top; ++r)
        for (const TruncationBox& b : out.term_box[r])
            for (std::size_t i = 0; i < ctx->dim(); ++i) {
                win.lo[i] = std::min(win.lo[i], -b.pole[i] - 2);
                win.hi[i] = std::max(win.hi[i], b.cap[i] + 2);
            }

    bool factor = reduced && M.rank() == 1;
    for (std::size_t a = 0; factor && a < ctx->dim(); ++a)
        factor = detail::is_constant(M.frobenius(a).at(0, 0)) &&
                 detail::is_constant(M.gamma_matrix(a).at(0, 0)) &&
                 detail::is_constant(M.torsion(a).T.at(0, 0));
    if (factor)
        detail::assemble_factored(K, box, win, out);
    else
        detail::assemble_direct(K, box, win, out, reduced);
    return out;
}

struct CohomologyReport {
    std::vector<TruncationBox> boxes;
    // history[b][i]: divisor exponents of h^i at box b, descending
    std::vector<std::vector<std::vector<int>>> history;
    std::vector<std::vector<int>> divisors;  // final box
    std::vector<long> fp_dims;               // final box
    std::vector<long> d2_defects;            // per box, on loss-free columns
    std::vector<long> loss_counts;           // per box, lossy columns across all degrees
    bool stable = false;
};

namespace detail {

inline long d2_defect(const AssembledComplex& A, std::uint64_t mod) {
    Barrett br(mod);
    long bad = 0;
    std::vector<std::pair<long, std::uint64_t>> acc;
    for (std::size_t r = 0; r + 1 < A.d.size(); ++r) {
        const SparseMatrix &lo = A.d[r], &hi = A.d[r + 1];
        for (long j = 0; j < lo.cols; ++j) {
            if (A.loss[r][static_cast<std::size_t>(j)]) continue;
            acc.clear();
            for (const auto& [k, f] : lo.col[static_cast<std::size_t>(j)])
                for (const auto& [s, g] : hi.col[static_cast<std::size_t>(k)])
                    acc.emplace_back(s, br.reduce(f * g));
            std::sort(acc.begin(), acc.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t i = 0; i < acc.size();) {
                std::uint64_t s = 0;
                std::size_t i0 = i;
                while (i < acc.size() && acc[i].first == acc[i0].first)
                    s = br.reduce(s + acc[i++].second);
                if (s != 0) ++bad;
            }
        }
    }
    return bad;
}

}  // namespace detail

inline CohomologyReport cohomology(const KoszulComplex& K,
                                   const std::vector<TruncationBox>& boxes) {
    if (boxes.size() < 3) throw ContextError("stabilization needs at least three boxes");
    const CtxPtr& ctx = K.module().ctx();
    const std::uint64_t p = ctx->p();
    const unsigned n = ctx->n();
    const std::size_t top = K.top_degree();

    CohomologyReport rep;
    rep.boxes = boxes;
    for (const TruncationBox& box : boxes) {
        AssembledComplex A = assemble(K, box);
        rep.d2_defects.push_back(detail::d2_defect(A, ctx->pn()));
        long lossy = 0;
        for (const auto& mask : A.loss)
            lossy += static_cast<long>(std::count(mask.begin(), mask.end(), true));
        rep.loss_counts.push_back(lossy);

        std::vector<std::vector<int>> divs(top + 1);
        std::vector<long> dims(top + 1, 0);
        if (n == 1) {
            // field case. On reporting-box degrees dim H^r is the classical
            // nullity(d^r) − rank(d^{r−1}); degrees with scaffolding count the
            // classes with an in-window representative instead:
            //   rank [S | d^{r−1}] − rank(d^r·S) − rank(d^{r−1})
            std::vector<long> rank_d(top, 0);
            for (std::size_t r = 0; r < top; ++r) rank_d[r] = sparse_rank_modp(A.d[r], p);
            for (std::size_t r = 0; r <= top; ++r) {
                const long rank_prev = r > 0 ? rank_d[r - 1] : 0;
                long h;
                if (A.inner_identity[r]) {
                    h = A.space[r] - (r < top ? rank_d[r] : 0) - rank_prev;
                } else {
                    const SparseMatrix& S = A.inner[r];
                    const long dc = r > 0 ? A.d[r - 1].cols : 0;
                    SparseMatrix cat(A.space[r], S.cols + dc, ctx->pn());
                    for (long j = 0; j < S.cols; ++j)
                        cat.col[static_cast<std::size_t>(j)] =
                            S.col[static_cast<std::size_t>(j)];
                    for (long j = 0; j < dc; ++j)
                        cat.col[static_cast<std::size_t>(S.cols + j)] =
                            A.d[r - 1].col[static_cast<std::size_t>(j)];
                    long rank_dS = 0;
                    if (r < top) {
                        SparseMatrix dS = A.d[r] * S;
                        if (dS.nnz() > 0) rank_dS = sparse_rank_modp(dS, p);
                    }
                    h = sparse_rank_modp(cat, p) - rank_dS - rank_prev;
                }
                dims[r] = h;
                divs[r].assign(static_cast<std::size_t>(std::max(h, 0L)), 1);
            }
        } else {
            for (std::size_t r = 0; r <= top; ++r) {
                if (A.inner_identity[r]) {
                    long space = r < top ? A.d[r].cols : A.d[r - 1].rows;
                    ZpnMatrix out = r < top ? A.d[r].dense() : ZpnMatrix(0, space, ctx->pn());
                    ZpnMatrix in = r > 0 ? A.d[r - 1].dense() : ZpnMatrix(space, 0, ctx->pn());
                    HomologyResult H =
                        homology(out, in, static_cast<int>(p), static_cast<int>(n));
                    dims[r] = H.fp_dim;
                    divs[r] = H.divisor_exp;
                    continue;
                }
                // in-window classes: x-coordinates whose image is a cocycle,
                // modulo those whose image is a boundary — solve [S | d]·(x,y) = 0
                // and quotient ker(d^r·S) by the x-part of the relations
                const SparseMatrix& S = A.inner[r];
                const long dc = r > 0 ? A.d[r - 1].cols : 0;
                ZpnMatrix cat(A.space[r], S.cols + dc, ctx->pn());
                for (long j = 0; j < S.cols; ++j)
                    for (const auto& [row, v] : S.col[static_cast<std::size_t>(j)])
                        cat.at(row, j) = v;
                for (long j = 0; j < dc; ++j)
                    for (const auto& [row, v] : A.d[r - 1].col[static_cast<std::size_t>(j)])
                        cat.at(row, S.cols + j) = v;
                KernelBasis ker = kernel_basis(cat, static_cast<int>(p), static_cast<int>(n));
                ZpnMatrix rel(S.cols, ker.gens.cols, ctx->pn());
                for (long i = 0; i < rel.rows; ++i)
                    for (long j = 0; j < rel.cols; ++j) rel.at(i, j) = ker.gens.at(i, j);
                ZpnMatrix out = r < top ? (A.d[r] * S).dense()
                                        : ZpnMatrix(0, S.cols, ctx->pn());
                HomologyResult H = homology(out, rel, static_cast<int>(p), static_cast<int>(n));
                dims[r] = H.fp_dim;
                divs[r] = H.divisor_exp;
            }
        }
        rep.history.push_back(std::move(divs));
        rep.fp_dims = std::move(dims);
    }
    rep.divisors = rep.history.back();

    const std::size_t nb = rep.history.size();
    rep.stable = true;
    for (std::size_t b = nb - 3; b < nb; ++b) {
        if (rep.history[b] != rep.history[nb - 1]) rep.stable = false;
        if (rep.d2_defects[b] != 0) rep.stable = false;
    }
    return rep;
}

inline long euler_characteristic(const CohomologyReport& rep) {
    if (!rep.stable) throw Unstable("euler characteristic of an unstabilized report");
    long chi = 0;
    for (std::size_t i = 0; i < rep.fp_dims.size(); ++i)
        chi += (i % 2 == 0 ? 1 : -1) * rep.fp_dims[i];
    return chi;
}

}  // namespace pgk
