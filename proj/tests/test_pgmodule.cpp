#include <gtest/gtest.h>

#include <pgk/pgmodule.hpp>

#include <random>

#include "support/oracles.hpp"

using namespace pgk;

namespace {

CtxPtr ctx1(std::uint64_t p, unsigned n, unsigned slack = 0) {
    return make_ctx(p, n, {"a"}, slack);
}
CtxPtr ctx2(std::uint64_t p, unsigned n, unsigned slack = 0) {
    return make_ctx(p, n, {"a", "b"}, slack);
}

LaurentSeries X(const CtxPtr& c, int k, std::int64_t coef = 1) {
    return LaurentSeries::var_power(c, 0, k, coef);
}
LaurentSeries C(const CtxPtr& c, std::int64_t v) { return LaurentSeries::constant(c, v); }

SeriesMatrix const_matrix(const CtxPtr& ctx, std::vector<std::vector<std::int64_t>> rows) {
    SeriesMatrix M(ctx, static_cast<long>(rows.size()), static_cast<long>(rows.at(0).size()));
    for (long i = 0; i < M.rows; ++i)
        for (long j = 0; j < M.cols; ++j) M.at(i, j) = C(ctx, rows[i][j]);
    return M;
}

// rank-1 module with trivial structure matrices in every variable
PhiGammaModule trivial_module(const CtxPtr& ctx, std::int64_t gamma_exp = 4) {
    std::vector<SeriesMatrix> B, G;
    std::vector<PadicExponent> cs;
    for (std::size_t a = 0; a < ctx->dim(); ++a) {
        B.push_back(SeriesMatrix::identity(ctx, 1));
        G.push_back(SeriesMatrix::identity(ctx, 1));
        cs.push_back(PadicExponent::integer(ctx, gamma_exp));
    }
    return PhiGammaModule(ctx, {static_cast<int>(ctx->n())}, B, cs, G);
}

// constant diagonals conjugated by a fixed constant unit matrix: the actions
// commute pairwise and the mixed-divisor pattern survives the conjugation
PhiGammaModule conjugated_module(const CtxPtr& ctx, const std::vector<int>& divisors,
                                 const SeriesMatrix& Cm, std::mt19937_64& rng) {
    const long d = static_cast<long>(divisors.size());
    SeriesMatrix Cinv = matrix_inverse(Cm);
    std::uniform_int_distribution<std::int64_t> du(1, static_cast<std::int64_t>(ctx->pn()) - 1);
    auto unit_diag = [&] {
        SeriesMatrix D(ctx, d, d);
        for (long i = 0; i < d; ++i) {
            std::int64_t u = du(rng);
            while (u % static_cast<std::int64_t>(ctx->p()) == 0) u = du(rng);
            D.at(i, i) = C(ctx, u);
        }
        return Cm * D * Cinv;
    };
    std::vector<SeriesMatrix> B, G;
    std::vector<PadicExponent> cs;
    for (std::size_t a = 0; a < ctx->dim(); ++a) {
        B.push_back(unit_diag());
        G.push_back(unit_diag());
        cs.push_back(PadicExponent::integer(ctx, 1 + static_cast<std::int64_t>(ctx->p()) *
                                                         (1 + static_cast<std::int64_t>(a))));
    }
    return PhiGammaModule(ctx, divisors, B, cs, G);
}

ModuleElement elem(std::initializer_list<LaurentSeries> cs) { return ModuleElement(cs); }

void expect_elem_eq(const ModuleElement& x, const ModuleElement& y, const Window& win) {
    ASSERT_EQ(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        Window w = win;
        for (std::size_t d = 0; d < w.dim(); ++d) {
            if (!x[i].exact()) w.hi[d] = std::min(w.hi[d], x[i].window().hi[d]);
            if (!y[i].exact()) w.hi[d] = std::min(w.hi[d], y[i].window().hi[d]);
        }
        EXPECT_TRUE(compare_at(x[i], y[i], w)) << "coordinate " << i;
    }
}

}  // namespace

TEST(SeriesMat, InverseRoundTripAndRejection) {
    auto c = ctx1(3, 2);
    SeriesMatrix M = const_matrix(c, {{1, 3}, {1, 2}});
    M.at(0, 0) = M.at(0, 0) + X(c, 1, 3);  // series perturbation, still unit pivots
    SeriesMatrix inv = matrix_inverse(M);
    EXPECT_EQ(M * inv, SeriesMatrix::identity(c, 2));
    EXPECT_EQ(inv * M, SeriesMatrix::identity(c, 2));

    SeriesMatrix S(c, 2, 2);  // rank 1 over the residue field
    S.at(0, 0) = C(c, 1);
    S.at(0, 1) = C(c, 2);
    S.at(1, 0) = C(c, 2);
    S.at(1, 1) = C(c, 4);
    EXPECT_THROW(matrix_inverse(S), NotAUnit);

    // a pivot that is a unit only after window-assisted inversion
    SeriesMatrix W(c, 1, 1);
    W.at(0, 0) = C(c, 1) + X(c, 1);
    EXPECT_THROW(matrix_inverse(W), PrecisionError);
    Window win = Window::box(*c, 4, 6);
    SeriesMatrix winv = matrix_inverse(W, win);
    EXPECT_TRUE(compare_at((W * winv).at(0, 0), C(c, 1), Window::box(*c, 2, 4)));
}

TEST(ModPsi, TrivialModuleMatchesRingPsi) {
    auto c = ctx1(3, 2);
    auto M = trivial_module(c);
    ModuleElement out = mod_psi(M, elem({X(c, 1)}), 0);
    EXPECT_EQ(out[0], C(c, -1));
}

TEST(ModPsi, LeftInverseOfModPhi) {
    std::mt19937_64 rng(11);
    auto c = ctx1(3, 2);
    SeriesMatrix Cm = const_matrix(c, {{1, 3}, {1, 2}});
    auto M = conjugated_module(c, {2, 1}, Cm, rng);
    for (int round = 0; round < 8; ++round) {
        ModuleElement x = {testsupport::random_series(c, rng, 4, -3, 3),
                           testsupport::random_series(c, rng, 4, -3, 3)};
        x = mod_reduce(M, std::move(x));
        EXPECT_EQ(mod_psi(M, mod_phi(M, x, 0), 0), x);
    }
}

TEST(ModPsi, OnePlusXFrobeniusKillsTheGenerator) {
    auto c = ctx1(3, 2);
    SeriesMatrix B(c, 1, 1);
    B.at(0, 0) = C(c, 1) + X(c, 1);
    PhiGammaModule M(c, {2}, {B}, {PadicExponent::integer(c, 4)},
                     {SeriesMatrix::identity(c, 1)});
    Window win = Window::box(*c, 6, 18);
    ModuleElement out = mod_psi(M, elem({C(c, 1)}), 0, win);
    Window small = Window::box(*c, 2, 4);
    EXPECT_TRUE(compare_at(out[0], LaurentSeries::zero(c), small));
}

TEST(ModPsi, ProjectionFormula) {
    std::mt19937_64 rng(13);
    auto c = ctx1(5, 2);
    auto M = trivial_module(c, 6);
    for (int round = 0; round < 6; ++round) {
        LaurentSeries lam = testsupport::random_series(c, rng, 3, -2, 2);
        LaurentSeries x = testsupport::random_series(c, rng, 4, -3, 3);
        ModuleElement lhs = mod_psi(M, elem({phi(lam, 0) * x}), 0);
        ModuleElement rhs = mod_psi(M, elem({x}), 0);
        rhs[0] = lam * rhs[0];
        EXPECT_EQ(lhs[0], rhs[0].reduced_mod(c->n()));
    }
}

TEST(Etale, Examples) {
    auto c = ctx1(3, 2);
    EXPECT_TRUE(etale_check(trivial_module(c)).at(0));

    auto mono = trivial_module(c);
    SeriesMatrix Bx(c, 1, 1);
    Bx.at(0, 0) = X(c, -1);
    PhiGammaModule Mx(c, {2}, {Bx}, {PadicExponent::integer(c, 4)},
                      {SeriesMatrix::identity(c, 1)});
    EXPECT_TRUE(etale_check(Mx).at(0));

    SeriesMatrix Bp(c, 1, 1);
    Bp.at(0, 0) = C(c, 3);
    PhiGammaModule Mp(c, {2}, {Bp}, {PadicExponent::integer(c, 4)},
                      {SeriesMatrix::identity(c, 1)});
    EXPECT_FALSE(etale_check(Mp).at(0));

    auto c2 = ctx2(3, 2);
    SeriesMatrix Bs(c2, 1, 1);
    Bs.at(0, 0) = LaurentSeries::var_power(c2, 0, 1) + LaurentSeries::var_power(c2, 1, 1);
    PhiGammaModule Ms(
        c2, {2}, {Bs, SeriesMatrix::identity(c2, 1)},
        {PadicExponent::integer(c2, 4), PadicExponent::integer(c2, 4)},
        {SeriesMatrix::identity(c2, 1), SeriesMatrix::identity(c2, 1)});
    auto ok = etale_check(Ms);
    EXPECT_FALSE(ok.at(0));
    EXPECT_TRUE(ok.at(1));
}

TEST(Relations, TrivialTwistAndCorrupted) {
    auto c = ctx1(3, 2);
    Window win = Window::box(*c, 4, 8);
    EXPECT_TRUE(check_relations(trivial_module(c), win).empty());

    // rank-1 cyclotomic twist: gamma matrix = chi(gamma) as a constant
    SeriesMatrix G(c, 1, 1);
    G.at(0, 0) = C(c, 4);
    PhiGammaModule twist(c, {2}, {SeriesMatrix::identity(c, 1)}, {PadicExponent::integer(c, 4)},
                         {G});
    EXPECT_TRUE(check_relations(twist, win).empty());

    SeriesMatrix Gbad(c, 1, 1);
    Gbad.at(0, 0) = C(c, 1) + X(c, 1);
    PhiGammaModule bad(c, {2}, {SeriesMatrix::identity(c, 1)}, {PadicExponent::integer(c, 4)},
                       {Gbad});
    auto rep = check_relations(bad, win);
    ASSERT_FALSE(rep.empty());
    EXPECT_EQ(rep.front(), "phi:a/gamma:a");
}

TEST(Projector, AveragingExampleAndIdempotency) {
    auto c = ctx1(3, 2, 2);
    SeriesMatrix I1 = SeriesMatrix::identity(c, 1);
    PhiGammaModule M(c, {2}, {I1}, {PadicExponent::integer(c, 4)}, {I1},
                     {{teichmuller_exponent(2, c), I1}});
    Window win = Window::box(*c, 4, 6);

    ModuleElement x = elem({X(c, 1)});
    ModuleElement px = c_delta_projector(M, x, win);
    // (1/2)(X + (1+X)^{-1} - 1) = (1/2)(X^2 - X^3 + ...), and 2^{-1} = 5 mod 9
    EXPECT_EQ(px[0].coeff(ExpVec{1}), Scalar(c, 0));
    EXPECT_EQ(px[0].coeff(ExpVec{2}), Scalar(c, 5));
    EXPECT_EQ(px[0].coeff(ExpVec{3}), Scalar(c, -5));

    ModuleElement ppx = c_delta_projector(M, px, win);
    expect_elem_eq(ppx, px, Window::box(*c, 2, 4));

    ModuleElement fixed = mod_torsion(M, px, 0, win);
    expect_elem_eq(fixed, px, Window::box(*c, 2, 4));

    // commutes with the Frobenius action
    ModuleElement a = c_delta_projector(M, mod_phi(M, x, 0), win);
    ModuleElement b = mod_phi(M, c_delta_projector(M, x, win), 0);
    expect_elem_eq(a, b, Window::box(*c, 2, 4));

    // trivial torsion data: projector is the identity
    auto T = trivial_module(c);
    ModuleElement y = elem({X(c, -2) + X(c, 3, 7)});
    EXPECT_EQ(c_delta_projector(T, y), mod_reduce(T, y));
}

TEST(Pairing, MonomialOrthogonalityWithMixedDivisors) {
    auto c = ctx1(3, 3);
    std::vector<int> nd = {3, 1, 2};
    std::vector<SeriesMatrix> I3{SeriesMatrix::identity(c, 3)};
    PhiGammaModule M(c, nd, I3, {PadicExponent::integer(c, 4)}, I3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int a = -2; a <= 2; ++a)
                for (int b = -2; b <= 2; ++b) {
                    ModuleElement x = {LaurentSeries::zero(c), LaurentSeries::zero(c),
                                       LaurentSeries::zero(c)};
                    ModuleElement y = x;
                    x[static_cast<std::size_t>(i)] = X(c, a);
                    y[static_cast<std::size_t>(j)] = X(c, b);
                    Scalar got = pairing(M, x, y);
                    std::int64_t want =
                        (i == j && a + b == 0)
                            ? static_cast<std::int64_t>(c->ppow(static_cast<unsigned>(3 - nd[static_cast<std::size_t>(i)])))
                            : 0;
                    EXPECT_EQ(got, Scalar(c, want)) << i << ' ' << j << ' ' << a << ' ' << b;
                }
}

TEST(Pairing, BlockPerfectnessTwoVariables) {
    auto c = ctx2(3, 2);
    auto M = trivial_module(c);
    const int N = 2;
    for (int v0 = -N; v0 <= N; ++v0)
        for (int v1 = -N; v1 <= N; ++v1)
            for (int w0 = -N; w0 <= N; ++w0)
                for (int w1 = -N; w1 <= N; ++w1) {
                    LaurentSeries xv = LaurentSeries::monomial(c, ExpVec{v0, v1});
                    LaurentSeries yw = LaurentSeries::monomial(c, ExpVec{-w0, -w1});
                    Scalar got = pairing(M, {xv}, {yw});
                    bool diag = v0 == w0 && v1 == w1;
                    EXPECT_EQ(got, Scalar(c, diag ? 1 : 0));
                }
}

TEST(Pairing, TrivialRankOneIdentities) {
    auto c = ctx1(3, 2);
    auto M = trivial_module(c);
    Window win = Window::box(*c, 8, 10);
    auto D = dual_module(M, win);
    ModuleElement e = elem({C(c, 1)});
    ModuleElement b = elem({C(c, 1)});
    EXPECT_EQ(pairing(M, e, b), Scalar(c, 1));
    EXPECT_EQ(pairing(M, e, mod_phi(D, b, 0)), Scalar(c, 1));
    EXPECT_EQ(pairing(M, mod_psi(M, e, 0), b), Scalar(c, 1));
}

TEST(Pairing, AdjointnessOnRandomModules) {
    std::mt19937_64 rng(17);
    auto c = ctx1(3, 2);
    Window win = Window::box(*c, 10, 14);
    SeriesMatrix Cm = const_matrix(c, {{1, 3}, {1, 2}});
    auto M = conjugated_module(c, {2, 1}, Cm, rng);
    auto D = dual_module(M, win);

    LaurentSeries u = C(c, 1) + X(c, 1);
    for (int round = 0; round < 6; ++round) {
        ModuleElement x = {testsupport::random_series(c, rng, 3, -2, 2),
                           testsupport::random_series(c, rng, 3, -2, 2)};
        ModuleElement y = {testsupport::random_series(c, rng, 3, -2, 2),
                           testsupport::random_series(c, rng, 3, -2, 2)};
        x = mod_reduce(M, std::move(x));
        y = mod_reduce(D, std::move(y));

        EXPECT_EQ(pairing(M, x, mod_phi(D, y, 0)), pairing(M, mod_psi(M, x, 0, win), y));
        EXPECT_EQ(pairing(M, mod_phi(M, x, 0), y), pairing(M, x, mod_psi(D, y, 0, win)));
        EXPECT_EQ(pairing(M, mod_gamma(M, x, 0, win), mod_gamma(D, y, 0, win)), pairing(M, x, y));

        ModuleElement ux = x;
        for (auto& s : ux) s = s * u;
        EXPECT_EQ(pairing(M, mod_reduce(M, ux), dual_scalar_multiply(D, u, y, win)),
                  pairing(M, x, y));

        LaurentSeries uinv = invert(u, win);
        ModuleElement vx = x;
        for (auto& s : vx) s = s * uinv;
        EXPECT_EQ(pairing(M, mod_reduce(M, vx), dual_scalar_multiply(D, uinv, y, win)),
                  pairing(M, x, y));
    }
}

TEST(Pairing, AdjointnessTwoVariables) {
    std::mt19937_64 rng(19);
    auto c = ctx2(3, 2);
    Window win = Window::box(*c, 8, 30);
    SeriesMatrix Cm = const_matrix(c, {{1}});
    auto M = conjugated_module(c, {2}, Cm, rng);
    auto D = dual_module(M, win);
    for (int round = 0; round < 4; ++round) {
        ModuleElement x = {testsupport::random_series(c, rng, 3, -2, 2)};
        ModuleElement y = {testsupport::random_series(c, rng, 3, -2, 2)};
        x = mod_reduce(M, std::move(x));
        y = mod_reduce(D, std::move(y));
        for (std::size_t a : {0u, 1u}) {
            EXPECT_EQ(pairing(M, x, mod_phi(D, y, a)), pairing(M, mod_psi(M, x, a, win), y));
            EXPECT_EQ(pairing(M, mod_phi(M, x, a), y), pairing(M, x, mod_psi(D, y, a, win)));
            EXPECT_EQ(pairing(M, mod_gamma(M, x, a, win), mod_gamma(D, y, a, win)),
                      pairing(M, x, y));
        }
    }
}

TEST(Dual, MixedDivisorConstructionIsWellDefined) {
    std::mt19937_64 rng(23);
    auto c = ctx1(3, 2);
    Window win = Window::box(*c, 8, 10);
    SeriesMatrix Cm = const_matrix(c, {{1, 3}, {1, 2}});
    auto M = conjugated_module(c, {2, 1}, Cm, rng);
    auto D = dual_module(M, win);
    EXPECT_EQ(D.divisors(), M.divisors());
    EXPECT_TRUE(etale_check(D).at(0));
    // divisibility audit: entry (0,1) of every dual matrix is p-divisible
    for (const auto& [e, coef] : D.frobenius(0).at(0, 1).terms())
        EXPECT_EQ(coef % c->p(), 0u) << "entry not p-divisible";
}
