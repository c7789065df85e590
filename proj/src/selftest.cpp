#include "corrdetect/selftest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "corrdetect/config.hpp"
#include "corrdetect/errors.hpp"
#include "corrdetect/gaussian_kernel.hpp"
#include "corrdetect/lower_bounds.hpp"
#include "corrdetect/rates.hpp"
#include "corrdetect/signal_geometry.hpp"
#include "corrdetect/test_statistics.hpp"

namespace corrdetect {

bool SelftestReport::passed() const
{
    return std::all_of(rows.begin(), rows.end(), [](const SelftestRow& r) { return r.pass; });
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Ctx {
    std::uint64_t seed;
    unsigned workers;
    std::vector<SelftestRow> rows;
    std::vector<SweepRow> sweep;

    Stream stream(std::string_view name) const { return Stream(split(seed, hash_label(name))); }
    std::uint64_t key(std::string_view name) const { return split(seed, hash_label(name), 1); }
};

void check(Ctx& c, const std::string& name, const std::function<void(SelftestRow&)>& f)
{
    SelftestRow r;
    r.check = name;
    try {
        f(r);
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    c.rows.push_back(std::move(r));
}

std::string fd(double x) { return format_double(x); }

double sq(std::span<const double> v) { return std::inner_product(v.begin(), v.end(), v.begin(), 0.0); }

double rel(double a, double b)
{
    if (a == b) return 0.0;
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

double binom_se(double p, std::size_t n) { return std::sqrt(p * (1.0 - p) / static_cast<double>(n)); }

// Truncated second moment by adaptive quadrature, independent of the erfcx route.
double alpha_oracle(double t)
{
    using boost::math::quadrature::gauss_kronrod;
    const double c = 1.0 / std::sqrt(2.0 * M_PI);
    auto f = [c](double x) { return x * x * c * std::exp(-0.5 * x * x); };
    const double num = 2.0 * gauss_kronrod<double, 61>::integrate(f, t, kInf, 15, 1e-15);
    return num / boost::math::erfc(t / std::sqrt(2.0));
}

std::vector<double> normals(Stream& rng, std::size_t n)
{
    std::vector<double> z(n);
    for (auto& x : z) x = rng.normal();
    return z;
}

// Per-coordinate means and the largest off-diagonal sample correlation.
struct Moments {
    double max_abs_mean = 0.0;
    double max_abs_corr = 0.0;
    double max_var_dev = 0.0;
};

Moments moments(const std::vector<std::vector<double>>& draws)
{
    const std::size_t n = draws.size(), p = draws.front().size();
    Eigen::MatrixXd X(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) X(i, j) = draws[i][j];
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd Xc = X.rowwise() - mean;
    const Eigen::MatrixXd cov = Xc.transpose() * Xc / static_cast<double>(n - 1);
    Moments m;
    m.max_abs_mean = mean.cwiseAbs().maxCoeff();
    for (std::size_t a = 0; a < p; ++a) {
        m.max_var_dev = std::max(m.max_var_dev, std::abs(cov(a, a) - 1.0));
        for (std::size_t b = 0; b < a; ++b)
            m.max_abs_corr = std::max(m.max_abs_corr, std::abs(cov(a, b) / std::sqrt(cov(a, a) * cov(b, b))));
    }
    return m;
}

void gaussian_kernel_checks(Ctx& c)
{
    check(c, "gaussian_kernel.alpha_zero", [](SelftestRow& r) {
        const double a = alpha(0.0);
        r.observed = fd(a);
        r.expected = "1";
        r.pass = a == 1.0;
    });
    check(c, "gaussian_kernel.alpha_quadrature", [](SelftestRow& r) {
        const double a = alpha(1.0), o = alpha_oracle(1.0);
        r.observed = fd(a);
        r.expected = fd(o);
        r.detail = "relative error " + fd(rel(a, o)) + ", tolerance 1e-10";
        r.pass = rel(a, o) <= 1e-10;
    });
    check(c, "gaussian_kernel.alpha_asymptotic", [](SelftestRow& r) {
        const double t = 30.0, a = alpha(t), series = t * t + 2.0 - 2.0 / (t * t);
        r.observed = fd(a);
        r.expected = fd(series);
        r.detail = "in (900, 902); relative error " + fd(rel(a, series)) + ", tolerance 1e-6";
        r.pass = a > 900.0 && a < 902.0 && rel(a, series) <= 1e-6;
    });
    check(c, "gaussian_kernel.lm_arithmetic", [](SelftestRow& r) {
        const std::vector<double> w(4, 1.0);
        const double b = laurent_massart_upper(w, 1.0);
        r.observed = fd(b);
        r.expected = "10";
        r.pass = std::abs(b - 10.0) <= 1e-14;
    });
    check(c, "gaussian_kernel.lm_zero_weights", [](SelftestRow& r) {
        const std::vector<double> w(3, 0.0);
        const double b = laurent_massart_upper(w, 2.7);
        r.observed = fd(b);
        r.expected = "0";
        r.pass = b == 0.0;
    });
    check(c, "gaussian_kernel.lm_tail", [&c](SelftestRow& r) {
        const std::size_t p = 50, n = 200000;
        const std::vector<double> w(p, 1.0);
        const double thr = laurent_massart_upper(w, 3.0);
        auto rng = c.stream("lm_tail");
        std::size_t hits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double q = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                const double g = rng.normal();
                q += g * g;
            }
            hits += q >= thr;
        }
        const double f = static_cast<double>(hits) / n, b = std::exp(-3.0);
        r.observed = fd(f);
        r.expected = "<= " + fd(b + 3.0 * binom_se(b, n));
        r.detail = "n=" + std::to_string(n);
        r.pass = f <= b + 3.0 * binom_se(b, n);
    });
    check(c, "gaussian_kernel.collier_threshold_unit", [](SelftestRow& r) {
        const double b = collier_typeI_threshold(1, 0.0, 1.0);
        r.observed = fd(b);
        r.expected = "18";
        r.pass = rel(b, 18.0) <= 1e-15;
    });
    check(c, "gaussian_kernel.collier_threshold_arithmetic", [](SelftestRow& r) {
        const double t = std::sqrt(2.0 * std::log(101.0));
        const double b = collier_typeI_threshold(100, t, 2.0);
        const double o = 9.0 * (std::sqrt(100.0 / 101.0 * 2.0) + 2.0);
        r.observed = fd(b);
        r.expected = fd(o);
        r.pass = rel(b, o) <= 1e-12;
    });
    check(c, "gaussian_kernel.collier_tail", [&c](SelftestRow& r) {
        const std::size_t p = 200, n = 20000;
        const double t = 2.0, bound = collier_typeI_threshold(p, t, 4.0), a = alpha(t);
        auto rng = c.stream("collier_tail");
        std::size_t hits = 0;
        std::vector<double> z(p);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& x : z) x = rng.normal();
            hits += collier_sum(z, t, a) > bound;
        }
        const double f = static_cast<double>(hits) / n, b = std::exp(-4.0);
        r.observed = fd(f);
        r.expected = "<= " + fd(b + 3.0 * binom_se(b, n));
        r.detail = "n=" + std::to_string(n);
        r.pass = f <= b + 3.0 * binom_se(b, n);
    });
}

void model_checks(Ctx& c)
{
    check(c, "models.independent_marginals", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::equicorrelated(4, 0.0);
        auto rng = c.stream("independent_marginals");
        std::vector<std::vector<double>> d(100000);
        for (auto& x : d) sample_into(m, {}, rng, x);
        const auto mo = moments(d);
        r.observed = fd(mo.max_var_dev);
        r.expected = "<= 0.02";
        r.detail = "largest |variance - 1| over coordinates, n=100000";
        r.pass = mo.max_var_dev <= 0.02;
    });
    check(c, "models.pair_correlation", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::equicorrelated(2, 0.5);
        auto rng = c.stream("pair_correlation");
        std::vector<std::vector<double>> d(100000);
        for (auto& x : d) sample_into(m, {}, rng, x);
        const auto mo = moments(d);
        r.observed = fd(mo.max_abs_corr);
        r.expected = "0.5 +- 0.02";
        r.pass = std::abs(mo.max_abs_corr - 0.5) <= 0.02;
    });
    check(c, "models.common_factor_only", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::equicorrelated(3, 1.0);
        auto rng = c.stream("common_factor_only");
        std::vector<double> x;
        std::size_t bad = 0;
        for (int i = 0; i < 1000; ++i) {
            sample_into(m, {}, rng, x);
            bad += !(x[0] == x[1] && x[1] == x[2]);
        }
        r.observed = std::to_string(bad);
        r.expected = "0";
        r.detail = "draws with unequal coordinates out of 1000";
        r.pass = bad == 0;
    });
    check(c, "models.decorrelate_null", [&c](SelftestRow& r) {
        const std::size_t n = 100000;
        const std::vector<CorrelationModel> ms{CorrelationModel::equicorrelated(8, 0.5),
                                               CorrelationModel::grouped(8, 2, 0.5),
                                               CorrelationModel::rank_one(make_direction("alternating", 8), 0.5)};
        double worst_mean = 0.0, worst_corr = 0.0;
        for (const auto& m : ms) {
            auto rng = c.stream("decorrelate_null/" + family_name(m.family()));
            std::vector<std::vector<double>> d(n);
            std::vector<double> x;
            for (auto& z : d) {
                sample_into(m, {}, rng, x);
                decorrelate_into(m, x, rng, z);
            }
            const auto mo = moments(d);
            worst_mean = std::max(worst_mean, mo.max_abs_mean);
            worst_corr = std::max(worst_corr, mo.max_abs_corr);
        }
        r.observed = fd(worst_mean) + " / " + fd(worst_corr);
        r.expected = "<= " + fd(4.0 / std::sqrt(double(n))) + " / <= 0.02";
        r.detail = "max |mean| / max |off-diagonal correlation| over the three families at p=8";
        r.pass = worst_mean <= 4.0 / std::sqrt(double(n)) && worst_corr <= 0.02;
    });
    check(c, "models.constant_signal_annihilated", [](SelftestRow& r) {
        const auto m = CorrelationModel::equicorrelated(4, 0.6);
        const std::vector<double> th(4, 1.7);
        const auto mu = decorrelated_mean(m, th);
        double w = 0.0;
        for (double v : mu) w = std::max(w, std::abs(v));
        r.observed = fd(w);
        r.expected = "0";
        r.detail = "max |mean of X tilde|; rounding of the mean allowed at 1e-14";
        r.pass = w <= 1e-14;
    });
    check(c, "models.grouped_decorrelated_mean", [](SelftestRow& r) {
        const auto m = CorrelationModel::grouped(4, 2, 0.75);
        const std::vector<double> th{1.0, 0.0, 0.0, 0.0};
        const auto mu = decorrelated_mean(m, th);
        const double e0 = 0.5 / std::sqrt(0.25), e1 = -0.5 / std::sqrt(0.25);
        r.observed = fd(mu[0]) + "," + fd(mu[1]);
        r.expected = fd(e0) + "," + fd(e1);
        r.pass = std::abs(mu[0] - e0) <= 1e-12 && std::abs(mu[1] - e1) <= 1e-12;
    });
    check(c, "models.precision_identity_at_gamma0", [&c](SelftestRow& r) {
        auto rng = c.stream("precision_identity");
        const auto u = normals(rng, 12);
        double w = 0.0;
        for (const auto& m : {CorrelationModel::equicorrelated(12, 0.0), CorrelationModel::grouped(12, 3, 0.0),
                              CorrelationModel::rank_one(make_direction("ones", 12), 0.0)}) {
            const auto y = precision_apply(m, u);
            for (std::size_t i = 0; i < u.size(); ++i) w = std::max(w, std::abs(y[i] - u[i]));
        }
        r.observed = fd(w);
        r.expected = "0";
        r.detail = "max |Sigma^{-1}u - u| over three families";
        r.pass = w <= 1e-15;
    });
    check(c, "models.precision_roundtrip", [](SelftestRow& r) {
        const auto m = CorrelationModel::equicorrelated(3, 0.5);
        const std::vector<double> u(3, 1.0);
        const auto back = covariance_apply(m, precision_apply(m, u));
        double w = 0.0;
        for (std::size_t i = 0; i < 3; ++i) w = std::max(w, std::abs(back[i] - u[i]));
        r.observed = fd(w);
        r.expected = "<= 1e-10";
        r.pass = w <= 1e-10;
    });
    check(c, "models.precision_dense_solve", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::grouped(4, 2, 0.3);
        auto rng = c.stream("precision_dense");
        const auto u = normals(rng, 4);
        Eigen::Matrix4d S = 0.7 * Eigen::Matrix4d::Identity();
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                if (i / 2 == j / 2) S(i, j) += 0.3;
        const Eigen::Vector4d sol = S.fullPivLu().solve(Eigen::Vector4d(u[0], u[1], u[2], u[3]));
        const auto y = precision_apply(m, u);
        double w = 0.0;
        for (int i = 0; i < 4; ++i) w = std::max(w, std::abs(y[i] - sol(i)));
        r.observed = fd(w);
        r.expected = "<= 1e-10";
        r.detail = "max deviation from a dense LU solve";
        r.pass = w <= 1e-10;
    });
}

void geometry_checks(Ctx& c)
{
    check(c, "signal_geometry.single_spike_member", [](SelftestRow& r) {
        const double eps = 1.3;
        std::vector<double> th(5, 0.0);
        th[0] = eps;
        const auto mb = membership(SignalSpec::from_theta(th, 1), SpaceTag::Theta, SpaceParams{5, 1, eps, 1, {}});
        r.observed = std::string(mb.member ? "member" : "not member") + ", witness " + fd(mb.witness);
        r.expected = "member, witness " + fd(eps);
        r.pass = mb.member && mb.witness == eps;
    });
    check(c, "signal_geometry.constant_not_in_theta_I", [](SelftestRow& r) {
        const std::vector<double> th(8, 2.5);
        bool any = false;
        for (double eps : {1e-9, 1e-3, 1.0, 100.0})
            any = any || membership(SignalSpec::from_theta(th, 8), SpaceTag::Theta_I, SpaceParams{8, 8, eps, 1, {}}).member;
        r.observed = any ? "member for some eps" : "never member";
        r.expected = "never member";
        r.pass = !any;
    });
    check(c, "signal_geometry.upsilon_I_witness", [](SelftestRow& r) {
        const std::vector<double> th{3.0, 0.0, 0.0, 0.0};
        SpaceParams prm{4, 1, std::sqrt(18.0), 2, {}};
        const auto at = membership(SignalSpec::from_theta(th, 1), SpaceTag::Upsilon_I, prm);
        prm.eps = std::sqrt(18.5);
        const auto above = membership(SignalSpec::from_theta(th, 1), SpaceTag::Upsilon_I, prm);
        r.observed = fd(at.witness) + ", member at eps^2=18: " + (at.member ? "yes" : "no") +
                     ", at eps^2=18.5: " + (above.member ? "yes" : "no");
        r.expected = "2.25, yes, no";
        r.pass = at.witness == 2.25 && at.member && !above.member;
    });
    check(c, "signal_geometry.orthogonal_equality", [](SelftestRow& r) {
        const double cc = 1.9;
        std::vector<double> th(4, 0.0);
        th[0] = cc;
        const auto pb = projection_lower_bounds(SignalSpec::from_theta(th, 1));
        r.observed = fd(pb.orthogonal) + " / " + fd(pb.bound_orthogonal);
        r.expected = fd(0.75 * cc * cc);
        r.pass = rel(pb.orthogonal, 0.75 * cc * cc) <= 1e-15 && rel(pb.bound_orthogonal, 0.75 * cc * cc) <= 1e-15;
    });
    check(c, "signal_geometry.full_support_zero", [](SelftestRow& r) {
        const std::vector<double> th(6, 1.0);
        const auto pb = projection_lower_bounds(SignalSpec::from_theta(th, 6));
        r.observed = fd(pb.orthogonal) + " / " + fd(pb.bound_orthogonal);
        r.expected = "0 / 0";
        r.pass = std::abs(pb.orthogonal) <= 1e-15 && pb.bound_orthogonal == 0.0;
    });
    check(c, "signal_geometry.support_restricted_bound", [&c](SelftestRow& r) {
        auto rng = c.stream("support_restricted");
        double worst = kInf;
        for (int i = 0; i < 2000; ++i) {
            std::vector<double> th(100, 0.0);
            for (auto j : uniform_subset(100, 5, rng)) th[j] = rng.normal();
            const auto pb = projection_lower_bounds(SignalSpec::from_theta(th, 5));
            worst = std::min(worst, pb.support_restricted / sq(th));
        }
        r.observed = fd(worst);
        r.expected = ">= 0.9";
        r.detail = "min support_restricted / |theta|^2 over 2000 draws";
        r.pass = worst >= 0.9 - 1e-12;
    });
    check(c, "signal_geometry.omega_ones", [](SelftestRow& r) {
        const auto w = omega(std::vector<double>(100, 1.0));
        r.observed = std::to_string(w);
        r.expected = "25";
        r.pass = w == 25;
    });
    check(c, "signal_geometry.omega_spike", [](SelftestRow& r) {
        const auto w = omega(make_direction("e1", 100));
        r.observed = std::to_string(w);
        r.expected = "0";
        r.pass = w == 0;
    });
    check(c, "signal_geometry.omega_heterogeneous", [](SelftestRow& r) {
        std::vector<double> v(16, 0.0);
        for (int i = 0; i < 4; ++i) v[i] = 2.0;  // p^{1/4} on the first sqrt(p) coordinates
        const auto w = omega(v);
        r.observed = std::to_string(w);
        r.expected = "1";
        r.pass = w == 1;
    });
    check(c, "signal_geometry.full_signal", [](SelftestRow& r) {
        const double a = 0.7;
        const auto sg = make_sparse_signal(SignalRecipe{4, 4, a, SupportRule::first_s, SignRule::plus, {}, {}});
        bool ok = sg.theta.size() == 4;
        for (double x : sg.theta) ok = ok && x == a;
        r.observed = fd(sg.norm_sq());
        r.expected = fd(4 * a * a);
        r.pass = ok && rel(sg.norm_sq(), 4 * a * a) <= 1e-15;
    });
    check(c, "signal_geometry.first_s_signal", [](SelftestRow& r) {
        const auto sg = make_sparse_signal(SignalRecipe{10, 3, 2.0, SupportRule::first_s, SignRule::plus, {}, {}});
        const std::vector<double> want{2, 2, 2, 0, 0, 0, 0, 0, 0, 0};
        r.observed = std::to_string(sg.support.size()) + " nonzeros";
        r.expected = "3 nonzeros, (2,2,2,0,...)";
        r.pass = sg.theta == want && sg.support.size() == 3;
    });
    check(c, "signal_geometry.uniform_support", [&c](SelftestRow& r) {
        const std::size_t p = 20, s = 5, n = 20000;
        auto rng = c.stream("uniform_support");
        std::vector<double> cnt(p, 0.0);
        SignalRecipe rc{p, s, 1.0, SupportRule::uniform_random, SignRule::plus, {}, {}};
        for (std::size_t i = 0; i < n; ++i)
            for (auto j : make_sparse_signal(rc, &rng).support) cnt[j] += 1.0;
        // Inclusion counts have covariance n pi(1-pi) p/(p-1) (I - 11'/p).
        const double pi = double(s) / p, e = n * pi, var = n * pi * (1 - pi) * p / (p - 1.0);
        double stat = 0.0;
        for (double k : cnt) stat += (k - e) * (k - e) / var;
        const double pval = boost::math::cdf(boost::math::complement(boost::math::chi_squared(p - 1.0), stat));
        r.observed = fd(pval);
        r.expected = "> 0.001";
        r.detail = "chi-square goodness of fit on inclusion counts, n=20000";
        r.pass = pval > 0.001;
    });
}

void rate_checks(Ctx& c)
{
    check(c, "rates.sparse_example", [](SelftestRow& r) {
        const auto rr = rate_equicorrelated(100, 5, 0.0);
        const double collier = 5.0 * std::log1p(100.0 / 25.0);
        r.observed = fd(rr.value) + " " + rr.regime;
        r.expected = fd(collier) + " sparse";
        r.pass = rr.regime == "sparse" && rel(rr.value, collier) <= 1e-12;
    });
    check(c, "rates.perfect_full", [](SelftestRow& r) {
        const auto rr = rate_equicorrelated(100, 100, 1.0);
        r.observed = fd(rr.value);
        r.expected = "100";
        r.pass = rr.value == 100.0;
    });
    check(c, "rates.middle_branch", [](SelftestRow& r) {
        const auto rr = rate_equicorrelated(100, 50, 0.0);
        r.observed = fd(rr.value);
        r.expected = "11";
        r.pass = rel(rr.value, 11.0) <= 1e-12;
    });
    check(c, "rates.grouped_R1_reduces", [](SelftestRow& r) {
        std::size_t cells = 0, bad = 0;
        for (std::size_t p : {50, 100, 400, 1024, 2500}) {
            const std::size_t rt = static_cast<std::size_t>(std::sqrt(double(p)));
            for (std::size_t s : {std::size_t(1), rt, p / 2, p - 2, p})
                for (double g : {0.3, 1.0}) {
                    ++cells;
                    const auto a = rate_grouped(p, s, g, 1), b = rate_equicorrelated(p, s, g);
                    bad += !(a.value == b.value && a.regime == b.regime);
                }
        }
        r.observed = std::to_string(cells - bad) + "/" + std::to_string(cells);
        r.expected = std::to_string(cells) + "/" + std::to_string(cells);
        r.pass = bad == 0 && cells == 50;
    });
    check(c, "rates.grouped_singletons_collier", [](SelftestRow& r) {
        const std::size_t p = 64;
        std::size_t bad = 0, n = 0;
        for (std::size_t s : {1, 4, 7, 8, 20, 64})
            for (double g : {0.0, 0.5, 0.99, 1.0}) {
                const double sd = double(s);
                const double want = s * s < p ? sd * std::log1p(p / (sd * sd)) : std::sqrt(double(p));
                ++n;
                bad += rel(rate_grouped(p, s, g, p).value, want) > 1e-12;
            }
        r.observed = std::to_string(n - bad) + "/" + std::to_string(n);
        r.expected = std::to_string(n) + "/" + std::to_string(n);
        r.pass = bad == 0;
    });
    check(c, "rates.grouped_perfect_middle", [](SelftestRow& r) {
        const auto rr = rate_grouped(64, 16, 1.0, 4);
        const double want = 16.0 * std::log(5.0);
        r.observed = fd(rr.value);
        r.expected = fd(want);
        r.pass = rel(rr.value, want) <= 1e-12;
    });
    check(c, "rates.rank_one_ones_matches", [](SelftestRow& r) {
        const std::vector<double> v(100, 1.0);
        std::size_t bad = 0, n = 0;
        for (double g : {0.0, 0.5})
            for (std::size_t s = 1; s <= 25; ++s) {
                ++n;
                bad += rel(rate_rank_one(100, s, g, v).value, *rate_equicorrelated(100, s, g).psi1_sq) > 1e-12;
            }
        r.observed = std::to_string(n - bad) + "/" + std::to_string(n);
        r.expected = std::to_string(n) + "/" + std::to_string(n);
        r.pass = bad == 0;
    });
    check(c, "rates.rank_one_uncharacterized", [](SelftestRow& r) {
        const auto rr = rate_rank_one(100, 26, 0.5, std::vector<double>(100, 1.0));
        r.observed = rr.characterized ? "characterized" : "uncharacterized";
        r.expected = "uncharacterized";
        r.pass = !rr.characterized;
    });
    check(c, "rates.rank_one_perfect_spike", [](SelftestRow& r) {
        const auto rr = rate_rank_one(100, 1, 1.0, make_direction("e1", 100));
        r.observed = fd(rr.value);
        r.expected = "100";
        r.pass = rr.value == 100.0;
    });
    check(c, "rates.thresholds_sparse", [](SelftestRow& r) {
        const auto t = blessing_curse_thresholds(100, 5);
        r.observed = (t.one_minus_gamma_star ? fd(*t.one_minus_gamma_star) : "none") + ", " +
                     (t.one_minus_gamma_lower ? fd(*t.one_minus_gamma_lower) : "none");
        r.expected = "1, none";
        r.pass = t.one_minus_gamma_star == 1.0 && !t.one_minus_gamma_lower;
    });
    check(c, "rates.thresholds_middle", [](SelftestRow& r) {
        const auto t = blessing_curse_thresholds(100, 50);
        r.observed = t.one_minus_gamma_star ? fd(*t.one_minus_gamma_star) : "none";
        r.expected = "0.5";
        r.pass = t.one_minus_gamma_star && rel(*t.one_minus_gamma_star, 0.5) <= 1e-15;
    });
    check(c, "rates.thresholds_very_dense", [](SelftestRow& r) {
        const auto t = blessing_curse_thresholds(100, 99);
        const double want = 1.0 / (10.0 * std::log(101.0));
        r.observed = t.one_minus_gamma_star ? fd(*t.one_minus_gamma_star) : "none";
        r.expected = fd(want);
        r.pass = t.one_minus_gamma_star && rel(*t.one_minus_gamma_star, want) <= 1e-12;
    });
}

void statistic_checks(Ctx& c)
{
    check(c, "test_statistics.collier_zero", [](SelftestRow& r) {
        const std::vector<double> z(7, 0.0);
        const double v = collier_stat(z, 1.0).value;
        r.observed = fd(v);
        r.expected = "0";
        r.pass = v == 0.0;
    });
    check(c, "test_statistics.collier_t0", [&c](SelftestRow& r) {
        auto rng = c.stream("collier_t0");
        const auto z = normals(rng, 25);
        const double v = collier_stat(z, 0.0).value, want = sq(z) - 25.0;
        r.observed = fd(v);
        r.expected = fd(want);
        r.pass = std::abs(v - want) <= 1e-12 * (sq(z) + 25.0);
    });
    check(c, "test_statistics.collier_single_term", [](SelftestRow& r) {
        const std::vector<double> z{3.0, 0.0, 0.0};
        const double v = collier_stat(z, 2.0).value, want = 9.0 - alpha_oracle(2.0);
        r.observed = fd(v);
        r.expected = fd(want);
        r.pass = rel(v, want) <= 1e-10;
    });
    check(c, "test_statistics.chisq_zero", [](SelftestRow& r) {
        const double v = chisq_stat(std::vector<double>(5, 0.0)).value;
        r.observed = fd(v);
        r.expected = "0";
        r.pass = v == 0.0;
    });
    check(c, "test_statistics.chisq_ones", [](SelftestRow& r) {
        const double v = chisq_stat(std::vector<double>(9, 1.0)).value;
        r.observed = fd(v);
        r.expected = "9";
        r.pass = v == 9.0;
    });
    check(c, "test_statistics.chisq_null_mean", [&c](SelftestRow& r) {
        const std::size_t p = 20, n = 20000;
        const auto m = CorrelationModel::equicorrelated(p, 0.5);
        auto rng = c.stream("chisq_null_mean");
        std::vector<double> x, z;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sample_into(m, {}, rng, x);
            decorrelate_into(m, x, rng, z);
            acc += chisq_stat(z).value;
        }
        const double mean = acc / n, se = std::sqrt(2.0 * p / n);
        r.observed = fd(mean);
        r.expected = "20 +- " + fd(3 * se);
        r.pass = std::abs(mean - double(p)) <= 3 * se;
    });
    check(c, "test_statistics.linear_ones", [](SelftestRow& r) {
        const double v = linear_stat(CorrelationModel::equicorrelated(4, 0.2), std::vector<double>(4, 1.0)).value;
        r.observed = fd(v);
        r.expected = "4";
        r.pass = rel(v, 4.0) <= 1e-15;
    });
    check(c, "test_statistics.linear_null_variance", [&c](SelftestRow& r) {
        const std::size_t p = 10, n = 100000;
        const double g = 0.5, cap = 1 - g + g * p;
        const auto m = CorrelationModel::equicorrelated(p, g);
        auto rng = c.stream("linear_null_variance");
        std::vector<double> x, v(n);
        for (auto& y : v) {
            sample_into(m, {}, rng, x);
            y = linear_stat(m, x).value;
        }
        const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double var = 0.0;
        for (double y : v) var += (y - mu) * (y - mu);
        var /= n - 1.0;
        const double want = 2 * cap * cap;
        r.observed = fd(var);
        r.expected = fd(want) + " +- 5%";
        r.pass = std::abs(var - want) <= 0.05 * want;
    });
    check(c, "test_statistics.group_statistic_locality", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::grouped(12, 3, 0.4);
        auto rng = c.stream("group_locality");
        auto x = normals(rng, 12);
        const double before = linear_stat_group(m, x, 1).value;
        const double scan_before = scan_stats(m, x, ScanKind::chisq_scan).per_group[1];
        for (std::size_t i = 0; i < 12; ++i)
            if (i / 4 != 1) x[i] += 10.0 * rng.normal();
        const double after = linear_stat_group(m, x, 1).value;
        const double scan_after = scan_stats(m, x, ScanKind::chisq_scan).per_group[1];
        r.observed = fd(after - before) + ", " + fd(scan_after - scan_before);
        r.expected = "0, 0";
        r.pass = after == before && scan_after == scan_before;
    });
    check(c, "test_statistics.scan_single_group", [&c](SelftestRow& r) {
        const auto g1 = CorrelationModel::grouped(9, 1, 0.3);
        const auto eq = CorrelationModel::equicorrelated(9, 0.3);
        auto rng = c.stream("scan_single_group");
        const auto z = normals(rng, 9);
        const double a = scan_stats(g1, z, ScanKind::chisq_scan).value, a0 = chisq_stat(z).value;
        const double b = scan_stats(g1, z, ScanKind::collier_scan, 1.0).value, b0 = collier_stat(z, 1.0).value;
        const double l = scan_stats(g1, z, ScanKind::linear_scan).value, l0 = linear_stat(eq, z).value;
        r.observed = fd(a - a0) + ", " + fd(b - b0) + ", " + fd(l - l0);
        r.expected = "0, 0, 0";
        r.detail = "chisq, collier and linear scans against the global statistics";
        r.pass = std::abs(a - a0) <= 1e-13 * a0 && std::abs(b - b0) <= 1e-13 * (std::abs(b0) + 1) &&
                 std::abs(l - l0) <= 1e-13 * (l0 + 1);
    });
    check(c, "test_statistics.scan_finds_shifted_group", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::grouped(16, 4, 0.5);
        std::vector<double> th(16, 0.0);
        for (std::size_t i = 4; i < 8; ++i) th[i] = 5.0;
        auto rng = c.stream("scan_argmax");
        std::vector<double> x;
        std::size_t hit = 0;
        const std::size_t n = 10000;
        for (std::size_t i = 0; i < n; ++i) {
            sample_into(m, th, rng, x);
            hit += scan_stats(m, x, ScanKind::linear_scan).argmax == 1;
        }
        r.observed = fd(double(hit) / n);
        r.expected = ">= 0.99";
        r.detail = "linear scan, signal constant on the second group";
        r.pass = hit >= 0.99 * n;
    });
    check(c, "test_statistics.chisq_scan_additive", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::grouped(12, 3, 0.2);
        auto rng = c.stream("chisq_scan_additive");
        const auto z = normals(rng, 12);
        const auto sc = scan_stats(m, z, ScanKind::chisq_scan);
        const double sum = std::accumulate(sc.per_group.begin(), sc.per_group.end(), 0.0), g = chisq_stat(z).value;
        r.observed = fd(sum);
        r.expected = fd(g);
        r.detail = "summation order may differ; tolerance 1e-13 relative";
        r.pass = rel(sum, g) <= 1e-13;
    });
    check(c, "test_statistics.group_means_null", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::grouped(64, 8, 0.5);
        const std::size_t n = 100000;
        auto rng = c.stream("group_means_null");
        std::vector<std::vector<double>> d(n);
        std::vector<double> x;
        for (auto& y : d) {
            sample_into(m, {}, rng, x);
            y = standardized_group_means(m, x);
        }
        const auto mo = moments(d);
        r.observed = fd(mo.max_abs_mean) + " / " + fd(mo.max_abs_corr) + " / " + fd(mo.max_var_dev);
        r.expected = "<= " + fd(4 / std::sqrt(double(n))) + " / <= 0.02 / <= 0.02";
        r.detail = "max |mean|, max |corr|, max |var - 1|";
        r.pass = mo.max_abs_mean <= 4 / std::sqrt(double(n)) && mo.max_abs_corr <= 0.02 && mo.max_var_dev <= 0.02;
    });
    check(c, "test_statistics.group_mean_signal", [&c](SelftestRow& r) {
        const std::size_t p = 64, R = 8, n = 20000;
        const double g = 0.5, a = 0.3, m = double(p) / R;
        const auto model = CorrelationModel::grouped(p, R, g);
        std::vector<double> th(p, 0.0);
        for (std::size_t i = 24; i < 32; ++i) th[i] = a;
        auto rng = c.stream("group_mean_signal");
        std::vector<double> x;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sample_into(model, th, rng, x);
            acc += standardized_group_means(model, x)[3];
        }
        const double mean = acc / n, want = a * std::sqrt(m) / std::sqrt(1 - g + g * m), se = 1 / std::sqrt(double(n));
        r.observed = fd(mean);
        r.expected = fd(want) + " +- " + fd(3 * se);
        r.pass = std::abs(mean - want) <= 3 * se;
    });
    check(c, "test_statistics.average_reduces_to_linear", [&c](SelftestRow& r) {
        const std::size_t p = 10;
        auto rng = c.stream("average_linear");
        const auto x = normals(rng, p);
        const double avg = averaged_group_stats(CorrelationModel::grouped(p, 1, 0.0), x, AverageKind::chisq_avg).value;
        const double mean = std::accumulate(x.begin(), x.end(), 0.0) / p;
        const double lin = linear_stat(CorrelationModel::equicorrelated(p, 0.0), x).value;
        r.observed = fd(avg);
        r.expected = fd(p * mean * mean) + " / " + fd(lin);
        r.pass = rel(avg, p * mean * mean) <= 1e-13 && rel(avg, lin) <= 1e-13;
    });
    check(c, "test_statistics.noiseless_null_zero", [&c](SelftestRow& r) {
        auto rng = c.stream("noiseless_null");
        std::vector<double> x;
        std::size_t bad = 0;
        for (const auto& m : {CorrelationModel::equicorrelated(8, 1.0), CorrelationModel::grouped(8, 2, 1.0)})
            for (int i = 0; i < 1000; ++i) {
                sample_into(m, {}, rng, x);
                bad += noiseless_residual(m, x).value != 0.0;
            }
        r.observed = std::to_string(bad);
        r.expected = "0";
        r.detail = "nonzero residuals over 2000 null draws (equicorrelated and grouped)";
        r.pass = bad == 0;
    });
    check(c, "test_statistics.noiseless_spike", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::equicorrelated(4, 1.0);
        const std::vector<double> th{1.0, 0.0, 0.0, 0.0};
        auto rng = c.stream("noiseless_spike");
        std::vector<double> x;
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            sample_into(m, th, rng, x);
            worst = std::max(worst, std::abs(noiseless_residual(m, x).value - 0.75));
        }
        r.observed = fd(worst);
        r.expected = "0";
        r.detail = "max |residual - 0.75| over 1000 draws; the shared factor is added in floating point, so "
                   "rounding up to 1e-12 is allowed";
        r.pass = worst <= 1e-12;
    });
    check(c, "test_statistics.noiseless_constant_signal", [&c](SelftestRow& r) {
        const auto m = CorrelationModel::equicorrelated(6, 1.0);
        const std::vector<double> th(6, 0.7);
        auto rng = c.stream("noiseless_constant");
        std::vector<double> x;
        std::size_t bad = 0;
        for (int i = 0; i < 1000; ++i) {
            sample_into(m, th, rng, x);
            bad += noiseless_residual(m, x).value != 0.0;
        }
        r.observed = std::to_string(bad);
        r.expected = "0";
        r.pass = bad == 0;
    });
}

std::vector<double> first_s(std::size_t p, std::size_t s, double norm)
{
    std::vector<double> th(p, 0.0);
    for (std::size_t i = 0; i < s; ++i) th[i] = norm / std::sqrt(double(s));
    return th;
}

double rejection_rate(const TestProcedure& T, std::span<const double> theta, std::size_t n, Stream& rng)
{
    Workspace ws;
    std::vector<double> x, vals;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sample_into(T.model, theta, rng, x);
        constituent_values(T, x, rng, ws, vals);
        k += rejects(T, x, vals);
    }
    return double(k) / n;
}

void procedure_checks(Ctx& c)
{
    TestOptions paper;
    paper.mode = ThresholdMode::paper_constants;
    check(c, "test_procedures.sparse_collier", [&](SelftestRow& r) {
        const std::size_t p = 400, s = 5;
        const auto T = build_test(CorrelationModel::equicorrelated(p, 0.3), s, paper);
        const double t = std::sqrt(2 * std::log1p(double(p) / (s * s)));
        const double thr = 1.0 / 32.0 * s * std::log1p(double(p) / (s * s));
        r.observed = std::to_string(T.constituents.size()) + " constituent(s)";
        r.expected = "collier t=" + fd(t) + " cutoff=" + fd(thr);
        r.pass = T.constituents.size() == 1 && T.constituents[0].kind == StatKind::collier &&
                 rel(T.constituents[0].t, t) <= 1e-15 && rel(T.constituents[0].threshold, thr) <= 1e-15;
        if (!T.constituents.empty())
            r.observed += ": " + stat_kind_name(T.constituents[0].kind) + " t=" + fd(T.constituents[0].t) +
                          " cutoff=" + fd(T.constituents[0].threshold);
    });
    check(c, "test_procedures.full_support_linear", [&](SelftestRow& r) {
        TestOptions o = paper;
        o.composition = Composition::problem_II;
        const auto T = build_test(CorrelationModel::equicorrelated(64, 0.5), 64, o);
        std::string kinds;
        for (const auto& k : T.constituents) kinds += stat_kind_name(k.kind) + " ";
        r.observed = kinds;
        r.expected = "linear";
        r.detail = "Problem II composition; the full composite at s=p also keeps the chi-square test";
        r.pass = T.constituents.size() == 1 && T.constituents[0].kind == StatKind::linear;
    });
    check(c, "test_procedures.grouped_chisq_scan", [&](SelftestRow& r) {
        const auto T = build_test(CorrelationModel::grouped(1024, 8, 0.5), 64, paper);
        const auto rr = rate_grouped(1024, 64, 0.5, 8);
        std::vector<StatKind> kinds;
        std::string names;
        for (const auto& k : T.constituents) {
            kinds.push_back(k.kind);
            names += stat_kind_name(k.kind) + " ";
        }
        r.observed = names + "(" + rr.regime + ", scan term " + (*rr.upsilon_scan_term ? "yes" : "no") + ")";
        r.expected = "chisq chisq_scan";
        r.pass = kinds == std::vector<StatKind>{StatKind::chisq, StatKind::chisq_scan} && *rr.upsilon_scan_term;
    });
    check(c, "test_procedures.calibrated_type_I", [&c](SelftestRow& r) {
        TestOptions o;
        o.calibration.seed = c.key("calibrated_type_I/cal");
        o.calibration.workers = c.workers;
        const auto T = build_test(CorrelationModel::equicorrelated(100, 0.3), 5, o);
        auto rng = c.stream("calibrated_type_I/fresh");
        const std::size_t n = 10000;
        // The threshold is itself an n_cal-draw estimate, so its error enters the standard error too.
        const double se = std::hypot(binom_se(0.05, n), binom_se(0.05, o.calibration.n_cal));
        const double f = rejection_rate(T, {}, n, rng), lim = 0.05 + 3 * se;
        r.observed = fd(f);
        r.expected = "<= " + fd(lim);
        r.detail = "10000 fresh null draws; se combines fresh and calibration sampling";
        r.pass = f <= lim;
    });
    check(c, "test_procedures.noiseless_perfect", [&c](SelftestRow& r) {
        const auto T = build_test(CorrelationModel::equicorrelated(64, 1.0), 8, TestOptions{});
        auto rng = c.stream("noiseless_perfect");
        const double alt = rejection_rate(T, first_s(64, 8, 0.5), 1000, rng);
        const double null = rejection_rate(T, {}, 1000, rng);
        r.observed = fd(alt) + " / " + fd(null);
        r.expected = "1 / 0";
        r.pass = alt == 1.0 && null == 0.0;
    });
    check(c, "test_procedures.adaptive_power", [&c](SelftestRow& r) {
        TestOptions o;
        o.adaptive = true;
        o.calibration.seed = c.key("adaptive_power/cal");
        o.calibration.workers = c.workers;
        const auto T = build_test(CorrelationModel::equicorrelated(400, 0.0), 0, o);
        const double eps = 5.0 * std::sqrt(psi1_sq(400, 3, 0.0));
        auto rng = c.stream("adaptive_power");
        const double f = rejection_rate(T, first_s(400, 3, eps), 1000, rng);
        r.observed = fd(f);
        r.expected = ">= 0.9";
        r.pass = f >= 0.9;
    });
    check(c, "test_procedures.chisq_quantile", [&c](SelftestRow& r) {
        Constituent k;
        k.kind = StatKind::chisq;
        const auto rec = calibrate_null_quantile(k, CorrelationModel::equicorrelated(50, 0.4), 0.95, 4000,
                                                 c.key("chisq_quantile"), c.workers);
        const double q = boost::math::quantile(boost::math::chi_squared(50.0), 0.95);
        r.observed = "[" + fd(rec.record.lo) + ", " + fd(rec.record.hi) + "]";
        r.expected = "contains " + fd(q);
        r.pass = rec.record.lo <= q && q <= rec.record.hi;
    });
    check(c, "test_procedures.linear_median", [&c](SelftestRow& r) {
        Constituent k;
        k.kind = StatKind::linear;
        const double g = 0.4, cap = 1 - g + g * 50;
        const auto rec = calibrate_null_quantile(k, CorrelationModel::equicorrelated(50, g), 0.5, 4000,
                                                 c.key("linear_median"), c.workers);
        const double q = cap * boost::math::quantile(boost::math::chi_squared(1.0), 0.5);
        r.observed = "[" + fd(rec.record.lo) + ", " + fd(rec.record.hi) + "]";
        r.expected = "contains " + fd(q);
        r.pass = rec.record.lo <= q && q <= rec.record.hi;
    });
    check(c, "test_procedures.calibration_refusal", [](SelftestRow& r) {
        Constituent k;
        k.kind = StatKind::chisq;
        r.expected = "refused";
        try {
            calibrate_null_quantile(k, CorrelationModel::equicorrelated(10, 0.0), 0.999, 100, 1);
            r.observed = "calibrated";
        } catch (const ContractError& e) {
            r.observed = "refused";
            r.detail = e.what();
            r.pass = true;
        }
    });
}

void lower_bound_checks(Ctx& c)
{
    check(c, "lower_bounds.point_mass_equicorrelated", [](SelftestRow& r) {
        const std::size_t p = 30;
        const double g = 0.4, cc = 0.2;
        const auto d = ingster_suslina_chisq(PriorSpec::point_mass(std::vector<double>(p, cc)),
                                             CorrelationModel::equicorrelated(p, g), DivergenceMethod::closed_form);
        const double want = std::expm1(p * cc * cc / (1 - g + g * p));
        r.observed = fd(d.chi_sq);
        r.expected = fd(want);
        r.pass = rel(d.chi_sq, want) <= 1e-12;
    });
    check(c, "lower_bounds.point_mass_rank_one", [](SelftestRow& r) {
        const double cc = 0.8;
        const auto v = make_direction("alternating", 16);
        std::vector<double> th(v);
        for (auto& x : th) x *= cc;
        const auto d = ingster_suslina_chisq(PriorSpec::point_mass(th), CorrelationModel::rank_one(v, 1.0),
                                             DivergenceMethod::closed_form);
        r.observed = fd(d.chi_sq);
        r.expected = fd(std::expm1(cc * cc));
        r.detail = "gamma = 1, theta = c v";
        r.pass = rel(d.chi_sq, std::expm1(cc * cc)) <= 1e-12;
    });
    check(c, "lower_bounds.two_point_enumeration", [](SelftestRow& r) {
        const auto d = ingster_suslina_chisq(PriorSpec::uniform_sparse(2, 1, std::sqrt(std::log(2.0))),
                                             CorrelationModel::equicorrelated(2, 0.0),
                                             DivergenceMethod::exact_enumeration);
        r.observed = fd(d.chi_sq);
        r.expected = "0.5";
        r.pass = std::abs(d.chi_sq - 0.5) <= 1e-12;
    });
    check(c, "lower_bounds.hypergeometric_mean", [](SelftestRow& r) {
        const double e = hypergeometric_expectation(10, 2, 2, [](std::size_t k) { return double(k); });
        r.observed = fd(e);
        r.expected = "0.4";
        r.pass = std::abs(e - 0.4) <= 1e-15;
    });
    check(c, "lower_bounds.mgf_single", [](SelftestRow& r) {
        const std::size_t p = 7;
        const double l2 = 0.6;
        const auto m = hypergeometric_mgf_bound(p, 1, l2);
        const double want = 1 - 1.0 / p + std::exp(l2) / p;
        r.observed = fd(m.exact) + " / " + fd(m.bound);
        r.expected = fd(want);
        r.pass = rel(m.exact, want) <= 1e-13 && rel(m.bound, want) <= 1e-13;
    });
    check(c, "lower_bounds.mgf_brute_force", [](SelftestRow& r) {
        const std::size_t p = 20, s = 5;
        const double l2 = 0.3;
        const auto m = hypergeometric_mgf_bound(p, s, l2);
        // The overlap law does not depend on S, so fix S = {0..4} and enumerate every S~.
        double acc = 0.0;
        std::size_t count = 0;
        for (unsigned mask = 0; mask < (1u << p); ++mask) {
            if (std::popcount(mask) != int(s)) continue;
            ++count;
            acc += std::exp(l2 * std::popcount(mask & 0x1Fu));
        }
        const double brute = acc / count;
        r.observed = fd(m.exact);
        r.expected = fd(brute) + " and <= " + fd(m.bound);
        r.pass = rel(m.exact, brute) <= 1e-10 && m.exact <= m.bound;
    });
    check(c, "lower_bounds.tv_zero_shift", [](SelftestRow& r) {
        const double v = mean_shift_tv(CorrelationModel::equicorrelated(5, 0.3), 0.0);
        r.observed = fd(v);
        r.expected = "0";
        r.pass = v == 0.0;
    });
    check(c, "lower_bounds.tv_arithmetic", [](SelftestRow& r) {
        const double v = mean_shift_tv(CorrelationModel::equicorrelated(4, 0.0), 0.5);
        const double want = 0.5 * std::sqrt(std::expm1(1.0));
        r.observed = fd(v);
        r.expected = fd(want);
        r.pass = rel(v, want) <= 1e-14;
    });
    check(c, "lower_bounds.tv_bound_valid", [](SelftestRow& r) {
        const std::size_t p = 6;
        const double g = 0.3, m = 0.4;
        const double delta = std::sqrt(double(p)) * m / std::sqrt(1 - g + g * p);
        using boost::math::quadrature::gauss_kronrod;
        auto phi = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2 * M_PI); };
        auto f = [&](double x) { return std::abs(phi(x) - phi(x - delta)); };
        const double tv = 0.5 * (gauss_kronrod<double, 61>::integrate(f, -kInf, delta / 2, 15, 1e-14) +
                                 gauss_kronrod<double, 61>::integrate(f, delta / 2, kInf, 15, 1e-14));
        const double b = mean_shift_tv(CorrelationModel::equicorrelated(p, g), m);
        r.observed = fd(tv);
        r.expected = "<= " + fd(b);
        r.detail = "TV of the projection onto 1_p by quadrature";
        r.pass = tv <= b;
    });
    check(c, "lower_bounds.trivial_prior", [](SelftestRow& r) {
        const double b = risk_lower_bound(PriorSpec::point_mass(std::vector<double>(9, 0.0)),
                                          CorrelationModel::equicorrelated(9, 0.5), DivergenceMethod::closed_form);
        r.observed = fd(b);
        r.expected = "1";
        r.pass = b == 1.0;
    });
    check(c, "lower_bounds.sparse_prior_majorant", [](SelftestRow& r) {
        const std::size_t p = 64, s = 4;
        const double g = 0.5, cc = 0.1, k = 2 / (2 - std::sqrt(2.0));
        const double psi2 = psi1_sq(p, s, g);
        const double a = std::sqrt(k) * cc * std::sqrt(psi2) / std::sqrt(double(s));
        const auto d = ingster_suslina_chisq(PriorSpec::uniform_sparse(p, s, a),
                                             CorrelationModel::equicorrelated(p, g),
                                             DivergenceMethod::hypergeometric_sum);
        const double q = double(s) / p;
        const double maj = std::pow(1 - q + q * std::exp(k * cc * cc * psi2 / (s * (1 - g))), double(s)) - 1;
        r.observed = fd(d.chi_sq) + ", risk bound " + fd(d.risk_bound);
        r.expected = "<= " + fd(maj) + ", >= 0.9";
        r.pass = d.chi_sq <= maj && d.risk_bound >= 0.9;
    });
    check(c, "lower_bounds.shifted_prior", [](SelftestRow& r) {
        const std::size_t p = 100, s = 60;
        const double g = 0.2, cc = 0.05, pd = double(p);
        const double kappa = std::min((1 - g) * std::pow(pd, 1.5) / (pd - s), 1 - g + g * pd);
        const double a = cc * std::sqrt(kappa * pd) / s;
        const double b = risk_lower_bound(PriorSpec::shifted(p, s, a), CorrelationModel::equicorrelated(p, g),
                                          DivergenceMethod::hypergeometric_sum);
        r.observed = fd(b);
        r.expected = ">= 0.8";
        r.pass = b >= 0.8;
    });
}

void risk_checks(Ctx& c)
{
    check(c, "risk_engine.perfect_correlation_zero_risk", [&c](SelftestRow& r) {
        const auto T = build_test(CorrelationModel::equicorrelated(64, 1.0), 8, TestOptions{});
        const std::vector<Alternative> alts{
            Alternative::fixed("first_s", first_s(64, 8, 1.0)),
            Alternative::from_prior("uniform_sparse", PriorSpec::uniform_sparse(64, 8, 1.0 / std::sqrt(8.0)))};
        const auto e = estimate_risk(T, alts, 1000, c.key("perfect_zero"), 0, c.workers);
        r.observed = fd(e.total);
        r.expected = "0";
        r.pass = e.total == 0.0;
    });
    check(c, "risk_engine.null_as_alternative", [&c](SelftestRow& r) {
        TestOptions o;
        o.calibration.seed = c.key("null_alt/cal");
        o.calibration.workers = c.workers;
        const auto T = build_test(CorrelationModel::equicorrelated(100, 0.3), 5, o);
        const auto e = estimate_risk(T, {Alternative::fixed("zero", std::vector<double>(100, 0.0))}, 2000,
                                     c.key("null_alt"), 0, c.workers);
        const double gap = e.worst_type_ii - (1 - e.type_i);
        r.observed = fd(gap);
        r.expected = "0 +- " + fd(3 * e.se);
        r.detail = "type II minus (1 - type I); independent streams";
        r.pass = std::abs(gap) <= 3 * e.se;
    });
    check(c, "risk_engine.sparse_power", [&c](SelftestRow& r) {
        SweepPlan plan;
        plan.p = {400};
        plan.s = {5};
        plan.gamma = {0.0};
        plan.multipliers = {6.0};
        plan.n_reps = 4000;
        plan.seed = c.key("sparse_power");
        plan.workers = c.workers;
        const auto rows = run_sweep(plan);
        r.observed = fd(rows[0].est.total);
        r.expected = "<= 0.2";
        r.detail = rows[0].status;
        r.pass = rows[0].status == "ok" && rows[0].est.total <= 0.2;
    });
}

double combined_se(const SweepRow& a, const SweepRow& b) { return std::hypot(a.est.se, b.est.se); }

void sweep_checks(Ctx& c)
{
    auto base = [&c](std::size_t s, std::vector<double> gammas, std::vector<double> mult, const char* key) {
        SweepPlan plan;
        plan.p = {2500};
        plan.s = {s};
        plan.gamma = std::move(gammas);
        plan.multipliers = std::move(mult);
        plan.reference = RateReference::gamma0;
        plan.n_reps = 1000;
        plan.seed = c.key(key);
        plan.workers = c.workers;
        return plan;
    };
    check(c, "risk_engine.blessing_sweep", [&](SelftestRow& r) {
        const auto rows = run_sweep(base(10, {0.0, 0.9, 0.99}, {std::sqrt(3.0)}, "blessing"));
        bool ok = true;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            ok = ok && rows[i].status == "ok";
            r.observed += (i ? " " : "") + fd(rows[i].est.total);
            if (i) ok = ok && rows[i].est.total <= rows[i - 1].est.total + 2 * combined_se(rows[i], rows[i - 1]);
        }
        r.expected = "nonincreasing in gamma within 2 se";
        r.detail = "total risk at gamma 0, 0.9, 0.99; |theta|^2 = 3 psi_1^2(gamma=0)";
        r.pass = ok;
        c.sweep.insert(c.sweep.end(), rows.begin(), rows.end());
    });
    check(c, "risk_engine.curse_sweep", [&](SelftestRow& r) {
        const auto rows = run_sweep(base(2450, {0.0, 0.2}, {std::sqrt(3.0)}, "curse"));
        const bool ok = rows.size() == 2 && rows[0].status == "ok" && rows[1].status == "ok" &&
                        rows[1].est.total - rows[0].est.total > 2 * combined_se(rows[0], rows[1]);
        r.observed = fd(rows[0].est.total) + " " + fd(rows[1].est.total);
        r.expected = "increase beyond 2 se";
        r.detail = "total risk at gamma 0, 0.2; |theta|^2 = 3 eps*^2(gamma=0)";
        r.pass = ok;
        c.sweep.insert(c.sweep.end(), rows.begin(), rows.end());
    });
    check(c, "risk_engine.irrelevance_sweep", [&](SelftestRow& r) {
        const auto rows = run_sweep(base(50, {0.0, 0.02}, {0.5, 1.0, 2.0, 4.0}, "irrelevance"));
        bool ok = rows.size() == 8;
        double worst = 0.0;
        for (std::size_t i = 0; ok && i < 4; ++i) {
            const auto &a = rows[i], &b = rows[i + 4];
            ok = a.status == "ok" && b.status == "ok";
            const double z = std::abs(a.est.total - b.est.total) / combined_se(a, b);
            worst = std::max(worst, z);
            ok = ok && z <= 3.0;
        }
        r.observed = fd(worst);
        r.expected = "<= 3";
        r.detail = "largest pointwise |difference| / se across multipliers 0.5..4, gamma 0 vs 1/sqrt(p)";
        r.pass = ok;
        c.sweep.insert(c.sweep.end(), rows.begin(), rows.end());
    });
}

void cli_checks(Ctx& c)
{
    check(c, "cli.rate_sparse", [](SelftestRow& r) {
        const auto out = rate_report(rate_equicorrelated(100, 5, 0.0));
        r.observed = out.substr(out.find("regime"));
        r.expected = "regime sparse, rate_sq 8.0472";
        r.pass = out.find("regime sparse\n") != std::string::npos && out.find("rate_sq 8.0472\n") != std::string::npos;
    });
    check(c, "cli.rate_perfect", [](SelftestRow& r) {
        const auto out = rate_report(rate_equicorrelated(100, 100, 1.0));
        r.observed = out.substr(out.find("rate_sq"));
        r.expected = "rate_sq 100.0000";
        r.pass = out.find("rate_sq 100.0000\n") != std::string::npos;
    });
    check(c, "cli.malformed_R", [](SelftestRow& r) {
        r.expected = "config error at model.R";
        try {
            parse_config_text(R"({"model": {"family": "grouped", "p": 100, "s": 5, "gamma": 0.5, "R": 3}})");
            r.observed = "accepted";
        } catch (const ConfigError& e) {
            r.observed = "config error at " + e.field;
            r.detail = e.what();
            r.pass = e.field == "model.R";
        }
    });
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
        if (ch == '"') q += '"';
        q += ch == '\n' ? ' ' : ch;
    }
    return q + "\"";
}

}  // namespace

SelftestReport run_selftest(std::uint64_t seed, unsigned workers)
{
    Ctx c{seed, std::max(1u, workers), {}, {}};
    gaussian_kernel_checks(c);
    model_checks(c);
    geometry_checks(c);
    rate_checks(c);
    statistic_checks(c);
    procedure_checks(c);
    lower_bound_checks(c);
    risk_checks(c);
    sweep_checks(c);
    cli_checks(c);
    return SelftestReport{std::move(c.rows), std::move(c.sweep)};
}

std::string selftest_csv(const SelftestReport& r)
{
    std::ostringstream os;
    os << "check,status,observed,expected,detail\n";
    for (const auto& row : r.rows)
        os << csv_field(row.check) << ',' << (row.pass ? "PASS" : "FAIL") << ',' << csv_field(row.observed) << ','
           << csv_field(row.expected) << ',' << csv_field(row.detail) << '\n';
    return os.str();
}

}  // namespace corrdetect
