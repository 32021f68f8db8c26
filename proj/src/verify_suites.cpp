#include "qpt/verify_suites.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

#include "qpt/channels.hpp"
#include "qpt/exact_oracle.hpp"
#include "qpt/kmer.hpp"
#include "qpt/qp_oracle.hpp"
#include "qpt/quasiprob.hpp"
#include "qpt/reconstruct.hpp"
#include "qpt/rng.hpp"

namespace qpt {

namespace {

class Reporter {
  public:
    template <typename... Args>
    void check(bool ok, const char* fmt, Args... args) {
        char buf[512];
        std::snprintf(buf, sizeof buf, fmt, args...);
        out_ << (ok ? "ok: " : "FAIL: ") << buf << '\n';
        pass_ = pass_ && ok;
    }
    void note(const std::string& line) { out_ << "   " << line << '\n'; }
    SuiteResult finish() && { return {pass_, out_.str()}; }

  private:
    bool pass_ = true;
    std::ostringstream out_;
};

SuiteResult suite_norms() {
    Reporter r;
    for (int i = 0; i < 20; ++i) {
        const double t = (i + 1) / 21.0; // (0, 1) interior sweep
        {
            const double delta = 0.49 * t;
            const QPDistribution q = qp_deletion(delta);
            double sum = 0.0, asum = 0.0;
            for (double w : q.weights) {
                sum += w;
                asum += std::abs(w);
            }
            const double gtrue = 1.0 / (1.0 - 2.0 * delta);
            r.check(std::abs(q.gamma - gtrue) <= 1e-9 && std::abs(sum - 1.0) <= 1e-9 &&
                        std::abs(asum - gtrue) <= 1e-6,
                    "deletion delta=%.4f gamma=%.9f (closed form %.9f), sum-1=%.2e", delta,
                    q.gamma, gtrue, sum - 1.0);
        }
        {
            const double eta = 0.95 * t;
            const QPDistribution q = qp_insertion(eta);
            const double sum = q.weights[0] + q.weights[1];
            const double gtrue = (1.0 + eta) / (1.0 - eta);
            r.check(std::abs(q.gamma - gtrue) <= 1e-9 && std::abs(sum - 1.0) <= 1e-9,
                    "insertion eta=%.4f gamma=%.9f (closed form %.9f)", eta, q.gamma, gtrue);
        }
        {
            const double sigma = 0.49 * t;
            const QPDistribution q = qp_symmetry(sigma);
            const double sum = q.weights[0] + q.weights[1];
            const double gtrue = 1.0 / (1.0 - 2.0 * sigma);
            r.check(std::abs(q.gamma - gtrue) <= 1e-9 && std::abs(sum - 1.0) <= 1e-9,
                    "symmetry sigma=%.4f gamma=%.9f (closed form %.9f)", sigma, q.gamma, gtrue);
        }
    }
    return std::move(r).finish();
}

SuiteResult suite_unbiasedness(const VerifyOptions& opts) {
    Reporter r;
    const int max_n = opts.max_n;
    if (max_n < 1 || max_n > 8) {
        throw std::invalid_argument("unbiasedness: max_n must be in [1, 8]");
    }
    const double eps = 0.01;
    const std::vector<CompositeChannel> chans = {
        parse_channel("del:0.25"),         parse_channel("ins:0.3"),
        parse_channel("sym:0.2"),          parse_channel("del:0.2,sym:0.1"),
        parse_channel("ins:0.3,del:0.2"),  parse_channel("sym:0.1,ins:0.2"),
    };
    const std::vector<Bits> markers = {{1}, {1, 0}};

    double worst = 0.0;
    std::string worst_desc = "none";
    std::size_t cases = 0;
    for (const CompositeChannel& chan : chans) {
        const CompositeChannel split = split_channel(chan, 1.0 / 3.0);
        for (const Bits& w : markers) {
            const OracleFn f = marker_indicator(w);
            const QPOracle lifted = lift_composite(f, split, eps);
            for (int len = 1; len <= max_n; ++len) {
                Bits x(static_cast<std::size_t>(len));
                for (std::uint64_t v = 0; v < (std::uint64_t{1} << len); ++v) {
                    for (int i = 0; i < len; ++i) {
                        x[static_cast<std::size_t>(i)] =
                            static_cast<std::uint8_t>((v >> (len - 1 - i)) & 1u);
                    }
                    const double truth = f.eval(x, nullptr);
                    const ExactValue got = exact_qp_expectation(lifted, x, chan);
                    const double err = std::abs(got.value - truth);
                    const double allowed = eps + got.error_bound + 1e-9;
                    ++cases;
                    if (err - got.error_bound > worst) {
                        worst = err - got.error_bound;
                        worst_desc = format_channel(chan) + " |x|=" + std::to_string(len);
                    }
                    if (err > allowed) {
                        r.check(false, "channel %s x len %d v=%llu marker k=%zu: |bias| %.3e > %.3e",
                                format_channel(chan).c_str(), len,
                                static_cast<unsigned long long>(v), w.size(), err, allowed);
                    }
                }
            }
        }
    }
    r.check(true, "grid of %zu exact lifted expectations within eps=%g + tail", cases, eps);
    r.check(worst <= eps + 1e-9, "worst tail-adjusted bias %.3e (at %s) <= %.2g", worst,
            worst_desc.c_str(), eps);
    return std::move(r).finish();
}

SuiteResult suite_tail() {
    Reporter r;
    const int trials = 100000;
    for (double p : {0.5, 0.8}) {
        for (double delta_cap : {5.0, 10.0}) {
            const int k = 10;
            const double cutoff = 4.0 * (1.0 - p) / p * k + delta_cap;
            Stream st(derive_key({0xABCDULL, TAG_VERIFY,
                                  static_cast<std::uint64_t>(p * 100),
                                  static_cast<std::uint64_t>(delta_cap)}));
            int exceed = 0;
            for (int t = 0; t < trials; ++t) {
                std::uint64_t total = 0;
                for (int j = 0; j < k; ++j) total += st.geometric(p);
                if (static_cast<double>(total) > cutoff) ++exceed;
            }
            const double rate = static_cast<double>(exceed) / trials;
            const double bound = geometric_tail_bound(p, k, delta_cap);
            r.check(rate <= bound, "p=%.1f k=%d Delta=%.0f: empirical %.3g <= bound %.3g", p, k,
                    delta_cap, rate, bound);
        }
    }
    return std::move(r).finish();
}

SuiteResult suite_gf() {
    Reporter r;
    const std::vector<std::string> specs = {"del:0.25", "ins:0.3", "sym:0.2", "del:0.2,sym:0.05",
                                            "ins:0.2,del:0.2"};
    for (const std::string& spec : specs) {
        const CompositeChannel chan = parse_channel(spec);
        const std::complex<double> z0 = inverse_gf_eval(chan, 0.0);
        r.check(z0.real() == 1.0 && z0.imag() == 0.0, "%s: alpha=0 -> exactly 1", spec.c_str());
        double cmin = 1e300, cmax = 0.0;
        for (int i = 0; i <= 30; ++i) {
            const double alpha = 1e-3 * std::pow(200.0, i / 30.0); // [1e-3, 0.2]
            const double excess = std::abs(inverse_gf_eval(chan, alpha)) - 1.0;
            r.check(excess >= -1e-12, "%s alpha=%.4f: |z| >= 1 (excess %.2e)", spec.c_str(), alpha,
                    excess);
            const double c = std::max(excess, 0.0) / (alpha * alpha);
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
        }
        const bool stable = cmax <= 1e-9 || cmax <= 1.3 * cmin + 1e-9;
        r.check(stable, "%s: |z|-1 <= K a^2 with K in [%.4g, %.4g] stable", spec.c_str(), cmin,
                cmax);
    }
    return std::move(r).finish();
}

SuiteResult suite_robson() {
    Reporter r;
    for (int k : {4, 6, 8}) {
        long long checked = 0;
        bool all_ok = true;
        int worst_max_period = k;
        for (int len = k - 1; len <= 12; ++len) {
            Bits prefix(static_cast<std::size_t>(len));
            for (std::uint64_t v = 0; v < (std::uint64_t{1} << len); ++v) {
                for (int i = 0; i < len; ++i) {
                    prefix[static_cast<std::size_t>(i)] =
                        static_cast<std::uint8_t>((v >> (len - 1 - i)) & 1u);
                }
                const auto cand = choose_marker(prefix, k);
                const int maxp = std::max(cand[0].period, cand[1].period);
                all_ok = all_ok && 2 * maxp >= k;
                worst_max_period = std::min(worst_max_period, maxp);
                // structural sanity: marker = last k-1 prefix bits + chosen bit
                for (int b = 0; b < 2; ++b) {
                    const Bits& m = cand[static_cast<std::size_t>(b)].marker;
                    bool shape = static_cast<int>(m.size()) == k && m.back() == b;
                    for (int i = 0; i + 1 < k; ++i) {
                        shape = shape && m[static_cast<std::size_t>(i)] ==
                                             prefix[static_cast<std::size_t>(len - k + 1 + i)];
                    }
                    all_ok = all_ok && shape;
                }
                ++checked;
            }
        }
        r.check(all_ok, "k=%d: all %lld prefixes up to length 12 give max period %d >= %d/2", k,
                checked, worst_max_period, k);
    }
    return std::move(r).finish();
}

SuiteResult suite_feasibility() {
    Reporter r;
    std::mt19937_64 gen(0xFEA51B1EULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    int feas_ok = 0, infeas_ok = 0, tight_ok = 0, opt_ok = 0, trials = 0;
    for (int trial = 0; trial < 120; ++trial) {
        const int d = 1 + static_cast<int>(gen() % 9);
        FeasibilityProblem p;
        p.nvars = d;
        p.lo.assign(static_cast<std::size_t>(d), 0.0);
        p.hi.assign(static_cast<std::size_t>(d), 1.0);
        std::vector<double> xstar(static_cast<std::size_t>(d));
        for (auto& v : xstar) v = unit(gen);
        const int mrows = 1 + static_cast<int>(gen() % 12);
        for (int i = 0; i < mrows; ++i) {
            LinearRow row;
            row.coef.resize(static_cast<std::size_t>(d));
            double dot = 0.0;
            for (int j = 0; j < d; ++j) {
                row.coef[static_cast<std::size_t>(j)] = coef(gen);
                dot += row.coef[static_cast<std::size_t>(j)] * xstar[static_cast<std::size_t>(j)];
            }
            row.bound = dot + 0.01 * unit(gen);
            p.rows.push_back(std::move(row));
        }
        const FeasibilityResult rf = solve_feasibility(p);
        if (rf.verdict == FeasVerdict::feasible) ++feas_ok;

        std::vector<double> c(static_cast<std::size_t>(d));
        double tlo = 0.0, thi = 0.0;
        for (int j = 0; j < d; ++j) {
            c[static_cast<std::size_t>(j)] = coef(gen);
            tlo += std::min(0.0, c[static_cast<std::size_t>(j)]);
            thi += std::max(0.0, c[static_cast<std::size_t>(j)]);
        }
        if (thi - tlo < 0.5) continue;
        ++trials;
        const double L = tlo + 0.3 * (thi - tlo);
        const double U = tlo + 0.7 * (thi - tlo);
        FeasibilityProblem q = p;
        std::vector<double> nc(c);
        for (auto& v : nc) v = -v;
        q.rows.push_back({c, L});
        q.rows.push_back({nc, -U});
        const FeasibilityResult rg = solve_feasibility(q);
        if (rg.verdict == FeasVerdict::infeasible) ++infeas_ok;
        if (rg.violation >= (U - L) - 1e-7) ++tight_ok;
        double best_rand = 1e300;
        std::vector<double> y(static_cast<std::size_t>(d));
        for (int s = 0; s < 200; ++s) {
            for (auto& v : y) v = unit(gen);
            double viol = 0.0;
            for (const LinearRow& row : q.rows) {
                double lhs = 0.0;
                for (int j = 0; j < d; ++j) {
                    lhs += row.coef[static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(j)];
                }
                viol += std::max(0.0, lhs - row.bound);
            }
            best_rand = std::min(best_rand, viol);
        }
        if (rg.violation <= best_rand + 1e-7) ++opt_ok;
    }
    r.check(feas_ok == 120, "feasible-by-construction instances detected: %d/120", feas_ok);
    r.check(infeas_ok == trials, "gap instances judged infeasible: %d/%d", infeas_ok, trials);
    r.check(tight_ok == trials, "violation >= true gap: %d/%d", tight_ok, trials);
    r.check(opt_ok == trials, "violation <= 200-point random search: %d/%d", opt_ok, trials);

    FeasibilityProblem contra;
    contra.nvars = 1;
    contra.lo = {0.0};
    contra.hi = {1.0};
    contra.rows.push_back({{-1.0}, -0.6});
    contra.rows.push_back({{1.0}, 0.4});
    const FeasibilityResult rc = solve_feasibility(contra);
    r.check(rc.verdict == FeasVerdict::infeasible && std::abs(rc.violation - 0.2) < 1e-9,
            "v>=0.6 & v<=0.4 -> infeasible with violation %.9f (want 0.2)", rc.violation);
    return std::move(r).finish();
}

} // namespace

const std::vector<std::string>& verify_suite_names() {
    static const std::vector<std::string> names = {"norms", "unbiasedness", "tail",
                                                   "gf",    "robson",       "feasibility"};
    return names;
}

SuiteResult verify_suite(const std::string& name, const VerifyOptions& opts) {
    if (name == "norms") return suite_norms();
    if (name == "unbiasedness") return suite_unbiasedness(opts);
    if (name == "tail") return suite_tail();
    if (name == "gf") return suite_gf();
    if (name == "robson") return suite_robson();
    if (name == "feasibility") return suite_feasibility();
    throw std::invalid_argument("unknown verify suite: " + name);
}

} // namespace qpt
