#include "qpt/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "qpt/population.hpp"
#include "qpt/rng.hpp"

namespace qpt {

int period(BitSpan w) {
    if (w.empty()) throw std::invalid_argument("period: empty string");
    const std::size_t k = w.size();
    for (std::size_t p = 1; p < k; ++p) {
        bool ok = true;
        for (std::size_t i = 0; i + p < k; ++i) {
            if (w[i] != w[i + p]) {
                ok = false;
                break;
            }
        }
        if (ok) return static_cast<int>(p);
    }
    return static_cast<int>(k);
}

std::array<MarkerCandidate, 2> choose_marker(BitSpan prefix, int k) {
    if (k < 1) throw std::invalid_argument("choose_marker: k must be >= 1");
    if (prefix.size() + 1 < static_cast<std::size_t>(k)) {
        throw std::invalid_argument("choose_marker: prefix must have at least k - 1 bits");
    }
    std::array<MarkerCandidate, 2> out;
    for (int b = 0; b < 2; ++b) {
        Bits m;
        m.reserve(static_cast<std::size_t>(k));
        for (std::size_t i = prefix.size() - static_cast<std::size_t>(k - 1); i < prefix.size();
             ++i) {
            m.push_back(prefix[i]);
        }
        m.push_back(static_cast<std::uint8_t>(b));
        out[static_cast<std::size_t>(b)].bit = b;
        out[static_cast<std::size_t>(b)].period = period(m);
        out[static_cast<std::size_t>(b)].marker = std::move(m);
    }
    if (2 * std::max(out[0].period, out[1].period) < k) {
        throw std::logic_error("choose_marker: no candidate reaches period k/2 (bug)");
    }
    return out;
}

std::vector<double> frequency_net(double alpha_max, int M) {
    if (M < 1) throw std::invalid_argument("frequency_net: M must be >= 1");
    if (!(alpha_max >= 0.0)) throw std::invalid_argument("frequency_net: alpha_max must be >= 0");
    if (M == 1) return {0.0};
    std::vector<double> net(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
        net[static_cast<std::size_t>(m)] = alpha_max * (2.0 * m / (M - 1) - 1.0);
    }
    net.front() = -alpha_max;
    net.back() = alpha_max;
    return net;
}

int default_marker_length(int n) {
    if (n < 1) throw std::invalid_argument("default_marker_length: n must be >= 1");
    int k = 1;
    while (k < 16 && (std::int64_t{1} << k) < 4 * static_cast<std::int64_t>(n)) ++k;
    return std::min(k, std::min(n, 16));
}

FeasibilityProblem build_feasibility(const MarkerConstraintSet& cs) {
    const int k = static_cast<int>(cs.marker.size());
    if (k < 1) throw std::invalid_argument("build_feasibility: empty marker");
    if (cs.n < k) throw std::invalid_argument("build_feasibility: n smaller than the marker");
    const int nvars = cs.n - k + 1;

    FeasibilityProblem p;
    p.nvars = nvars;
    p.lo.assign(static_cast<std::size_t>(nvars), 0.0);
    p.hi.assign(static_cast<std::size_t>(nvars), 1.0);
    for (const auto& [pos, bit] : cs.fixed) {
        if (pos < 0 || pos >= nvars) {
            throw std::invalid_argument("build_feasibility: fixed position out of range");
        }
        if (bit != 0 && bit != 1) {
            throw std::invalid_argument("build_feasibility: fixed value must be 0 or 1");
        }
        p.lo[static_cast<std::size_t>(pos)] = static_cast<double>(bit);
        p.hi[static_cast<std::size_t>(pos)] = static_cast<double>(bit);
    }

    if (cs.sparsity_window >= 2) {
        const int wlen = std::min(cs.sparsity_window, nvars);
        for (int l = 0; l + wlen <= nvars; ++l) {
            LinearRow row;
            row.coef.assign(static_cast<std::size_t>(nvars), 0.0);
            for (int j = l; j < l + wlen; ++j) row.coef[static_cast<std::size_t>(j)] = 1.0;
            row.bound = 1.0;
            p.rows.push_back(std::move(row));
        }
    }

    double prev = -std::numeric_limits<double>::infinity();
    for (const NetPoint& pt : cs.net) {
        if (!(pt.tol > 0.0)) {
            throw std::invalid_argument("build_feasibility: tolerance must be positive");
        }
        if (pt.alpha < prev) {
            throw std::invalid_argument("build_feasibility: net frequencies must be sorted");
        }
        prev = pt.alpha;
        std::vector<double> re(static_cast<std::size_t>(nvars)), im(static_cast<std::size_t>(nvars));
        for (int j = 0; j < nvars; ++j) {
            re[static_cast<std::size_t>(j)] = std::cos(pt.alpha * j);
            im[static_cast<std::size_t>(j)] = std::sin(pt.alpha * j);
        }
        std::vector<double> nre(re), nim(im);
        for (double& c : nre) c = -c;
        for (double& c : nim) c = -c;
        p.rows.push_back({re, pt.estimate.real() + pt.tol});
        p.rows.push_back({std::move(nre), pt.tol - pt.estimate.real()});
        p.rows.push_back({im, pt.estimate.imag() + pt.tol});
        p.rows.push_back({std::move(nim), pt.tol - pt.estimate.imag()});
    }
    return p;
}

namespace {

// Sum of row violations at x, straight from the problem definition.
double summed_violation(const FeasibilityProblem& p, const std::vector<double>& x) {
    double acc = 0.0;
    for (const LinearRow& row : p.rows) {
        double lhs = 0.0;
        for (int j = 0; j < p.nvars; ++j) {
            lhs += row.coef[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
        }
        acc += std::max(0.0, lhs - row.bound);
    }
    return acc;
}

} // namespace

FeasibilityResult solve_feasibility(const FeasibilityProblem& p) {
    const int d = p.nvars;
    const int m = static_cast<int>(p.rows.size());
    if (d < 0 || static_cast<int>(p.lo.size()) != d || static_cast<int>(p.hi.size()) != d) {
        throw std::invalid_argument("solve_feasibility: box size mismatch");
    }
    for (const LinearRow& row : p.rows) {
        if (static_cast<int>(row.coef.size()) != d) {
            throw std::invalid_argument("solve_feasibility: row width mismatch");
        }
        if (!std::isfinite(row.bound)) {
            throw std::invalid_argument("solve_feasibility: non-finite bound");
        }
        for (double c : row.coef) {
            if (!std::isfinite(c)) throw std::invalid_argument("solve_feasibility: non-finite row");
        }
    }
    for (int j = 0; j < d; ++j) {
        if (!(p.lo[static_cast<std::size_t>(j)] <= p.hi[static_cast<std::size_t>(j)])) {
            throw std::invalid_argument("solve_feasibility: inconsistent bounds");
        }
    }

    // Minimize the summed violation: rows become a.x + s_i - t_i = b with
    // slack s_i >= 0 and violation t_i >= 0, objective sum t_i. Dense
    // bounded-variable simplex; structural variables live in their boxes,
    // nonbasic variables sit at a bound. Dantzig pricing with a Bland
    // fallback once the objective stalls, so the solve cannot cycle.
    const double INF = std::numeric_limits<double>::infinity();
    const int ncols = d + 2 * m;
    std::vector<double> T(static_cast<std::size_t>(m) * static_cast<std::size_t>(ncols), 0.0);
    std::vector<double> rhs(static_cast<std::size_t>(m), 0.0);
    std::vector<double> clo(static_cast<std::size_t>(ncols), 0.0);
    std::vector<double> chi(static_cast<std::size_t>(ncols), INF);
    std::vector<double> cost(static_cast<std::size_t>(ncols), 0.0);
    for (int j = 0; j < d; ++j) {
        clo[static_cast<std::size_t>(j)] = p.lo[static_cast<std::size_t>(j)];
        chi[static_cast<std::size_t>(j)] = p.hi[static_cast<std::size_t>(j)];
    }
    for (int i = 0; i < m; ++i) cost[static_cast<std::size_t>(d + m + i)] = 1.0;

    auto at = [&](int i, int j) -> double& {
        return T[static_cast<std::size_t>(i) * static_cast<std::size_t>(ncols) +
                 static_cast<std::size_t>(j)];
    };

    std::vector<int> bas(static_cast<std::size_t>(m), -1);
    std::vector<char> isbas(static_cast<std::size_t>(ncols), 0);
    std::vector<char> upper(static_cast<std::size_t>(ncols), 0);

    for (int i = 0; i < m; ++i) {
        double r0 = p.rows[static_cast<std::size_t>(i)].bound;
        for (int j = 0; j < d; ++j) {
            const double a = p.rows[static_cast<std::size_t>(i)].coef[static_cast<std::size_t>(j)];
            at(i, j) = a;
            r0 -= a * clo[static_cast<std::size_t>(j)];
        }
        at(i, d + i) = 1.0;
        at(i, d + m + i) = -1.0;
        rhs[static_cast<std::size_t>(i)] = p.rows[static_cast<std::size_t>(i)].bound;
        if (r0 >= 0.0) {
            bas[static_cast<std::size_t>(i)] = d + i; // slack basic
        } else {
            for (int j = 0; j < ncols; ++j) at(i, j) = -at(i, j);
            rhs[static_cast<std::size_t>(i)] = -rhs[static_cast<std::size_t>(i)];
            bas[static_cast<std::size_t>(i)] = d + m + i; // violation basic
        }
        isbas[static_cast<std::size_t>(bas[static_cast<std::size_t>(i)])] = 1;
    }

    std::vector<double> val(static_cast<std::size_t>(ncols), 0.0);
    auto compute_values = [&] {
        for (int j = 0; j < ncols; ++j) {
            val[static_cast<std::size_t>(j)] =
                isbas[static_cast<std::size_t>(j)]
                    ? 0.0
                    : (upper[static_cast<std::size_t>(j)] ? chi[static_cast<std::size_t>(j)]
                                                          : clo[static_cast<std::size_t>(j)]);
        }
        for (int i = 0; i < m; ++i) {
            double v = rhs[static_cast<std::size_t>(i)];
            const double* row = &T[static_cast<std::size_t>(i) * static_cast<std::size_t>(ncols)];
            for (int j = 0; j < ncols; ++j) {
                if (!isbas[static_cast<std::size_t>(j)]) {
                    v -= row[static_cast<std::size_t>(j)] * val[static_cast<std::size_t>(j)];
                }
            }
            val[static_cast<std::size_t>(bas[static_cast<std::size_t>(i)])] = v;
        }
    };
    auto objective = [&] {
        double o = 0.0;
        for (int i = 0; i < m; ++i) {
            if (bas[static_cast<std::size_t>(i)] >= d + m) {
                o += val[static_cast<std::size_t>(bas[static_cast<std::size_t>(i)])];
            }
        }
        return o;
    };

    const double rtol = 1e-9;
    const double ptol = 1e-9;
    const int cap = 2000 + 20 * (m + d);
    std::vector<double> red(static_cast<std::size_t>(ncols), 0.0);
    compute_values();
    bool optimal = false;
    int it = 0;
    int stall = 0;
    double last_obj = INF;

    for (; it < cap; ++it) {
        if (objective() <= p.eps_feas * 0.5) break; // already feasible enough

        for (int j = 0; j < ncols; ++j) red[static_cast<std::size_t>(j)] = cost[static_cast<std::size_t>(j)];
        for (int i = 0; i < m; ++i) {
            if (cost[static_cast<std::size_t>(bas[static_cast<std::size_t>(i)])] == 0.0) continue;
            const double* row = &T[static_cast<std::size_t>(i) * static_cast<std::size_t>(ncols)];
            for (int j = 0; j < ncols; ++j) {
                red[static_cast<std::size_t>(j)] -= row[static_cast<std::size_t>(j)];
            }
        }

        const bool bland = stall >= 50;
        int enter = -1;
        int dir = 0;
        double best_score = rtol;
        for (int j = 0; j < ncols; ++j) {
            if (isbas[static_cast<std::size_t>(j)]) continue;
            if (chi[static_cast<std::size_t>(j)] - clo[static_cast<std::size_t>(j)] <= 0.0) continue;
            double score;
            int dd;
            if (!upper[static_cast<std::size_t>(j)] && red[static_cast<std::size_t>(j)] < -rtol) {
                score = -red[static_cast<std::size_t>(j)];
                dd = +1;
            } else if (upper[static_cast<std::size_t>(j)] &&
                       red[static_cast<std::size_t>(j)] > rtol) {
                score = red[static_cast<std::size_t>(j)];
                dd = -1;
            } else {
                continue;
            }
            if (bland) {
                enter = j;
                dir = dd;
                break;
            }
            if (score > best_score) {
                best_score = score;
                enter = j;
                dir = dd;
            }
        }
        if (enter < 0) {
            optimal = true;
            break;
        }

        // Ratio test: how far the entering variable can move before a basic
        // variable hits a bound (or the entering variable hits its own
        // opposite bound, a bound flip with no pivot).
        double delta = chi[static_cast<std::size_t>(enter)] - clo[static_cast<std::size_t>(enter)];
        int leave = -1;
        for (int i = 0; i < m; ++i) {
            const double coef = at(i, enter);
            const double rate = -static_cast<double>(dir) * coef;
            const int bi = bas[static_cast<std::size_t>(i)];
            double cand;
            if (rate < -ptol) {
                cand = (val[static_cast<std::size_t>(bi)] - clo[static_cast<std::size_t>(bi)]) /
                       (-rate);
            } else if (rate > ptol && chi[static_cast<std::size_t>(bi)] < INF) {
                cand = (chi[static_cast<std::size_t>(bi)] - val[static_cast<std::size_t>(bi)]) /
                       rate;
            } else {
                continue;
            }
            if (cand < 0.0) cand = 0.0;
            if (cand < delta - 1e-12) {
                delta = cand;
                leave = i;
            } else if (leave >= 0 && cand <= delta + 1e-12 &&
                       bi < bas[static_cast<std::size_t>(leave)]) {
                leave = i; // Bland tie-break: smallest leaving variable index
            }
        }
        if (delta == INF) break; // numerically unbounded: bail to undecided

        if (leave < 0) {
            upper[static_cast<std::size_t>(enter)] ^= 1; // bound flip
        } else {
            const int lv = bas[static_cast<std::size_t>(leave)];
            const double coef = at(leave, enter);
            const double rate = -static_cast<double>(dir) * coef;
            upper[static_cast<std::size_t>(lv)] = rate > 0.0 ? 1 : 0;
            const double inv = 1.0 / coef;
            for (int j = 0; j < ncols; ++j) at(leave, j) *= inv;
            rhs[static_cast<std::size_t>(leave)] *= inv;
            for (int i = 0; i < m; ++i) {
                if (i == leave) continue;
                const double f = at(i, enter);
                if (f == 0.0) continue;
                const double* prow =
                    &T[static_cast<std::size_t>(leave) * static_cast<std::size_t>(ncols)];
                double* row = &T[static_cast<std::size_t>(i) * static_cast<std::size_t>(ncols)];
                for (int j = 0; j < ncols; ++j) {
                    row[static_cast<std::size_t>(j)] -= f * prow[static_cast<std::size_t>(j)];
                }
                rhs[static_cast<std::size_t>(i)] -= f * rhs[static_cast<std::size_t>(leave)];
            }
            isbas[static_cast<std::size_t>(lv)] = 0;
            isbas[static_cast<std::size_t>(enter)] = 1;
            upper[static_cast<std::size_t>(enter)] = 0;
            bas[static_cast<std::size_t>(leave)] = enter;
        }
        compute_values();
        const double obj = objective();
        if (obj < last_obj - 1e-12) {
            stall = 0;
            last_obj = obj;
        } else {
            ++stall;
        }
    }

    FeasibilityResult out;
    out.iterations = it;
    out.witness.resize(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        out.witness[static_cast<std::size_t>(j)] =
            std::min(chi[static_cast<std::size_t>(j)],
                     std::max(clo[static_cast<std::size_t>(j)], val[static_cast<std::size_t>(j)]));
    }
    out.violation = summed_violation(p, out.witness);
    if (out.violation <= p.eps_feas) {
        out.verdict = FeasVerdict::feasible;
    } else if (optimal) {
        out.verdict = FeasVerdict::infeasible;
    } else {
        out.verdict = FeasVerdict::undecided;
    }
    return out;
}

MarkerEstimateCache::MarkerEstimateCache(const std::vector<Bits>& traces,
                                         const CompositeChannel& chan,
                                         const ReconstructParams& params)
    : traces_(&traces),
      chan_(chan),
      params_(params),
      net_(frequency_net(params.alpha_max, params.net_size)) {
    if (traces.empty()) throw std::invalid_argument("MarkerEstimateCache: no traces");
}

const MarkerEstimates& MarkerEstimateCache::get(const Bits& marker) {
    const std::uint64_t key = pack_bits(marker);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    const KmerPlan plan =
        plan_kmer(*traces_, chan_, marker, params_.eps, params_.seed, params_.threads);
    MarkerEstimates me;
    me.marker = marker;
    me.points.reserve(net_.size());
    for (double a : net_) {
        const KmerEstimate est = estimate_kmer_at(plan, a);
        NetPoint pt;
        pt.alpha = a;
        pt.estimate = est.value;
        pt.tol = std::max(params_.c1 * est.stderr_proxy + params_.c2 * est.bias_budget, 1e-9);
        me.points.push_back(pt);
    }
    return cache_.emplace(key, std::move(me)).first->second;
}

namespace {

// Occurrence positions of `marker` that the hypothesized prefix fully
// determines: every window lying inside the prefix is pinned to whether it
// equals the marker.
std::vector<std::pair<int, int>> fixed_from_prefix(const Bits& hyp, const Bits& marker, int n) {
    const int k = static_cast<int>(marker.size());
    const int nvars = n - k + 1;
    std::vector<std::pair<int, int>> fixed;
    for (int j = 0; j + k <= static_cast<int>(hyp.size()) && j < nvars; ++j) {
        const bool eq = std::equal(marker.begin(), marker.end(),
                                   hyp.begin() + static_cast<std::ptrdiff_t>(j));
        fixed.emplace_back(j, eq ? 1 : 0);
    }
    return fixed;
}

struct BlockOutcome {
    bool alive = false;   // feasible or undecided
    double residual = 0.0;
};

BlockOutcome test_block(MarkerEstimateCache& cache, const Bits& marker, int n,
                        std::vector<std::pair<int, int>> fixed) {
    const MarkerEstimates& me = cache.get(marker);
    MarkerConstraintSet cs;
    cs.marker = me.marker;
    cs.n = n;
    cs.net = me.points;
    cs.sparsity_window = period(me.marker); // own-period window: sound for every marker
    cs.fixed = std::move(fixed);
    const FeasibilityResult fr = solve_feasibility(build_feasibility(cs));
    return {fr.verdict != FeasVerdict::infeasible, fr.violation};
}

ReconstructResult run_exhaustive(MarkerEstimateCache& cache, int n, int k,
                                 ReconstructResult res, int threads) {
    if (n > 22) throw std::invalid_argument("reconstruct: exhaustive mode caps n at 22");
    const int P = n - k + 1;
    const std::vector<double>& net = cache.net();
    const int M = static_cast<int>(net.size());
    const std::size_t nw = std::size_t{1} << k;

    std::vector<const MarkerEstimates*> est(nw);
    for (std::size_t w = 0; w < nw; ++w) {
        est[w] = &cache.get(population_string(w, k));
    }

    // score(c) = sum_{w,m} |S_{w,m}(c) - E_{w,m}|^2 with
    // S_{w,m}(c) = sum_{p: window_p(c) = w} e^{i p alpha_m}, expanded into
    // candidate-independent tables:
    //   CE = sum |E|^2, F[w][p] = sum_m Re(e^{i p a_m} conj(E_{w,m})),
    //   D[dp] = sum_m cos(dp a_m);
    // score = CE - 2 sum_p F[u_p][p] + sum_p D[0] + 2 sum_{p<p', u equal} D[p'-p].
    double CE = 0.0;
    std::vector<double> F(nw * static_cast<std::size_t>(P), 0.0);
    std::vector<double> D(static_cast<std::size_t>(P), 0.0);
    for (int dp = 0; dp < P; ++dp) {
        double acc = 0.0;
        for (int mm = 0; mm < M; ++mm) acc += std::cos(net[static_cast<std::size_t>(mm)] * dp);
        D[static_cast<std::size_t>(dp)] = acc;
    }
    for (std::size_t w = 0; w < nw; ++w) {
        for (int mm = 0; mm < M; ++mm) {
            const std::complex<double> E = est[w]->points[static_cast<std::size_t>(mm)].estimate;
            const double a = net[static_cast<std::size_t>(mm)];
            CE += std::norm(E);
            for (int pp = 0; pp < P; ++pp) {
                F[w * static_cast<std::size_t>(P) + static_cast<std::size_t>(pp)] +=
                    std::cos(a * pp) * E.real() + std::sin(a * pp) * E.imag();
            }
        }
    }

    const std::uint32_t kmask = static_cast<std::uint32_t>((1u << k) - 1u);
    auto score_of = [&](std::uint64_t c) {
        std::uint32_t u[32];
        for (int pp = 0; pp < P; ++pp) {
            u[pp] = static_cast<std::uint32_t>(c >> (n - k - pp)) & kmask;
        }
        double s = CE;
        for (int pp = 0; pp < P; ++pp) {
            s -= 2.0 * F[static_cast<std::size_t>(u[pp]) * static_cast<std::size_t>(P) +
                         static_cast<std::size_t>(pp)];
            s += D[0];
            for (int p2 = pp + 1; p2 < P; ++p2) {
                if (u[p2] == u[pp]) s += 2.0 * D[static_cast<std::size_t>(p2 - pp)];
            }
        }
        return s;
    };

    struct Best {
        double s0 = std::numeric_limits<double>::infinity();
        double s1 = std::numeric_limits<double>::infinity();
        std::uint64_t c0 = 0, c1 = 0;
        void consider(std::uint64_t c, double s) {
            if (s < s0 || (s == s0 && c < c0)) {
                s1 = s0;
                c1 = c0;
                s0 = s;
                c0 = c;
            } else if (s < s1 || (s == s1 && c < c1)) {
                s1 = s;
                c1 = c;
            }
        }
    };

    const std::uint64_t total = std::uint64_t{1} << n;
    const int workers = std::max(1, std::min<int>(threads, 16));
    std::vector<Best> part(static_cast<std::size_t>(workers));
    auto scan = [&](int wk) {
        const std::uint64_t lo = total * static_cast<std::uint64_t>(wk) /
                                 static_cast<std::uint64_t>(workers);
        const std::uint64_t hi = total * static_cast<std::uint64_t>(wk + 1) /
                                 static_cast<std::uint64_t>(workers);
        Best b;
        for (std::uint64_t c = lo; c < hi; ++c) b.consider(c, score_of(c));
        part[static_cast<std::size_t>(wk)] = b;
    };
    if (workers <= 1) {
        scan(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int wk = 0; wk < workers; ++wk) pool.emplace_back(scan, wk);
        for (std::thread& th : pool) th.join();
    }
    Best best;
    for (const Best& b : part) {
        if (b.s0 < std::numeric_limits<double>::infinity()) best.consider(b.c0, b.s0);
        if (b.s1 < std::numeric_limits<double>::infinity()) best.consider(b.c1, b.s1);
    }

    Bits x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>((best.c0 >> (n - 1 - i)) & 1u);
    }
    res.output = std::move(x);
    res.best_score = best.s0;
    res.runner_up_score = best.s1;
    res.success = true;
    return res;
}

} // namespace

ReconstructResult reconstruct_with(MarkerEstimateCache& cache, const ReconstructParams& params) {
    ReconstructResult res;
    const int n = params.n;
    if (n < 1) throw std::invalid_argument("reconstruct: n must be >= 1");
    const int k = params.k > 0 ? params.k : default_marker_length(n);
    if (k > n) throw std::invalid_argument("reconstruct: marker length exceeds n");
    if (k > 16) throw std::invalid_argument("reconstruct: marker length must be <= 16");
    res.k_used = k;

    if (params.mode == ReconstructMode::exhaustive) {
        return run_exhaustive(cache, n, k, std::move(res), params.threads);
    }

    // Bootstrap: the length-k prefix whose own block, with the occurrence at
    // position 0 pinned present, is feasible with the smallest residual.
    const std::size_t m2k = std::size_t{1} << k;
    bool found = false;
    double best_res = 0.0;
    std::size_t best_idx = 0;
    for (std::size_t idx = 0; idx < m2k; ++idx) {
        const Bits w = population_string(idx, k);
        const BlockOutcome oc = test_block(cache, w, n, {{0, 1}});
        if (!oc.alive) continue;
        if (!found || oc.residual < best_res) {
            found = true;
            best_res = oc.residual;
            best_idx = idx;
        }
    }
    if (!found) {
        res.success = false;
        res.failure_reason = "no feasible length-k prefix at bootstrap";
        return res;
    }
    Bits r = population_string(best_idx, k);
    res.bootstrap_marker = r;
    res.bootstrap_residual = best_res;

    while (static_cast<int>(r.size()) < n) {
        const int pos = static_cast<int>(r.size());
        const auto cands = choose_marker(r, k);
        StepDiagnostics diag;
        diag.position = pos;
        diag.marker0 = cands[0].marker;
        diag.marker1 = cands[1].marker;
        bool alive[2];
        double resid[2];
        for (int b = 0; b < 2; ++b) {
            Bits hyp = r;
            hyp.push_back(static_cast<std::uint8_t>(b));
            // The hypothesis pins, for BOTH candidate markers, every
            // occurrence position its prefix fully determines: the
            // candidate's own marker present at the new position, the rival
            // marker absent there.
            const BlockOutcome own = test_block(
                cache, cands[static_cast<std::size_t>(b)].marker, n,
                fixed_from_prefix(hyp, cands[static_cast<std::size_t>(b)].marker, n));
            const BlockOutcome rival = test_block(
                cache, cands[static_cast<std::size_t>(1 - b)].marker, n,
                fixed_from_prefix(hyp, cands[static_cast<std::size_t>(1 - b)].marker, n));
            alive[b] = own.alive && rival.alive;
            resid[b] = own.residual + rival.residual;
        }
        diag.feasible0 = alive[0];
        diag.feasible1 = alive[1];
        diag.residual0 = resid[0];
        diag.residual1 = resid[1];
        int chosen;
        if (alive[0] && alive[1]) {
            chosen = resid[0] <= resid[1] ? 0 : 1;
        } else if (alive[0]) {
            chosen = 0;
        } else if (alive[1]) {
            chosen = 1;
        } else {
            diag.chosen_bit = -1;
            res.steps.push_back(std::move(diag));
            res.output = r;
            res.success = false;
            res.failure_reason = "both hypotheses infeasible at position " + std::to_string(pos);
            return res;
        }
        diag.chosen_bit = chosen;
        res.steps.push_back(std::move(diag));
        r.push_back(static_cast<std::uint8_t>(chosen));
    }

    res.output = std::move(r);
    res.success = true;
    return res;
}

ReconstructResult reconstruct(const std::vector<Bits>& traces, const CompositeChannel& chan,
                              const ReconstructParams& params) {
    MarkerEstimateCache cache(traces, chan, params);
    return reconstruct_with(cache, params);
}

} // namespace qpt
