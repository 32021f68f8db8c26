#include "qpt/population.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <thread>

#include "qpt/kmer.hpp"
#include "qpt/qp_oracle.hpp"
#include "qpt/rng.hpp"

namespace qpt {

namespace {

constexpr std::size_t kChunk = 4096;

} // namespace

std::size_t population_index(BitSpan y) {
    if (y.size() > 16) throw std::invalid_argument("population_index: length must be <= 16");
    std::size_t v = 0;
    for (auto b : y) v = (v << 1) | (b & 1u);
    return v;
}

Bits population_string(std::size_t index, int k) {
    if (k < 1 || k > 16) throw std::invalid_argument("population_string: k must be in [1, 16]");
    if (index >= (std::size_t{1} << k)) {
        throw std::invalid_argument("population_string: index out of range");
    }
    Bits y(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        y[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>((index >> (k - 1 - i)) & 1u);
    }
    return y;
}

PopulationEstimate recover_population(const std::vector<Bits>& traces,
                                      const CompositeChannel& chan, int k, double eps,
                                      std::uint64_t seed, int threads) {
    if (k < 1 || k > 16) throw std::invalid_argument("recover_population: k must be in [1, 16]");
    if (traces.empty()) throw std::invalid_argument("recover_population: no traces");
    if (!(eps > 0.0)) throw std::invalid_argument("recover_population: eps must be positive");
    if (threads < 1) throw std::invalid_argument("recover_population: threads must be >= 1");

    const CompositeChannel split = split_channel(chan, 1.0 / 3.0);
    const std::size_t m = std::size_t{1} << k;
    const double eps_string = std::ldexp(eps, -k);

    PopulationEstimate est;
    est.k = k;
    est.n_traces = traces.size();
    est.eps_per_string = eps_string;
    est.raw.assign(m, 0.0);

    // One candidate is one job: a single worker owns its whole trace sweep,
    // so the chunked accumulation order is fixed no matter how many workers
    // run. Candidates are assigned round-robin by index.
    auto run_candidate = [&](std::size_t idx) {
        const Bits y = population_string(idx, k);
        const QPOracle oracle = lift_composite(marker_indicator(y), split, eps_string / 2.0);
        const std::uint64_t ypack = pack_bits(y);
        double total = 0.0;
        for (std::size_t start = 0; start < traces.size(); start += kChunk) {
            const std::size_t stop = std::min(traces.size(), start + kChunk);
            double chunk = 0.0;
            for (std::size_t t = start; t < stop; ++t) {
                Stream st(derive_key({seed, TAG_POPREC, ypack, static_cast<std::uint64_t>(t)}));
                chunk += eval_qp(oracle, traces[t], st);
            }
            total += chunk;
        }
        est.raw[idx] = total / static_cast<double>(traces.size());
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), m);
    if (workers <= 1) {
        for (std::size_t idx = 0; idx < m; ++idx) run_candidate(idx);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t idx = w; idx < m; idx += workers) run_candidate(idx);
            });
        }
        for (std::thread& th : pool) th.join();
    }

    est.clipped.assign(m, 0.0);
    double sum = 0.0;
    for (std::size_t idx = 0; idx < m; ++idx) {
        est.clipped[idx] = std::min(1.0, std::max(0.0, est.raw[idx]));
        sum += est.clipped[idx];
    }
    if (sum > 0.0) {
        for (double& v : est.clipped) v /= sum;
    } else {
        const double uniform = 1.0 / static_cast<double>(m);
        for (double& v : est.clipped) v = uniform;
    }
    return est;
}

double tvd(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw std::invalid_argument("tvd: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
    return 0.5 * acc;
}

double tvd(const PopulationEstimate& p, const std::vector<double>& q) {
    return tvd(p.clipped, q);
}

double tvd(const PopulationEstimate& p, const PopulationEstimate& q) {
    return tvd(p.clipped, q.clipped);
}

} // namespace qpt
