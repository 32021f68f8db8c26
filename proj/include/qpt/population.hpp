#pragma once

#include <cstdint>
#include <vector>

#include "qpt/bitstring.hpp"
#include "qpt/channels.hpp"

namespace qpt {

/// Estimated distribution over all 2^k bit strings of length k. Entries are
/// indexed by the integer whose k-bit big-endian expansion spells the string
/// (population_index / population_string convert).
struct PopulationEstimate {
    int k = 0;
    std::vector<double> raw;      ///< unclipped per-string estimates (diagnostics)
    std::vector<double> clipped;  ///< clipped to [0,1] and renormalized; sums to 1
    std::size_t n_traces = 0;
    double eps_per_string = 0.0;  ///< per-string accuracy target eps / 2^k
};

/// Integer code of a length-k string: big-endian bits (first bit is the most
/// significant). Length must be at most 16.
std::size_t population_index(BitSpan y);

/// Inverse of population_index for length k.
Bits population_string(std::size_t index, int k);

/// Estimates the distribution of the channel inputs from their traces: for
/// each candidate string y of length k, the mean over traces of one
/// randomized channel-inversion evaluation of the prefix indicator of y
/// (inputs all have length k, so "starts with y" coincides with "equals y").
/// The per-string bias budget is (eps/2^k)/2 so that, with enough traces,
/// every raw estimate lands within eps/2^k of the true probability and the
/// clipped distribution lands within eps of the truth in total variation
/// distance. Raw values are kept for diagnostics; the reported distribution
/// is clipped to [0,1] and renormalized (uniform if everything clips to 0).
///
/// Each (candidate, trace) evaluation draws from a stream derived from
/// (seed, TAG_POPREC, pack_bits(y), trace index); per-candidate sums reduce
/// in fixed 4096-trace chunks in index order and candidates are independent
/// jobs, so results are bit-identical for every worker count.
///
/// Guards: k in [1, 16]; traces nonempty; eps > 0. Deletion stages are split
/// below 1/3 internally.
PopulationEstimate recover_population(const std::vector<Bits>& traces,
                                      const CompositeChannel& chan, int k, double eps,
                                      std::uint64_t seed, int threads = 1);

/// Total variation distance (1/2)·Σ_y |p_y − q_y| between two distributions
/// given as dense vectors over the same index set. Throws on length mismatch.
double tvd(const std::vector<double>& p, const std::vector<double>& q);

/// Convenience overloads comparing clipped distributions.
double tvd(const PopulationEstimate& p, const std::vector<double>& q);
double tvd(const PopulationEstimate& p, const PopulationEstimate& q);

} // namespace qpt
