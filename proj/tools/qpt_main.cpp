// Command-line front end: simulation, spectral k-mer estimation, population
// recovery, trace reconstruction, self-verification suites, and a benchmark
// harness. All randomness is derived from --seed through the documented
// counter scheme, so every command is a pure function of its flags (worker
// count included). Exit codes: 0 success, 1 verification/recovery failure,
// 2 usage or input error.
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qpt/bitstring.hpp"
#include "qpt/channels.hpp"
#include "qpt/kmer.hpp"
#include "qpt/population.hpp"
#include "qpt/reconstruct.hpp"
#include "qpt/rng.hpp"
#include "qpt/trace_io.hpp"
#include "qpt/verify_suites.hpp"

namespace {

using nlohmann::json;
using namespace qpt;

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

std::vector<Bits> simulate_traces(const CompositeChannel& chan, const Bits& x, std::uint64_t seed,
                                  std::uint64_t count) {
    std::vector<Bits> traces;
    traces.reserve(count);
    for (std::uint64_t t = 0; t < count; ++t) {
        Stream st(derive_key({seed, TAG_SIMULATE, t}));
        traces.push_back(sample_trace(chan, x, st));
    }
    return traces;
}

// ---------------------------------------------------------------- simulate
struct SimulateCfg {
    std::string channel;
    std::uint64_t seed = 0;
    std::uint64_t count = 0;
    std::string input;
    std::string input_file;
    int random_len = 0;
    std::string output;
};

int cmd_simulate(const SimulateCfg& cfg) {
    const CompositeChannel chan = parse_channel(cfg.channel);
    int sources = 0;
    if (!cfg.input.empty()) ++sources;
    if (!cfg.input_file.empty()) ++sources;
    if (cfg.random_len > 0) ++sources;
    if (sources != 1) {
        throw std::invalid_argument(
            "exactly one of --input, --input-file, --random-input is required");
    }
    Bits x;
    bool generated = false;
    if (!cfg.input.empty()) {
        x = parse_bits(cfg.input);
    } else if (!cfg.input_file.empty()) {
        const std::vector<Bits> lines = read_traces(cfg.input_file);
        if (lines.size() != 1) {
            throw std::invalid_argument("--input-file must contain exactly one bit string");
        }
        x = lines.front();
    } else {
        // Input stream counter 2^64-1 cannot collide with any trace index.
        Stream st(derive_key({cfg.seed, TAG_SIMULATE, ~std::uint64_t{0}}));
        x.resize(static_cast<std::size_t>(cfg.random_len));
        for (auto& v : x) v = static_cast<std::uint8_t>(st.next_bit());
        generated = true;
    }

    const std::vector<Bits> traces = simulate_traces(chan, x, cfg.seed, cfg.count);

    std::vector<std::string> header;
    header.push_back("channel: " + format_channel(chan));
    header.push_back("seed: " + std::to_string(cfg.seed));
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(hash_bits(x)));
        header.push_back("input-hash: " + std::string(buf));
    }
    header.push_back("input-length: " + std::to_string(x.size()));
    if (generated) header.push_back("input: " + format_bits(x));
    header.push_back("count: " + std::to_string(cfg.count));

    if (cfg.output.empty()) {
        write_traces(std::cout, traces, header);
    } else {
        write_traces(cfg.output, traces, header);
    }
    return 0;
}

// -------------------------------------------------------------------- kmer
struct KmerCfg {
    std::string traces;
    std::string channel;
    std::string marker;
    double alpha = 0.0;
    double eps = 0.01;
    std::uint64_t seed = 0;
    int threads = 1;
    bool exact = false;
    std::string input;
    std::string output;
};

int cmd_kmer(const KmerCfg& cfg) {
    const CompositeChannel chan = parse_channel(cfg.channel);
    const Bits marker = parse_bits(cfg.marker);
    if (marker.empty()) throw std::invalid_argument("--marker must be nonempty");
    const std::vector<Bits> traces = read_traces(cfg.traces);

    const KmerEstimate est =
        estimate_kmer(traces, chan, {marker, cfg.alpha, cfg.eps}, cfg.seed, cfg.threads);

    json out;
    out["value_re"] = est.value.real();
    out["value_im"] = est.value.imag();
    out["alpha"] = est.alpha;
    out["z_re"] = est.z_used.real();
    out["z_im"] = est.z_used.imag();
    out["n_traces"] = est.n_traces;
    out["gamma_total"] = est.gamma_total;
    out["k_prime"] = est.k_prime;
    out["stderr"] = est.stderr_proxy;
    out["bias_budget"] = est.bias_budget;
    out["mapping_exact"] = est.mapping_exact;
    if (cfg.exact) {
        if (cfg.input.empty()) throw std::invalid_argument("--exact requires --input BITS");
        const Bits x = parse_bits(cfg.input);
        const std::complex<double> zeta =
            cfg.alpha == 0.0 ? std::complex<double>(1.0, 0.0) : std::polar(1.0, cfg.alpha);
        const std::complex<double> truth = exact_kmer_value(x, marker, zeta);
        out["exact_re"] = truth.real();
        out["exact_im"] = truth.imag();
        out["abs_error"] = std::abs(est.value - truth);
    }
    emit(out.dump(2), cfg.output);
    return 0;
}

// ------------------------------------------------------------------ poprec
struct PoprecCfg {
    std::string traces;
    std::string channel;
    int k = 0;
    double eps = 0.05;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string truth;
    std::string output;
};

int cmd_poprec(const PoprecCfg& cfg) {
    const CompositeChannel chan = parse_channel(cfg.channel);
    const std::vector<Bits> traces = read_traces(cfg.traces);
    const PopulationEstimate est =
        recover_population(traces, chan, cfg.k, cfg.eps, cfg.seed, cfg.threads);

    json dist = json::object();
    for (std::size_t i = 0; i < est.clipped.size(); ++i) {
        dist[format_bits(population_string(i, cfg.k))] = est.clipped[i];
    }
    json out;
    out["k"] = est.k;
    out["n_traces"] = est.n_traces;
    out["eps_per_string"] = est.eps_per_string;
    out["dist"] = dist;

    if (!cfg.truth.empty()) {
        std::vector<double> truth(est.clipped.size(), 0.0);
        std::stringstream ss(cfg.truth);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) {
                throw std::invalid_argument("--truth items must look like BITS:PROB");
            }
            const Bits y = parse_bits(item.substr(0, colon));
            if (static_cast<int>(y.size()) != cfg.k) {
                throw std::invalid_argument("--truth string length must equal --k");
            }
            truth[population_index(y)] = std::stod(item.substr(colon + 1));
        }
        double max_raw_dev = 0.0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            max_raw_dev = std::max(max_raw_dev, std::abs(est.raw[i] - truth[i]));
        }
        out["tvd"] = tvd(est, truth);
        out["max_raw_deviation"] = max_raw_dev;
    }
    emit(out.dump(2), cfg.output);
    return 0;
}

// ------------------------------------------------------------- reconstruct
struct ReconstructCfg {
    std::string traces;
    std::string channel;
    std::string mode = "lp";
    int n = 0;
    int k = 0;
    double alpha_max = 0.78539816339744830962;
    int net_size = 64;
    double eps = 0.002;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output;
};

int cmd_reconstruct(const ReconstructCfg& cfg) {
    const CompositeChannel chan = parse_channel(cfg.channel);
    const std::vector<Bits> traces = read_traces(cfg.traces);
    ReconstructParams params;
    if (cfg.mode == "lp") {
        params.mode = ReconstructMode::lp;
    } else if (cfg.mode == "exhaustive") {
        params.mode = ReconstructMode::exhaustive;
    } else {
        throw std::invalid_argument("--mode must be lp or exhaustive");
    }
    params.n = cfg.n;
    params.k = cfg.k;
    params.alpha_max = cfg.alpha_max;
    params.net_size = cfg.net_size;
    params.eps = cfg.eps;
    params.seed = cfg.seed;
    params.threads = cfg.threads;

    const ReconstructResult res = reconstruct(traces, chan, params);

    json steps = json::array();
    for (const StepDiagnostics& s : res.steps) {
        steps.push_back({{"position", s.position},
                         {"marker0", format_bits(s.marker0)},
                         {"marker1", format_bits(s.marker1)},
                         {"feasible0", s.feasible0},
                         {"feasible1", s.feasible1},
                         {"residual0", s.residual0},
                         {"residual1", s.residual1},
                         {"chosen_bit", s.chosen_bit}});
    }
    json out;
    out["success"] = res.success;
    out["output"] = format_bits(res.output);
    out["k"] = res.k_used;
    out["mode"] = cfg.mode;
    if (!res.success) out["failure_reason"] = res.failure_reason;
    if (params.mode == ReconstructMode::lp) {
        out["bootstrap_marker"] = format_bits(res.bootstrap_marker);
        out["bootstrap_residual"] = res.bootstrap_residual;
        out["steps"] = steps;
    } else {
        out["best_score"] = res.best_score;
        out["runner_up_score"] = res.runner_up_score;
    }

    // Recovered string first (grep-friendly), diagnostics after.
    std::cout << format_bits(res.output) << '\n';
    emit(out.dump(2), cfg.output);
    return res.success ? 0 : 1;
}

// ------------------------------------------------------------------ verify
struct VerifyCfg {
    std::string suite;
    int max_n = 6;
};

int cmd_verify(const VerifyCfg& cfg) {
    VerifyOptions opts;
    opts.max_n = cfg.max_n;
    std::vector<std::string> names;
    if (cfg.suite == "all") {
        names = verify_suite_names();
    } else {
        names.push_back(cfg.suite);
    }
    bool pass = true;
    for (const std::string& name : names) {
        const SuiteResult r = verify_suite(name, opts); // throws on unknown name
        std::cout << "== suite " << name << " ==\n" << r.report;
        std::cout << (r.pass ? "PASS" : "FAIL") << ": " << name << "\n";
        pass = pass && r.pass;
    }
    return pass ? 0 : 1;
}

// ------------------------------------------------------------------- bench
struct BenchCfg {
    std::string channels; // semicolon-separated channel specs
    std::string input;
    std::string marker;
    double alpha = 0.0;
    std::string counts = "100000";
    double eps = 0.01;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output;
};

int cmd_bench(const BenchCfg& cfg) {
    const Bits x = parse_bits(cfg.input);
    const Bits marker = parse_bits(cfg.marker);
    if (marker.empty() || marker.size() > x.size()) {
        throw std::invalid_argument("--marker must be nonempty and no longer than --input");
    }
    std::vector<CompositeChannel> chans;
    {
        std::stringstream ss(cfg.channels);
        std::string item;
        while (std::getline(ss, item, ';')) {
            if (!item.empty()) chans.push_back(parse_channel(item));
        }
    }
    if (chans.empty()) throw std::invalid_argument("--channels must list at least one spec");
    std::vector<std::uint64_t> counts;
    {
        std::stringstream ss(cfg.counts);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) counts.push_back(std::stoull(item));
        }
    }
    if (counts.empty()) throw std::invalid_argument("--counts must list at least one N");

    const std::complex<double> zeta =
        cfg.alpha == 0.0 ? std::complex<double>(1.0, 0.0) : std::polar(1.0, cfg.alpha);
    const std::complex<double> truth = exact_kmer_value(x, marker, zeta);

    std::ostringstream csv;
    csv << "channel,n_traces,alpha,marker,value_re,value_im,exact_re,exact_im,abs_error,stderr,"
           "gamma_total,wall_ms\n";
    std::uint64_t row = 0;
    for (const CompositeChannel& chan : chans) {
        for (std::uint64_t count : counts) {
            std::vector<Bits> traces;
            traces.reserve(count);
            for (std::uint64_t t = 0; t < count; ++t) {
                Stream st(derive_key({cfg.seed, TAG_BENCH, row, t}));
                traces.push_back(sample_trace(chan, x, st));
            }
            const auto t0 = std::chrono::steady_clock::now();
            const KmerEstimate est =
                estimate_kmer(traces, chan, {marker, cfg.alpha, cfg.eps}, cfg.seed, cfg.threads);
            const auto t1 = std::chrono::steady_clock::now();
            const double wall_ms =
                std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count() / 1000.0;
            char line[512];
            std::snprintf(line, sizeof line,
                          "%s,%llu,%.10g,%s,%.10g,%.10g,%.10g,%.10g,%.6g,%.6g,%.6g,%.3f\n",
                          format_channel(chan).c_str(), static_cast<unsigned long long>(count),
                          cfg.alpha, format_bits(marker).c_str(), est.value.real(),
                          est.value.imag(), truth.real(), truth.imag(),
                          std::abs(est.value - truth), est.stderr_proxy, est.gamma_total, wall_ms);
            csv << line;
            ++row;
        }
    }
    emit(csv.str(), cfg.output);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"bit-string synchronization-noise toolkit: trace simulation, spectral marker "
                 "estimation, population recovery, input reconstruction, self-verification, "
                 "benchmarks"};
    app.require_subcommand(1);

    SimulateCfg sim;
    CLI::App* s = app.add_subcommand("simulate", "sample channel traces to a trace file");
    s->add_option("--channel", sim.channel, "channel spec, e.g. del:0.25,sym:0.05")->required();
    s->add_option("--seed", sim.seed, "master seed")->required();
    s->add_option("--count", sim.count, "number of traces")->required();
    s->add_option("--input", sim.input, "input bit string literal");
    s->add_option("--input-file", sim.input_file, "file holding exactly one bit string");
    s->add_option("--random-input", sim.random_len, "generate a random input of this length");
    s->add_option("--output", sim.output, "trace file path (default: stdout)");

    KmerCfg km;
    CLI::App* kc = app.add_subcommand("kmer", "estimate a marker's occurrence transform");
    kc->add_option("--traces", km.traces, "trace file")->required();
    kc->add_option("--channel", km.channel, "channel spec the traces came from")->required();
    kc->add_option("--marker", km.marker, "marker bit string w")->required();
    kc->add_option("--alpha", km.alpha, "probe frequency in [-pi, pi]")->required();
    kc->add_option("--eps", km.eps, "lift bias budget (default 0.01)");
    kc->add_option("--seed", km.seed, "master seed")->required();
    kc->add_option("--threads", km.threads, "worker threads (result-invariant)");
    kc->add_flag("--exact", km.exact, "also report the exact value (needs --input)");
    kc->add_option("--input", km.input, "ground-truth input for --exact");
    kc->add_option("--output", km.output, "JSON output path (default: stdout)");

    PoprecCfg pr;
    CLI::App* pc = app.add_subcommand("poprec", "recover a k-bit population distribution");
    pc->add_option("--traces", pr.traces, "trace file")->required();
    pc->add_option("--channel", pr.channel, "channel spec")->required();
    pc->add_option("--k", pr.k, "population string length (1..16)")->required();
    pc->add_option("--eps", pr.eps, "total bias budget split across strings (default 0.05)");
    pc->add_option("--seed", pr.seed, "master seed")->required();
    pc->add_option("--threads", pr.threads, "worker threads (result-invariant)");
    pc->add_option("--truth", pr.truth, "ground truth 'BITS:PROB,BITS:PROB' for deviation report");
    pc->add_option("--output", pr.output, "JSON output path (default: stdout)");

    ReconstructCfg rc;
    CLI::App* rcc = app.add_subcommand("reconstruct", "reconstruct the input string from traces");
    rcc->add_option("--traces", rc.traces, "trace file")->required();
    rcc->add_option("--channel", rc.channel, "channel spec")->required();
    rcc->add_option("--n", rc.n, "input length")->required();
    rcc->add_option("--k", rc.k, "marker length (default: smallest k with 2^k >= 4n)");
    rcc->add_option("--mode", rc.mode, "lp | exhaustive (default lp)");
    rcc->add_option("--alpha-max", rc.alpha_max, "frequency net half-width (default pi/4)");
    rcc->add_option("--net-size", rc.net_size, "frequency net size (default 64)");
    rcc->add_option("--eps", rc.eps, "lift bias budget per marker (default 0.002)");
    rcc->add_option("--seed", rc.seed, "master seed")->required();
    rcc->add_option("--threads", rc.threads, "worker threads (result-invariant)");
    rcc->add_option("--output", rc.output, "JSON diagnostics path (default: stdout)");

    VerifyCfg vf;
    CLI::App* vc = app.add_subcommand("verify", "run a self-check suite");
    vc->add_option("--suite", vf.suite,
                   "norms | unbiasedness | tail | gf | robson | feasibility | all")
        ->required();
    vc->add_option("--max-n", vf.max_n, "largest input length for unbiasedness (default 6)");

    BenchCfg bn;
    CLI::App* bc = app.add_subcommand("bench", "sweep a grid and emit CSV error/time rows");
    bc->add_option("--channels", bn.channels, "semicolon-separated channel specs")->required();
    bc->add_option("--input", bn.input, "fixed ground-truth input")->required();
    bc->add_option("--marker", bn.marker, "marker bit string")->required();
    bc->add_option("--alpha", bn.alpha, "probe frequency")->required();
    bc->add_option("--counts", bn.counts, "comma-separated trace counts (default 100000)");
    bc->add_option("--eps", bn.eps, "lift bias budget (default 0.01)");
    bc->add_option("--seed", bn.seed, "master seed")->required();
    bc->add_option("--threads", bn.threads, "worker threads (result-invariant)");
    bc->add_option("--output", bn.output, "CSV output path (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // help/version are success; parse errors are usage errors
    }

    try {
        if (s->parsed()) return cmd_simulate(sim);
        if (kc->parsed()) return cmd_kmer(km);
        if (pc->parsed()) return cmd_poprec(pr);
        if (rcc->parsed()) return cmd_reconstruct(rc);
        if (vc->parsed()) return cmd_verify(vf);
        if (bc->parsed()) return cmd_bench(bn);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
