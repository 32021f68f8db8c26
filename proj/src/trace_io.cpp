#include "qpt/trace_io.hpp"

#include <fstream>
#include <sstream>

namespace qpt {

std::vector<Bits> parse_traces(std::istream& in) {
    std::vector<Bits> traces;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line.front() == '#') continue;
        Bits t;
        t.reserve(line.size());
        for (char c : line) {
            if (c == '0') {
                t.push_back(0);
            } else if (c == '1') {
                t.push_back(1);
            } else {
                throw std::invalid_argument("trace file line " + std::to_string(lineno) +
                                            ": invalid character '" + std::string(1, c) + "'");
            }
        }
        traces.push_back(std::move(t));
    }
    return traces;
}

std::vector<Bits> read_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open trace file: " + path);
    return parse_traces(in);
}

void write_traces(std::ostream& out, const std::vector<Bits>& traces,
                  const std::vector<std::string>& header) {
    for (const std::string& h : header) out << "# " << h << '\n';
    for (const Bits& t : traces) out << format_bits(t) << '\n';
}

void write_traces(const std::string& path, const std::vector<Bits>& traces,
                  const std::vector<std::string>& header) {
    std::ofstream out(path, std::ios::binary); // byte-identical across platforms
    if (!out) throw std::runtime_error("cannot create trace file: " + path);
    write_traces(out, traces, header);
    out.flush();
    if (!out) throw std::runtime_error("failed writing trace file: " + path);
}

} // namespace qpt
