#pragma once

#include "qpt/bitstring.hpp"

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace qpt {

/// Trace files: one trace per line as ASCII '0'/'1'; lines beginning with
/// '#' are comments; an empty line is the empty trace. A terminating
/// newline ends the last line (it does not open a phantom empty trace).

/// Parses every trace in the stream. Throws std::invalid_argument naming
/// the line number on any character other than '0'/'1' ('\r' before the
/// newline is tolerated for portability).
std::vector<Bits> parse_traces(std::istream& in);

/// Reads a trace file from disk. Throws std::runtime_error if the file
/// cannot be opened.
std::vector<Bits> read_traces(const std::string& path);

/// Writes header lines (each emitted as a '# '-prefixed comment) followed
/// by one trace per line.
void write_traces(std::ostream& out, const std::vector<Bits>& traces,
                  const std::vector<std::string>& header = {});

/// Writes a trace file to disk. Throws std::runtime_error if the file
/// cannot be created.
void write_traces(const std::string& path, const std::vector<Bits>& traces,
                  const std::vector<std::string>& header = {});

} // namespace qpt
