#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oscilla/util.hpp"

namespace oscilla {

// All numeric output is printed with 17 significant digits in scientific
// notation so that writing and re-reading round-trips doubles exactly and
// repeated runs produce byte-identical files.
std::string format_float(double x);

// Writes via a temp file in the destination directory followed by rename, so
// readers never observe partially written artifacts.
void atomic_write_text(const std::string& path, const std::string& content);

// Single header row, then format_float-rendered cells.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

std::string read_text_file(const std::string& path);

// FNV-1a 64-bit content hash, hex-encoded; recorded per artifact in run
// reports so downstream tooling can detect accidental regeneration drift.
std::string content_checksum_hex(const std::string& content);

void ensure_directory(const std::string& path);

}  // namespace oscilla
