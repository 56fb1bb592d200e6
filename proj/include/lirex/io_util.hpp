#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lirex {

// Reads an entire file; throws IoError if it cannot be opened.
std::string read_file(const std::filesystem::path& p);

// Writes content to a temporary file in the same directory, then renames it
// over the target so readers never observe a partial file. Parent directories
// are created as needed.
void atomic_write(const std::filesystem::path& p, const std::string& content);

// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a(const std::string& bytes);
std::string to_hex(std::uint64_t v);

// Hex digest of a file's bytes (used for artifact integrity records).
std::string file_digest(const std::filesystem::path& p);

// Reads a newline-delimited file into per-line strings (no trailing blank
// line entry).
std::vector<std::string> read_lines(const std::filesystem::path& p);

}  // namespace lirex
