#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace qkl::binio {

// Little-endian primitives for the cache/Gram file formats.
void write_magic(std::ostream& out, const std::string& magic);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_text(std::ostream& out, const std::string& s);  // u64 length prefix

// Readers throw DataError on truncation; `what` names the file in messages.
void expect_magic(std::istream& in, const std::string& magic, const std::string& what);
std::uint64_t read_u64(std::istream& in, const std::string& what);
double read_f64(std::istream& in, const std::string& what);
std::string read_text(std::istream& in, const std::string& what);

}  // namespace qkl::binio
