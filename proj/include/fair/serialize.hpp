#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace fair {

// Little-endian binary primitives shared by the FAIREMB1 / FAIROPQ1 /
// FAIRCKPT1 file formats. The artifact targets little-endian hosts; the
// byte order is part of the format, not the platform.

void write_exact(std::ofstream& out, const void* data, std::size_t len);
void read_exact(std::ifstream& in, void* data, std::size_t len, const std::string& what);

void write_u64(std::ofstream& out, std::uint64_t v);
std::uint64_t read_u64(std::ifstream& in, const std::string& what);

void write_f32_array(std::ofstream& out, const float* data, std::size_t count);
void read_f32_array(std::ifstream& in, float* data, std::size_t count, const std::string& what);

void write_f64_array(std::ofstream& out, const double* data, std::size_t count);
void read_f64_array(std::ifstream& in, double* data, std::size_t count, const std::string& what);

void write_magic(std::ofstream& out, const char* magic);
void expect_magic(std::ifstream& in, const char* magic, const std::string& path);

// FNV-1a content hash, used for run-manifest input fingerprints.
std::uint64_t fnv1a_file(const std::string& path);
std::string hex64(std::uint64_t v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace fair
