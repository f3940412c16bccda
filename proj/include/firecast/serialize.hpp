#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "firecast/tensor.hpp"

namespace firecast {

// Little-endian primitives shared by every container format. Encoding is
// explicit byte shuffling, so files are identical regardless of host order.
void write_u8(std::ostream& out, std::uint8_t v);
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);

std::uint8_t read_u8(std::istream& in, const char* what);
std::uint32_t read_u32(std::istream& in, const char* what);
std::uint64_t read_u64(std::istream& in, const char* what);
double read_f64(std::istream& in, const char* what);

// Reads `n` magic bytes and checks them against `expected`; throws
// FormatError naming the expected magic and the byte offset otherwise.
void expect_magic(std::istream& in, const char* expected);

// Tensor blob: magic "WFTN", version byte 1, rank u32, dims u32 each,
// then row-major f64 values. All integers and reals little-endian.
inline constexpr char kTensorMagic[] = "WFTN";
inline constexpr std::uint8_t kTensorVersion = 1;

void write_tensor_blob(std::ostream& out, const Tensor& t);
Tensor read_tensor_blob(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// FNV-1a 64-bit, the hash behind config fingerprints.
std::uint64_t fnv1a64(const void* bytes, std::size_t len);
std::uint64_t fnv1a64_accumulate(std::uint64_t h, const void* bytes, std::size_t len);
std::string hex64(std::uint64_t v);

}  // namespace firecast
