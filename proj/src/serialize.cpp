#include "firecast/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "firecast/errors.hpp"

namespace firecast {

namespace {
// Offsets are only computed on the failure path; tellg() forces a stream
// sync and is far too slow to run per field.
std::string at_offset(std::istream& in) {
    in.clear();
    const auto pos = in.tellg();
    if (pos < 0) return "at unknown offset";
    return "at byte offset " + std::to_string(static_cast<long long>(pos));
}

void read_exact(std::istream& in, char* buf, std::size_t n, const char* what) {
    in.read(buf, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw FormatError(std::string("truncated input while reading ") + what +
                          " " + at_offset(in));
    }
}

double decode_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
        bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}
}  // namespace

void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, 8);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
    }
    write_u64(out, bits);
}

std::uint8_t read_u8(std::istream& in, const char* what) {
    char b;
    read_exact(in, &b, 1, what);
    return static_cast<std::uint8_t>(b);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
    char buf[4];
    read_exact(in, buf, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    }
    return v;
}

std::uint64_t read_u64(std::istream& in, const char* what) {
    char buf[8];
    read_exact(in, buf, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    }
    return v;
}

double read_f64(std::istream& in, const char* what) {
    std::uint64_t bits = read_u64(in, what);
    if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
    }
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void expect_magic(std::istream& in, const char* expected) {
    const std::size_t n = std::strlen(expected);
    std::string got(n, '\0');
    in.read(got.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n || got != expected) {
        throw FormatError(std::string("bad magic ") + at_offset(in) +
                          ": expected \"" + expected + "\"");
    }
}

void write_tensor_blob(std::ostream& out, const Tensor& t) {
    if (t.rank() == 0) {
        throw ArgumentError("cannot serialize an empty tensor");
    }
    out.write(kTensorMagic, 4);
    write_u8(out, kTensorVersion);
    write_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (const std::size_t dim : t.shape()) {
        write_u32(out, static_cast<std::uint32_t>(dim));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        write_f64(out, t[i]);
    }
}

Tensor read_tensor_blob(std::istream& in) {
    expect_magic(in, kTensorMagic);
    const std::uint8_t version = read_u8(in, "tensor version");
    if (version != kTensorVersion) {
        throw FormatError("unsupported tensor blob version " +
                          std::to_string(version) + " " + at_offset(in));
    }
    const std::uint32_t rank = read_u32(in, "tensor rank");
    if (rank == 0 || rank > 8) {
        throw FormatError("implausible tensor rank " + std::to_string(rank) +
                          " " + at_offset(in));
    }
    std::vector<std::size_t> shape(rank);
    std::size_t volume = 1;
    for (auto& dim : shape) {
        dim = read_u32(in, "tensor dimension");
        if (dim == 0 || volume > (1ull << 32) / std::max<std::size_t>(dim, 1)) {
            throw FormatError("implausible tensor shape " + shape_string(shape) +
                              " " + at_offset(in));
        }
        volume *= dim;
    }
    std::vector<unsigned char> raw(volume * 8);
    read_exact(in, reinterpret_cast<char*>(raw.data()), raw.size(),
               "tensor values");
    std::vector<double> data(volume);
    for (std::size_t i = 0; i < volume; ++i) {
        data[i] = decode_f64(raw.data() + i * 8);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    write_tensor_blob(out, t);
    out.flush();
    if (!out) {
        throw IoError("failed to write " + path.string());
    }
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    return read_tensor_blob(in);
}

std::uint64_t fnv1a64_accumulate(std::uint64_t h, const void* bytes, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

std::uint64_t fnv1a64(const void* bytes, std::size_t len) {
    return fnv1a64_accumulate(0xCBF29CE484222325ull, bytes, len);
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace firecast
