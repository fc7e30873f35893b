#include "fair/serialize.hpp"

#include <cstring>
#include <sstream>

#include "fair/errors.hpp"

namespace fair {

void write_exact(std::ofstream& out, const void* data, std::size_t len) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!out) throw DataError("write failed");
}

void read_exact(std::ifstream& in, void* data, std::size_t len, const std::string& what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in.gcount()) != len)
        throw DataError("truncated read: " + what);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_exact(out, buf, 8);
}

std::uint64_t read_u64(std::ifstream& in, const std::string& what) {
    unsigned char buf[8];
    read_exact(in, buf, 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_f32_array(std::ofstream& out, const float* data, std::size_t count) {
    static_assert(sizeof(float) == 4);
    write_exact(out, data, count * 4);
}

void read_f32_array(std::ifstream& in, float* data, std::size_t count, const std::string& what) {
    read_exact(in, data, count * 4, what);
}

void write_f64_array(std::ofstream& out, const double* data, std::size_t count) {
    static_assert(sizeof(double) == 8);
    write_exact(out, data, count * 8);
}

void read_f64_array(std::ifstream& in, double* data, std::size_t count, const std::string& what) {
    read_exact(in, data, count * 8, what);
}

void write_magic(std::ofstream& out, const char* magic) {
    write_exact(out, magic, std::strlen(magic));
}

void expect_magic(std::ifstream& in, const char* magic, const std::string& path) {
    const std::size_t len = std::strlen(magic);
    std::string buf(len, '\0');
    read_exact(in, buf.data(), len, "magic of " + path);
    if (std::memcmp(buf.data(), magic, len) != 0)
        throw DataError(path + ": bad magic '" + buf + "', expected '" + magic + "'");
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        const auto got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    for (int i = 15; i >= 0; --i) os << "0123456789abcdef"[(v >> (4 * i)) & 0xf];
    return os.str();
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace fair
