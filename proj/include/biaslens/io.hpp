#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "biaslens/errors.hpp"

namespace biaslens::io {

static_assert(std::endian::native == std::endian::little,
              "artifact formats are little-endian; big-endian hosts are unsupported");

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_i8(std::ostream& out, std::int8_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_f64(std::ostream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_f64_array(std::ostream& out, const double* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

inline void write_magic(std::ostream& out, const char magic[4]) {
    out.write(magic, 4);
}

class Reader {
public:
    Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

    std::uint32_t u32() { return read<std::uint32_t>("u32"); }
    std::uint64_t u64() { return read<std::uint64_t>("u64"); }
    std::int8_t i8() { return read<std::int8_t>("i8"); }
    double f64() { return read<double>("f64"); }

    void expect_magic(const char magic[4]) {
        char got[4] = {};
        in_.read(got, 4);
        if (!in_ || std::memcmp(got, magic, 4) != 0) {
            throw DataError(name_ + ": bad magic, expected '" + std::string(magic, 4) + "'");
        }
    }

    void f64_array(double* data, std::size_t n) {
        in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
        if (!in_) throw DataError(name_ + ": truncated f64 array");
    }

    std::string str(std::size_t n) {
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) throw DataError(name_ + ": truncated string");
        return s;
    }

private:
    template <typename T>
    T read(const char* what) {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in_) throw DataError(name_ + ": truncated " + what);
        return v;
    }

    std::istream& in_;
    std::string name_;
};

// Writes to a sibling temp file and renames into place, so a stage never
// leaves a partially written artifact behind.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& body);

std::vector<char> read_file_bytes(const std::filesystem::path& path);

}  // namespace biaslens::io
