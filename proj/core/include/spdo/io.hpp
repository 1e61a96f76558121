#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spdo/error.hpp"

namespace spdo::io {

// Little-endian binary encoder backed by a byte buffer.
class BinaryWriter {
public:
    void bytes(const void* data, std::size_t n);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i32(std::int32_t v);
    void f32(float v);
    void f64(double v);
    void str(std::string_view s);  // u32 length + bytes
    void magic(std::string_view tag) { bytes(tag.data(), tag.size()); }

    const std::vector<char>& buffer() const { return buf_; }

private:
    std::vector<char> buf_;
};

// Little-endian decoder over an in-memory byte buffer. Throws FormatError on
// truncation.
class BinaryReader {
public:
    explicit BinaryReader(std::vector<char> data) : buf_(std::move(data)) {}

    void bytes(void* out, std::size_t n);
    std::uint32_t u32();
    std::uint64_t u64();
    std::int32_t i32();
    float f32();
    double f64();
    std::string str();
    void expect_magic(std::string_view tag, std::string_view what);

    bool at_end() const { return pos_ == buf_.size(); }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);

// Writes to "<path>.tmp" and renames over path, so readers never observe a
// partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& contents);

// printf("%.17g") formatting for doubles in text artifacts.
std::string format_double(double v);

}  // namespace spdo::io
