#include "spdo/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace spdo::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void BinaryWriter::bytes(const void* data, std::size_t n) {
    const char* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
}

void BinaryWriter::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, sizeof v); }
void BinaryWriter::i32(std::int32_t v) { bytes(&v, sizeof v); }
void BinaryWriter::f32(float v) { bytes(&v, sizeof v); }
void BinaryWriter::f64(double v) { bytes(&v, sizeof v); }

void BinaryWriter::str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
}

void BinaryReader::bytes(void* out, std::size_t n) {
    if (n > remaining()) {
        std::ostringstream os;
        os << "truncated data: need " << n << " bytes at offset " << pos_ << ", have "
           << remaining();
        throw FormatError(os.str());
    }
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
}

std::uint32_t BinaryReader::u32() { std::uint32_t v; bytes(&v, sizeof v); return v; }
std::uint64_t BinaryReader::u64() { std::uint64_t v; bytes(&v, sizeof v); return v; }
std::int32_t BinaryReader::i32() { std::int32_t v; bytes(&v, sizeof v); return v; }
float BinaryReader::f32() { float v; bytes(&v, sizeof v); return v; }
double BinaryReader::f64() { double v; bytes(&v, sizeof v); return v; }

std::string BinaryReader::str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
}

void BinaryReader::expect_magic(std::string_view tag, std::string_view what) {
    std::string got(tag.size(), '\0');
    if (remaining() < tag.size()) throw FormatError(std::string(what) + ": file too short");
    bytes(got.data(), tag.size());
    if (got != tag) throw FormatError(std::string(what) + ": bad magic");
}

std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("error reading " + path.string());
    return data;
}

namespace {

void write_bytes_atomic(const std::filesystem::path& path, const char* data, std::size_t n) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(data, static_cast<std::streamsize>(n));
        out.flush();
        if (!out) throw IoError("error writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename " + tmp.string() + " to " + path.string());
    }
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    write_bytes_atomic(path, contents.data(), contents.size());
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& contents) {
    write_bytes_atomic(path, contents.data(), contents.size());
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace spdo::io
