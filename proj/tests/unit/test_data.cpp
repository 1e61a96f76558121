#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "spdo/data.hpp"
#include "spdo/error.hpp"

using namespace spdo;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

std::vector<unsigned char> idx_images(std::uint32_t magic, int n, int rows, int cols) {
    std::vector<unsigned char> b;
    put_be32(b, magic);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    for (int k = 0; k < n * rows * cols; ++k) b.push_back(static_cast<unsigned char>(k % 256));
    return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t magic, int n) {
    std::vector<unsigned char> b;
    put_be32(b, magic);
    put_be32(b, n);
    for (int k = 0; k < n; ++k) b.push_back(static_cast<unsigned char>(k % 10));
    return b;
}

// Rotation taking the north pole to p.
Rotation3 pole_to(const Vec3& p) { return Rotation3::from_zyz(std::atan2(p.y(), p.x()), std::acos(p.z()), 0.0); }

}  // namespace

TEST_CASE("bump sets are deterministic and class-interleaved") {
    const LabeledSphereDataset a = synth_bumps(2, 4, 3, true, 7);
    const LabeledSphereDataset b = synth_bumps(2, 4, 3, true, 7);
    const LabeledSphereDataset c = synth_bumps(2, 4, 3, true, 8);
    CHECK(a.signals.values == b.signals.values);
    CHECK(a.signals.values != c.signals.values);
    REQUIRE(a.size() == 12);
    for (int i = 0; i < a.size(); ++i) CHECK(a.labels[i] == i % 4);
    CHECK_THROWS_AS(synth_bumps(2, 0, 3, true, 7), DomainError);
    CHECK_THROWS_AS(synth_bumps(2, kMaxBumpClasses + 1, 3, true, 7), DomainError);
}

TEST_CASE("rotated samples are the rotated constellation") {
    const int level = 2;
    const LabeledSphereDataset d = synth_bumps(level, 3, 2, true, 21);
    const IcoMesh mesh = build_mesh(level);
    for (int i = 0; i < d.size(); ++i) {
        const SmoothTestFn f = rotate_fn(bump_constellation(d.labels[i]), sample_rotation(21, i));
        double err = 0.0;
        for (int v = 0; v < mesh.vertex_count(); ++v)
            err = std::max(err, std::abs(double(d.signals.at(i, v, 0, 0)) - double(float(f.value(mesh.vertices[v])))));
        CHECK(err < 1e-12);
    }
}

TEST_CASE("class constellations are separated") {
    for (int level = 2; level <= 4; ++level) CHECK(min_class_separation(level, kMaxBumpClasses) > 0.2);
}

TEST_CASE("normalization gives zero mean and unit variance") {
    LabeledSphereDataset d = synth_bumps(2, 2, 5, true, 3);
    const ChannelStats s = channel_stats(d);
    normalize(d, s);
    const ChannelStats t = channel_stats(d);
    CHECK(std::abs(t.mean[0]) < 1e-5);
    CHECK(std::abs(t.std[0] - 1.0f) < 1e-4);
}

TEST_CASE("dataset encoding round trips") {
    LabeledSphereDataset d = synth_bumps(1, 3, 2, true, 4, "test");
    normalize(d, channel_stats(d));
    const std::vector<char> bytes = encode_dataset(d);
    const LabeledSphereDataset e = decode_dataset(bytes);
    CHECK(e.signals.values == d.signals.values);
    CHECK(e.labels == d.labels);
    CHECK(e.split == "test");
    CHECK(e.seed == 4);
    CHECK(e.norm_mean == d.norm_mean);
    CHECK(encode_dataset(e) == bytes);
    std::vector<char> cut(bytes.begin(), bytes.end() - 3);
    CHECK_THROWS_AS(decode_dataset(cut), FormatError);
    std::vector<char> bad = bytes;
    bad[1] = '?';
    CHECK_THROWS_AS(decode_dataset(bad), FormatError);
}

TEST_CASE("IDX reader") {
    const auto dir = std::filesystem::temp_directory_path() / "spdo_test_idx";
    std::filesystem::create_directories(dir);
    write_bytes(dir / "img", idx_images(0x803, 3, 4, 5));
    write_bytes(dir / "lab", idx_labels(0x801, 3));
    const ImageSet s = load_mnist_idx(dir / "img", dir / "lab");
    CHECK(s.size() == 3);
    CHECK(s.rows == 4);
    CHECK(s.cols == 5);
    CHECK(s.image(1)[0] == doctest::Approx(20 / 255.0f));
    CHECK(s.labels[2] == 2);

    write_bytes(dir / "badimg", idx_images(0x802, 3, 4, 5));
    CHECK_THROWS_WITH_AS(load_mnist_idx(dir / "badimg", dir / "lab"), doctest::Contains("magic"), FormatError);
    write_bytes(dir / "badlab", idx_labels(0x803, 3));
    CHECK_THROWS_WITH_AS(load_mnist_idx(dir / "img", dir / "badlab"), doctest::Contains("magic"), FormatError);
    write_bytes(dir / "fewlab", idx_labels(0x801, 2));
    CHECK_THROWS_WITH_AS(load_mnist_idx(dir / "img", dir / "fewlab"), doctest::Contains("mismatch"), FormatError);
    auto trunc = idx_images(0x803, 3, 4, 5);
    trunc.resize(trunc.size() - 1);
    write_bytes(dir / "truncimg", trunc);
    CHECK_THROWS_WITH_AS(load_mnist_idx(dir / "truncimg", dir / "lab"), doctest::Contains("truncated"), FormatError);
    CHECK_THROWS_AS(load_mnist_idx(dir / "missing", dir / "lab"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("sphere projection") {
    const IcoMesh mesh = build_mesh(3);
    std::vector<float> zero(28 * 28, 0.0f), one(28 * 28, 1.0f), ramp(28 * 28), ramp2(28 * 28);
    for (int k = 0; k < 28 * 28; ++k) {
        ramp[k] = float(k % 28) / 27.0f;
        ramp2[k] = float(k / 28) / 27.0f;
    }

    for (double v : project_to_sphere(zero.data(), 28, 28, mesh)) CHECK(v == 0.0);

    // Constant image: 1 where the image square covers the vertex. The pole
    // sits on pixel 14, so the square spans [-14.5, 13.5] pixels each way.
    const double px = std::tan(kProjectionHalfWidth) / 14.0;  // plane units per pixel
    const auto c = project_to_sphere(one.data(), 28, 28, mesh);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Vec3& p = mesh.vertices[v];
        if (p.z() <= 0.0) {
            CHECK(c[v] == 0.0);
            continue;
        }
        const double u = std::abs(p.x() / p.z()), w = std::abs(p.y() / p.z());
        if (u < 13.5 * px && w < 13.5 * px) CHECK(c[v] == doctest::Approx(1.0).epsilon(1e-12));
        if (u > 14.5 * px || w > 14.5 * px) CHECK(c[v] == 0.0);
    }

    // The pole samples pixel (14, 14).
    std::vector<float> dot(28 * 28, 0.0f);
    dot[14 * 28 + 14] = 1.0f;
    const Vec3 p0 = mesh.vertices[5];
    const auto d = project_to_sphere(dot.data(), 28, 28, mesh, pole_to(p0));
    CHECK(d[5] == doctest::Approx(1.0).epsilon(1e-12));

    // Linear in the image.
    std::vector<float> mix(28 * 28);
    for (int k = 0; k < 28 * 28; ++k) mix[k] = 0.25f * ramp[k] + 0.5f * ramp2[k];
    const auto a = project_to_sphere(ramp.data(), 28, 28, mesh);
    const auto b = project_to_sphere(ramp2.data(), 28, 28, mesh);
    const auto m = project_to_sphere(mix.data(), 28, 28, mesh);
    for (int v = 0; v < mesh.vertex_count(); ++v) CHECK(std::abs(m[v] - (0.25 * a[v] + 0.5 * b[v])) < 1e-6);
}
