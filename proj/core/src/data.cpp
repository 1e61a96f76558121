#include "spdo/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "spdo/error.hpp"
#include "spdo/io.hpp"
#include "spdo/parallel.hpp"
#include "spdo/version.hpp"

namespace spdo {

template <typename T>
FeatureMap<T> LabeledSphereDataset::batch(const std::vector<int>& idx, std::size_t begin, std::size_t end) const {
    const int nb = static_cast<int>(end - begin);
    FeatureMap<T> out(nb, mesh_level, signals.vertices, 1, signals.channels);
    const std::size_t ss = signals.sample_size();
    for (int b = 0; b < nb; ++b) {
        const float* src = signals.values.data() + static_cast<std::size_t>(idx[begin + b]) * ss;
        std::transform(src, src + ss, out.values.begin() + b * ss, [](float x) { return static_cast<T>(x); });
    }
    return out;
}

template FeatureMap<float> LabeledSphereDataset::batch(const std::vector<int>&, std::size_t, std::size_t) const;
template FeatureMap<double> LabeledSphereDataset::batch(const std::vector<int>&, std::size_t, std::size_t) const;

// ---- bumps -------------------------------------------------------------------

namespace {

struct Triangle {
    double colat[3];
    double az[3];
};

// Distinct shapes: large and small equilateral, a right-angled isosceles, a
// collinear triple, and four scalene variants.
constexpr Triangle kTriangles[kMaxBumpClasses] = {
    {{0.6, 0.6, 0.6}, {0.0, 2.0943951, 4.1887902}},
    {{0.35, 0.35, 0.35}, {0.0, 2.0943951, 4.1887902}},
    {{0.6, 0.6, 0.6}, {0.0, 1.5707963, 3.1415927}},
    {{0.0, 0.6, 0.6}, {0.0, 0.0, 3.1415927}},
    {{0.0, 0.5, 1.2}, {0.0, 0.0, 0.0}},
    {{0.5, 0.7, 0.4}, {0.0, 2.0, 4.0}},
    {{0.8, 0.8, 0.8}, {0.0, 1.0471976, 3.1415927}},
    {{0.0, 0.9, 0.9}, {0.0, 0.0, 1.5707963}},
};

Vec3 from_polar(double colat, double az) {
    return {std::sin(colat) * std::cos(az), std::sin(colat) * std::sin(az), std::cos(colat)};
}

std::mt19937_64 sample_rng(std::uint64_t seed, int sample) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(sample), 0x5bd1e995u};
    return std::mt19937_64(seq);
}

}  // namespace

SmoothTestFn bump_constellation(int cls) {
    if (cls < 0 || cls >= kMaxBumpClasses) throw DomainError("bump class " + std::to_string(cls) + " out of range");
    const Triangle& t = kTriangles[cls];
    SmoothTestFn f = SmoothTestFn::gaussian("b0", from_polar(t.colat[0], t.az[0]), kBumpKappa);
    for (int k = 1; k < 3; ++k) f = f + SmoothTestFn::gaussian("b", from_polar(t.colat[k], t.az[k]), kBumpKappa);
    f.name = "constellation" + std::to_string(cls);
    return f;
}

Rotation3 sample_rotation(std::uint64_t seed, int sample) {
    auto rng = sample_rng(seed, sample);
    return Rotation3::haar(rng);
}

double min_class_separation(int level, int n_classes) {
    const IcoMesh mesh = build_mesh(level);
    std::vector<Eigen::VectorXd> sig;
    for (int c = 0; c < n_classes; ++c) {
        const auto s = sample_on_mesh(bump_constellation(c), mesh);
        Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
        sig.push_back(v.normalized());
    }
    double m = 2.0;
    for (int a = 0; a < n_classes; ++a)
        for (int b = a + 1; b < n_classes; ++b) m = std::min(m, (sig[a] - sig[b]).norm());
    return m;
}

LabeledSphereDataset synth_bumps(int level, int n_classes, int n_per_class, bool rotated, std::uint64_t seed,
                                 const std::string& split) {
    if (n_classes < 1 || n_classes > kMaxBumpClasses)
        throw DomainError("n_classes must lie in [1, " + std::to_string(kMaxBumpClasses) + "], got " +
                          std::to_string(n_classes));
    if (n_per_class < 0) throw DomainError("n_per_class must be nonnegative");
    if (n_classes > 1) {
        const double sep = min_class_separation(level, n_classes);
        if (sep <= 0.2)
            throw NumericError("class constellations too close at level " + std::to_string(level) +
                               " (chordal separation " + std::to_string(sep) + ")");
    }
    const IcoMesh mesh = build_mesh(level);
    const int nv = mesh.vertex_count();
    const int total = n_classes * n_per_class;
    LabeledSphereDataset d;
    d.mesh_level = level;
    d.num_classes = n_classes;
    d.split = split;
    d.seed = seed;
    d.signals = FeatureMap<float>(total, level, nv, 1, 1);
    d.labels.resize(total);
    std::vector<SmoothTestFn> canon;
    for (int c = 0; c < n_classes; ++c) canon.push_back(bump_constellation(c));
    parallel_chunks(total, [&](int, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const int cls = static_cast<int>(i % n_classes);
            d.labels[i] = cls;
            const SmoothTestFn f = rotated ? rotate_fn(canon[cls], sample_rotation(seed, static_cast<int>(i)))
                                           : canon[cls];
            for (int v = 0; v < nv; ++v) d.signals.at(static_cast<int>(i), v, 0, 0) = static_cast<float>(f.value(mesh.vertices[v]));
        }
    });
    return d;
}

ChannelStats channel_stats(const LabeledSphereDataset& d) {
    const int nc = d.signals.channels;
    std::vector<double> sum(nc, 0.0), sq(nc, 0.0);
    const std::size_t n = d.signals.values.size() / std::max(nc, 1);
    for (std::size_t k = 0; k < d.signals.values.size(); ++k) sum[k % nc] += d.signals.values[k];
    for (int c = 0; c < nc; ++c) sum[c] /= static_cast<double>(n);
    for (std::size_t k = 0; k < d.signals.values.size(); ++k) {
        const double e = d.signals.values[k] - sum[k % nc];
        sq[k % nc] += e * e;
    }
    ChannelStats s;
    for (int c = 0; c < nc; ++c) {
        s.mean.push_back(static_cast<float>(sum[c]));
        const double sd = std::sqrt(sq[c] / static_cast<double>(n));
        s.std.push_back(static_cast<float>(sd > 1e-12 ? sd : 1.0));
    }
    return s;
}

void normalize(LabeledSphereDataset& d, const ChannelStats& s) {
    const int nc = d.signals.channels;
    if (static_cast<int>(s.mean.size()) != nc) throw ShapeError("normalization stats channel mismatch");
    for (std::size_t k = 0; k < d.signals.values.size(); ++k)
        d.signals.values[k] = (d.signals.values[k] - s.mean[k % nc]) / s.std[k % nc];
    d.norm_mean = s.mean;
    d.norm_std = s.std;
}

// ---- cache -------------------------------------------------------------------

std::vector<char> encode_dataset(const LabeledSphereDataset& d) {
    io::BinaryWriter w;
    w.magic("SPDODATA");
    w.u32(kDatasetFormatVersion);
    w.str(kToolVersion);
    w.u64(d.seed);
    w.str(d.split);
    w.u32(d.mesh_level);
    w.u32(d.signals.channels);
    w.u32(d.num_classes);
    w.u64(d.labels.size());
    w.u64(d.signals.vertices);
    w.u32(static_cast<std::uint32_t>(d.norm_mean.size()));
    for (std::size_t c = 0; c < d.norm_mean.size(); ++c) {
        w.f32(d.norm_mean[c]);
        w.f32(d.norm_std[c]);
    }
    for (float x : d.signals.values) w.f32(x);
    for (int l : d.labels) w.i32(l);
    return w.buffer();
}

LabeledSphereDataset decode_dataset(std::vector<char> bytes) {
    io::BinaryReader r(std::move(bytes));
    r.expect_magic("SPDODATA", "dataset");
    const std::uint32_t version = r.u32();
    if (version != kDatasetFormatVersion) throw FormatError("unsupported dataset format version " + std::to_string(version));
    r.str();
    LabeledSphereDataset d;
    d.seed = r.u64();
    d.split = r.str();
    d.mesh_level = static_cast<int>(r.u32());
    const int nc = static_cast<int>(r.u32());
    d.num_classes = static_cast<int>(r.u32());
    const std::uint64_t n = r.u64();
    const std::uint64_t nv = r.u64();
    if (d.mesh_level > kMaxMeshLevel || static_cast<long long>(nv) != expected_vertex_count(d.mesh_level))
        throw FormatError("dataset vertex count does not match its mesh level");
    const std::uint32_t ns = r.u32();
    for (std::uint32_t c = 0; c < ns; ++c) {
        d.norm_mean.push_back(r.f32());
        d.norm_std.push_back(r.f32());
    }
    if (n * nv * nc * 4 + n * 4 > r.remaining()) throw FormatError("dataset truncated");
    d.signals = FeatureMap<float>(static_cast<int>(n), d.mesh_level, static_cast<int>(nv), 1, nc);
    for (auto& x : d.signals.values) x = r.f32();
    d.labels.resize(n);
    for (auto& l : d.labels) {
        l = r.i32();
        if (l < 0 || l >= d.num_classes) throw FormatError("dataset label out of range");
    }
    if (!r.at_end()) throw FormatError("trailing bytes after dataset");
    return d;
}

void save_dataset(const LabeledSphereDataset& d, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_dataset(d));
}

LabeledSphereDataset load_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

// ---- digits ------------------------------------------------------------------

namespace {

std::uint32_t be32(io::BinaryReader& r) {
    unsigned char b[4];
    r.bytes(b, 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

}  // namespace

ImageSet load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
    ImageSet s;
    {
        io::BinaryReader r(io::read_file(images));
        try {
            const std::uint32_t magic = be32(r);
            if (magic != 0x00000803u) throw FormatError(images.string() + ": bad IDX image magic");
            const std::uint32_t n = be32(r);
            s.rows = static_cast<int>(be32(r));
            s.cols = static_cast<int>(be32(r));
            const std::size_t count = static_cast<std::size_t>(n) * s.rows * s.cols;
            if (count > r.remaining()) throw FormatError(images.string() + ": truncated IDX image file");
            std::vector<unsigned char> raw(count);
            r.bytes(raw.data(), count);
            s.pixels.resize(count);
            for (std::size_t k = 0; k < count; ++k) s.pixels[k] = raw[k] / 255.0f;
            s.labels.resize(n);
        } catch (const FormatError& e) {
            const std::string msg = e.what();
            throw FormatError(msg.rfind(images.string(), 0) == 0 ? msg : images.string() + ": " + msg);
        }
    }
    io::BinaryReader r(io::read_file(labels));
    try {
        if (be32(r) != 0x00000801u) throw FormatError(labels.string() + ": bad IDX label magic");
        const std::uint32_t n = be32(r);
        if (n != s.labels.size())
            throw FormatError("image/label count mismatch: " + std::to_string(s.labels.size()) + " vs " + std::to_string(n));
        if (n > r.remaining()) throw FormatError(labels.string() + ": truncated IDX label file");
        std::vector<unsigned char> raw(n);
        r.bytes(raw.data(), n);
        for (std::uint32_t k = 0; k < n; ++k) s.labels[k] = raw[k];
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        throw FormatError(msg.find(labels.string()) != std::string::npos || msg.find("mismatch") != std::string::npos
                              ? msg
                              : labels.string() + ": " + msg);
    }
    return s;
}

std::vector<double> project_to_sphere(const float* image, int rows, int cols, const IcoMesh& mesh,
                                      const std::optional<Rotation3>& rotation) {
    const double edge = std::tan(kProjectionHalfWidth);
    const double cr = rows / 2, cc = cols / 2;  // pixel at the pole
    const double sr = (rows / 2.0) / edge, sc = (cols / 2.0) / edge;
    const Mat3 rinv = rotation ? Mat3(rotation->matrix().transpose()) : Mat3(Mat3::Identity());
    std::vector<double> out(mesh.vertex_count(), 0.0);
    for (int v = 0; v < mesh.vertex_count(); ++v) {
        const Vec3 q = rinv * mesh.vertices[v].normalized();
        if (q.z() <= 1e-12) continue;
        const double u = q.x() / q.z(), w = q.y() / q.z();
        const double x = cc + u * sc, y = cr - w * sr;  // pixel-center coordinates
        if (x < -0.5 || x > cols - 0.5 || y < -0.5 || y > rows - 0.5) continue;
        const double xc = std::clamp(x, 0.0, cols - 1.0), yc = std::clamp(y, 0.0, rows - 1.0);
        const int x0 = std::min(static_cast<int>(xc), cols - 2 < 0 ? 0 : cols - 2);
        const int y0 = std::min(static_cast<int>(yc), rows - 2 < 0 ? 0 : rows - 2);
        const int x1 = std::min(x0 + 1, cols - 1), y1 = std::min(y0 + 1, rows - 1);
        const double fx = xc - x0, fy = yc - y0;
        auto px = [&](int r, int c) { return static_cast<double>(image[r * cols + c]); };
        out[v] = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) + fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
    }
    return out;
}

LabeledSphereDataset project_image_set(const ImageSet& images, const DigitProjection& opt) {
    const IcoMesh mesh = build_mesh(opt.level);
    const int n = opt.limit > 0 ? std::min(opt.limit, images.size()) : images.size();
    LabeledSphereDataset d;
    d.mesh_level = opt.level;
    d.num_classes = 10;
    d.split = opt.split;
    d.seed = opt.seed;
    d.signals = FeatureMap<float>(n, opt.level, mesh.vertex_count(), 1, 1);
    d.labels.assign(images.labels.begin(), images.labels.begin() + n);
    parallel_chunks(n, [&](int, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            std::optional<Rotation3> r;
            if (opt.rotated) r = sample_rotation(opt.seed, static_cast<int>(i));
            const auto s = project_to_sphere(images.image(static_cast<int>(i)), images.rows, images.cols, mesh, r);
            for (int v = 0; v < mesh.vertex_count(); ++v) d.signals.at(static_cast<int>(i), v, 0, 0) = static_cast<float>(s[v]);
        }
    });
    return d;
}

}  // namespace spdo
