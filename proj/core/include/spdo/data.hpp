#pragma once

// Labeled spherical signal sets: the synthetic bump-constellation task and a
// digit-to-sphere projection for IDX image files.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spdo/geom.hpp"
#include "spdo/icomesh.hpp"
#include "spdo/ops.hpp"
#include "spdo/oracle.hpp"

namespace spdo {

struct LabeledSphereDataset {
    FeatureMap<float> signals;  // [sample][vertex][1][channel]
    std::vector<int> labels;
    int mesh_level = 0;
    int num_classes = 0;
    std::string split = "train";
    std::uint64_t seed = 0;
    // Per-channel statistics subtracted / divided out, empty if raw.
    std::vector<float> norm_mean;
    std::vector<float> norm_std;

    int size() const { return static_cast<int>(labels.size()); }
    // Copies samples idx[begin, end) into a batch of the model's scalar type.
    template <typename T>
    FeatureMap<T> batch(const std::vector<int>& idx, std::size_t begin, std::size_t end) const;
};

inline constexpr int kMaxBumpClasses = 8;
inline constexpr double kBumpKappa = 8.0;

// Canonical constellation of class k: three unit Gaussian bumps (kappa
// kBumpKappa) around the north pole with class-specific triangle geometry.
SmoothTestFn bump_constellation(int cls);

// n_per_class samples of each class, in class-interleaved order. rotated:
// each sample is its constellation under a Haar-random rotation; otherwise
// the canonical pose. Values are exact evaluations at the vertices. Throws
// DomainError for n_classes outside [1, 8] and NumericError if two class
// signals at this level are closer than 0.2 in chordal distance.
LabeledSphereDataset synth_bumps(int level, int n_classes, int n_per_class, bool rotated,
                                 std::uint64_t seed, const std::string& split = "train");

// Haar rotation applied to sample i of a rotated data set with this seed.
Rotation3 sample_rotation(std::uint64_t seed, int sample);

// Smallest pairwise chordal distance between the unit-normalized canonical
// class signals at a level.
double min_class_separation(int level, int n_classes);

struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> std;
};
// Zero mean, unit variance per channel over all samples and vertices.
ChannelStats channel_stats(const LabeledSphereDataset& d);
void normalize(LabeledSphereDataset& d, const ChannelStats& s);

// "SPDODATA", u32 format version, str tool version, u64 seed, str split,
// u32 level, u32 channels, u32 classes, u64 samples, u64 vertices,
// u32 stats count, stats count x (f32 mean, f32 std), samples x vertices x
// channels f32, samples x i32 labels. Little-endian.
std::vector<char> encode_dataset(const LabeledSphereDataset& d);
LabeledSphereDataset decode_dataset(std::vector<char> bytes);
void save_dataset(const LabeledSphereDataset& d, const std::filesystem::path& path);
LabeledSphereDataset load_dataset(const std::filesystem::path& path);

// ---- digits ----------------------------------------------------------------

struct ImageSet {
    int rows = 0;
    int cols = 0;
    std::vector<float> pixels;  // [image][row][col] in [0, 1]
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
    const float* image(int i) const { return pixels.data() + static_cast<std::size_t>(i) * rows * cols; }
};

// IDX pair (images magic 0x00000803, labels 0x00000801, big-endian).
// FormatError on bad magic, truncation or count mismatch; IoError if a file
// cannot be read.
ImageSet load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Gnomonic projection half-width.
inline constexpr double kProjectionHalfWidth = kPi / 3.0;

// The image is placed on the tangent plane at the north pole, centered on
// pixel (14, 14) of a 28x28 image, columns along +x and rows along -y, with
// the image border at tan(60 deg). A vertex p samples the plane at the
// gnomonic image of rotation^{-1} p (bilinear, edge-clamped inside the
// image square, zero outside it and on the southern hemisphere).
std::vector<double> project_to_sphere(const float* image, int rows, int cols, const IcoMesh& mesh,
                                      const std::optional<Rotation3>& rotation = std::nullopt);

struct DigitProjection {
    int level = 4;
    int limit = 0;         // 0 = all images
    bool rotated = false;  // Haar rotation per image
    std::uint64_t seed = 0;
    std::string split = "train";
};
LabeledSphereDataset project_image_set(const ImageSet& images, const DigitProjection& opt);

}  // namespace spdo
