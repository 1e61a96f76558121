#pragma once

// Layer stacks over the fixed vocabulary (psi, phi, 1x1 mixing, batch norm,
// relu, pooling, dense) with hand-written adjoints.
//
// Architecture strings are comma-separated layer tokens:
//   psi:C    input layer, orientation size 1 -> N, C output channels
//   phi:C    hidden layer, N independent weight 6-vectors per channel pair
//   mix:C    1x1 channel mixing at the same orientation
//   mixo:C   1x1 mixing across channels and orientation offsets
//   bn       orientation batch norm
//   relu
//   pool     average pooling to the next coarser level
//   unpool   linear interpolation to the next finer level
//   opool    max over orientations
//   gpool    mean over vertices
//   dense:C  fully connected (with bias); needs opool and gpool before it

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "spdo/icomesh.hpp"
#include "spdo/ops.hpp"
#include "spdo/stencil.hpp"

namespace spdo {

enum class LayerKind { Psi, Phi, Mix, MixOrient, BatchNorm, Relu, AvgPool, Unpool, OrientPool, GlobalPool, Dense };

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int out = 0;  // output channels for psi, phi, mix, mixo, dense

    std::string token() const;
};

struct ModelSpec {
    int level = 3;        // input mesh level
    int n = 8;            // cyclic group order
    int in_channels = 1;
    std::vector<LayerSpec> layers;

    // Throws ShapeError naming the offending layer.
    void validate() const;
    int num_classes() const;  // output width of the last layer
    // Every mesh level the stack visits, input level first.
    std::vector<int> levels_used() const;

    std::string arch() const;
    static std::vector<LayerSpec> parse_arch(const std::string& text);
    static ModelSpec from_arch(const std::string& arch, int level, int n, int in_channels);
};

// 4 convolutions with 8, 12, 16, 28 channels (pooling after the second),
// FC 28, 28, 10; N = 16; 72,746 parameters.
ModelSpec mnist_small_spec(int level = 4);
// Level 3, N = 8, under 30k parameters; the default for the bump task.
ModelSpec bumps_small_spec(int n_classes = 4);

/// Meshes, stencils and resampling maps shared by every layer of a model.
template <typename T>
struct LevelContext {
    std::vector<IcoMesh> meshes;                 // index = level, 0..max
    std::vector<CompactStencil<T>> stencils;     // empty for levels not needed
    std::vector<std::vector<std::vector<int>>> pool;                 // [L]: L -> L-1
    std::vector<std::vector<std::vector<InterpSource>>> interp;      // [L]: L-1 -> L

    // cache_dir may be empty (no stencil cache).
    static std::shared_ptr<const LevelContext> build(const std::vector<int>& levels,
                                                     const std::filesystem::path& cache_dir = {});
};

/// A named parameter (or buffer) with its gradient storage.
template <typename T>
struct ParamRef {
    std::string name;
    std::vector<T>* value = nullptr;
    std::vector<T>* grad = nullptr;  // null for buffers
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    // Keeps whatever the backward pass needs.
    virtual FeatureMap<T> forward(const FeatureMap<T>& x, bool training) = 0;
    // Accumulates parameter gradients, returns the input gradient.
    virtual FeatureMap<T> backward(const FeatureMap<T>& grad_out) = 0;
    virtual std::vector<ParamRef<T>> params() { return {}; }
    virtual std::vector<ParamRef<T>> buffers() { return {}; }
    // Appends the discrete state of the last forward pass (relu masks,
    // argmax indices, floored channels): the piece of the piecewise-smooth
    // map the layer was evaluated on.
    virtual void pattern(std::vector<int>&) const {}
};

template <typename T>
class Model {
public:
    Model(ModelSpec spec, std::shared_ptr<const LevelContext<T>> ctx);

    const ModelSpec& spec() const { return spec_; }
    const LevelContext<T>& context() const { return *ctx_; }

    // x: [batch][vertices of spec.level][1][in_channels]. Returns logits
    // [batch][1][1][classes]. Throws NumericError naming the first layer
    // with a non-finite output.
    FeatureMap<T> forward(const FeatureMap<T>& x, bool training);
    FeatureMap<T> backward(const FeatureMap<T>& grad_logits);
    void zero_grad();
    std::vector<int> activation_pattern() const;

    std::vector<ParamRef<T>> params();
    std::vector<ParamRef<T>> buffers();  // batch-norm running statistics
    std::size_t parameter_count();

    // Generalized He init for psi/phi/mix (per-component variances from the
    // exact white-noise response of the stencils), uniform Xavier for dense.
    void init_weights(std::uint64_t seed);

private:
    ModelSpec spec_;
    std::shared_ptr<const LevelContext<T>> ctx_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// Per-component standard deviations for a psi (offsets = 0) or phi layer's
// weight 6-vectors such that the output variance on unit white noise is
// `gain`. Exact in expectation over weights and noise.
template <typename T>
std::array<double, 6> operator_init_std(const CompactStencil<T>& st, int group_order, int c_in,
                                        int offsets, double gain);

// ---- checkpoints ----------------------------------------------------------

// "SPDOCKPT", u32 format version, str tool version, u64 seed, u32 level,
// u32 n, u32 in_channels, str arch, u32 tensor count, then per tensor:
// str name, u64 length, length x f32. Little-endian throughout.
struct Checkpoint {
    ModelSpec spec;
    std::uint64_t seed = 0;
    std::vector<std::string> names;
    std::vector<std::vector<float>> tensors;
};

template <typename T>
Checkpoint make_checkpoint(Model<T>& model, std::uint64_t seed);
template <typename T>
void load_into(Model<T>& model, const Checkpoint& ck);  // ShapeError on mismatch

std::vector<char> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::vector<char> bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace spdo
