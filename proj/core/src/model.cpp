#include "spdo/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "spdo/error.hpp"
#include "spdo/io.hpp"
#include "spdo/version.hpp"

namespace spdo {

// ---- specs -------------------------------------------------------------------

namespace {

struct TokenInfo {
    const char* name;
    LayerKind kind;
    bool has_width;
};

constexpr TokenInfo kTokens[] = {
    {"psi", LayerKind::Psi, true},         {"phi", LayerKind::Phi, true},
    {"mix", LayerKind::Mix, true},         {"mixo", LayerKind::MixOrient, true},
    {"bn", LayerKind::BatchNorm, false},   {"relu", LayerKind::Relu, false},
    {"pool", LayerKind::AvgPool, false},   {"unpool", LayerKind::Unpool, false},
    {"opool", LayerKind::OrientPool, false}, {"gpool", LayerKind::GlobalPool, false},
    {"dense", LayerKind::Dense, true},
};

const TokenInfo& info(LayerKind k) {
    for (const auto& t : kTokens)
        if (t.kind == k) return t;
    throw ShapeError("unknown layer kind");
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

std::string LayerSpec::token() const {
    const TokenInfo& t = info(kind);
    return t.has_width ? std::string(t.name) + ":" + std::to_string(out) : std::string(t.name);
}

std::vector<LayerSpec> ModelSpec::parse_arch(const std::string& text) {
    std::vector<LayerSpec> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        const auto colon = tok.find(':');
        const std::string name = tok.substr(0, colon);
        const TokenInfo* t = nullptr;
        for (const auto& cand : kTokens)
            if (name == cand.name) t = &cand;
        if (!t) throw ShapeError("unknown layer token '" + tok + "'");
        LayerSpec l;
        l.kind = t->kind;
        if (t->has_width) {
            if (colon == std::string::npos) throw ShapeError("layer '" + tok + "' needs a width, e.g. " + name + ":8");
            try {
                std::size_t used = 0;
                l.out = std::stoi(tok.substr(colon + 1), &used);
                if (used != tok.size() - colon - 1) throw std::invalid_argument(tok);
            } catch (const std::logic_error&) {
                throw ShapeError("bad width in layer '" + tok + "'");
            }
        } else if (colon != std::string::npos) {
            throw ShapeError("layer '" + name + "' takes no width");
        }
        out.push_back(l);
    }
    return out;
}

std::string ModelSpec::arch() const {
    std::string s;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (k) s += ',';
        s += layers[k].token();
    }
    return s;
}

ModelSpec ModelSpec::from_arch(const std::string& a, int level, int n, int in_channels) {
    ModelSpec m;
    m.level = level;
    m.n = n;
    m.in_channels = in_channels;
    m.layers = parse_arch(a);
    m.validate();
    return m;
}

void ModelSpec::validate() const {
    if (level < 0 || level > kMaxMeshLevel) throw ShapeError("input level " + std::to_string(level) + " out of range");
    if (n < 1) throw ShapeError("group order must be >= 1");
    if (in_channels < 1) throw ShapeError("input needs at least one channel");
    if (layers.empty()) throw ShapeError("empty architecture");
    int lvl = level, orient = 1;
    bool spatial = true, seen_trainable = false;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const LayerSpec& l = layers[k];
        const std::string where = "layer " + std::to_string(k) + " (" + l.token() + "): ";
        if (info(l.kind).has_width && l.out < 1) throw ShapeError(where + "zero output channels");
        const bool trainable = l.kind == LayerKind::Psi || l.kind == LayerKind::Phi || l.kind == LayerKind::Mix ||
                               l.kind == LayerKind::MixOrient || l.kind == LayerKind::Dense;
        if (trainable && !seen_trainable && l.kind != LayerKind::Psi)
            throw ShapeError(where + "the first trainable layer must be psi");
        seen_trainable = seen_trainable || trainable;
        switch (l.kind) {
            case LayerKind::Psi:
                if (!spatial || orient != 1) throw ShapeError(where + "psi needs a spatial input with one orientation");
                orient = n;
                break;
            case LayerKind::Phi:
            case LayerKind::MixOrient:
                if (!spatial || orient != n) throw ShapeError(where + "needs N orientations");
                break;
            case LayerKind::Mix:
                if (!spatial) throw ShapeError(where + "needs a spatial input");
                break;
            case LayerKind::BatchNorm:
                if (!spatial) throw ShapeError(where + "needs a spatial input");
                break;
            case LayerKind::Relu: break;
            case LayerKind::AvgPool:
                if (!spatial || lvl < 1) throw ShapeError(where + "nothing coarser to pool to");
                --lvl;
                break;
            case LayerKind::Unpool:
                if (!spatial || lvl >= kMaxMeshLevel) throw ShapeError(where + "nothing finer to unpool to");
                ++lvl;
                break;
            case LayerKind::OrientPool:
                if (orient == 1) throw ShapeError(where + "no orientation axis left");
                orient = 1;
                break;
            case LayerKind::GlobalPool:
                if (!spatial) throw ShapeError(where + "already pooled");
                spatial = false;
                break;
            case LayerKind::Dense:
                if (spatial || orient != 1) throw ShapeError(where + "dense needs opool and gpool before it");
                break;
        }
    }
    if (layers.back().kind != LayerKind::Dense) throw ShapeError("the last layer must be dense (class logits)");
}

int ModelSpec::num_classes() const { return layers.back().out; }

std::vector<int> ModelSpec::levels_used() const {
    std::vector<int> out{level};
    int lvl = level;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::AvgPool) --lvl;
        if (l.kind == LayerKind::Unpool) ++lvl;
        if (std::find(out.begin(), out.end(), lvl) == out.end()) out.push_back(lvl);
    }
    return out;
}

ModelSpec mnist_small_spec(int level) {
    return ModelSpec::from_arch(
        "psi:8,bn,relu,phi:12,bn,relu,pool,phi:16,bn,relu,phi:28,bn,relu,opool,gpool,"
        "dense:28,relu,dense:28,relu,dense:10",
        level, 16, 1);
}

ModelSpec bumps_small_spec(int n_classes) {
    return ModelSpec::from_arch("psi:8,bn,relu,phi:8,bn,relu,pool,phi:16,bn,relu,opool,gpool,dense:16,relu,dense:" +
                                    std::to_string(n_classes),
                                3, 8, 1);
}

// ---- context -----------------------------------------------------------------

template <typename T>
std::shared_ptr<const LevelContext<T>> LevelContext<T>::build(const std::vector<int>& levels,
                                                              const std::filesystem::path& cache_dir) {
    auto ctx = std::make_shared<LevelContext<T>>();
    const int top = *std::max_element(levels.begin(), levels.end());
    ctx->meshes = build_mesh_hierarchy(top);
    ctx->stencils.resize(top + 1);
    ctx->pool.resize(top + 1);
    ctx->interp.resize(top + 1);
    for (int l : levels) {
        const StencilSet s = cache_dir.empty() ? build_stencils(ctx->meshes[l])
                                               : load_or_build_stencils(ctx->meshes[l], cache_dir);
        ctx->stencils[l] = CompactStencil<T>::from(s);
    }
    for (int l = 1; l <= top; ++l) {
        ctx->pool[l] = pool_map(ctx->meshes[l], ctx->meshes[l - 1]);
        ctx->interp[l] = unpool_map(ctx->meshes[l - 1], ctx->meshes[l]);
    }
    return ctx;
}

// ---- layers ------------------------------------------------------------------

namespace {

template <typename T>
class OperatorLayer : public Layer<T> {
public:
    OperatorLayer(bool hidden, int c_out, int c_in, int n, const CompactStencil<T>& st, std::string name)
        : hidden_(hidden), w_(c_out, c_in, hidden ? n : 0), g_(w_), group_(n), st_(st), name_(std::move(name)) {}

    FeatureMap<T> forward(const FeatureMap<T>& x, bool) override {
        x_ = x;
        return hidden_ ? phi_layer(x, w_, group_, st_) : psi_layer(x, w_, group_, st_);
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override {
        return hidden_ ? phi_layer_backward(x_, w_, group_, st_, gy, g_)
                       : psi_layer_backward(x_, w_, group_, st_, gy, g_);
    }
    std::vector<ParamRef<T>> params() override { return {{name_ + ".w", &w_.values, &g_.values}}; }

    OperatorWeights<T>& weights() { return w_; }
    const CompactStencil<T>& stencil() const { return st_; }
    bool hidden() const { return hidden_; }

private:
    bool hidden_;
    OperatorWeights<T> w_, g_;
    CyclicGroup group_;
    const CompactStencil<T>& st_;
    std::string name_;
    FeatureMap<T> x_;
};

template <typename T>
class MixLayer : public Layer<T> {
public:
    MixLayer(int c_out, int c_in, int offsets, std::string name)
        : m_(c_out, c_in, offsets), g_(c_out, c_in, offsets), name_(std::move(name)) {}
    FeatureMap<T> forward(const FeatureMap<T>& x, bool) override {
        x_ = x;
        return one_by_one(x, m_);
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override { return one_by_one_backward(x_, m_, gy, g_); }
    std::vector<ParamRef<T>> params() override { return {{name_ + ".w", &m_.values, &g_.values}}; }
    MixMatrix<T>& mix() { return m_; }

private:
    MixMatrix<T> m_, g_;
    std::string name_;
    FeatureMap<T> x_;
};

template <typename T>
class BatchNormLayer : public Layer<T> {
public:
    BatchNormLayer(int c, std::string name) : p_(c), gs_(c, T(0)), gb_(c, T(0)), name_(std::move(name)) {}
    FeatureMap<T> forward(const FeatureMap<T>& x, bool training) override {
        training_ = training;
        return orientation_batchnorm(x, p_, training, &cache_);
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override {
        return orientation_batchnorm_backward(p_, cache_, training_, gy, gs_, gb_);
    }
    std::vector<ParamRef<T>> params() override {
        return {{name_ + ".scale", &p_.scale, &gs_}, {name_ + ".bias", &p_.bias, &gb_}};
    }
    void pattern(std::vector<int>& out) const override {
        out.insert(out.end(), cache_.floored.begin(), cache_.floored.end());
    }
    std::vector<ParamRef<T>> buffers() override {
        return {{name_ + ".running_mean", &p_.running_mean, nullptr}, {name_ + ".running_var", &p_.running_var, nullptr}};
    }
    void reset() {
        std::fill(p_.scale.begin(), p_.scale.end(), T(1));
        std::fill(p_.bias.begin(), p_.bias.end(), T(0));
        std::fill(p_.running_mean.begin(), p_.running_mean.end(), T(0));
        std::fill(p_.running_var.begin(), p_.running_var.end(), T(1));
    }

private:
    BatchNormParams<T> p_;
    std::vector<T> gs_, gb_;
    BatchNormCache<T> cache_;
    bool training_ = false;
    std::string name_;
};

template <typename T>
class ReluLayer : public Layer<T> {
public:
    FeatureMap<T> forward(const FeatureMap<T>& x, bool) override {
        x_ = x;
        return relu(x);
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override { return relu_backward(x_, gy); }
    void pattern(std::vector<int>& out) const override {
        for (const T& v : x_.values) out.push_back(v > T(0));
    }

private:
    FeatureMap<T> x_;
};

template <typename T>
class PoolLayer : public Layer<T> {
public:
    PoolLayer(const std::vector<std::vector<int>>& map, int coarse_level) : map_(map), coarse_(coarse_level) {}
    FeatureMap<T> forward(const FeatureMap<T>& x, bool) override {
        fine_vertices_ = x.vertices;
        return avg_pool(x, map_, coarse_);
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override {
        return avg_pool_backward(gy, map_, coarse_ + 1, fine_vertices_);
    }

private:
    const std::vector<std::vector<int>>& map_;
    int coarse_;
    int fine_vertices_ = 0;
};

template <typename T>
class UnpoolLayer : public Layer<T> {
public:
    UnpoolLayer(const std::vector<std::vector<InterpSource>>& map, int fine_level) : map_(map), fine_(fine_level) {}
    FeatureMap<T> forward(const FeatureMap<T>& x, bool) override {
        coarse_vertices_ = x.vertices;
        return unpool(x, map_, fine_);
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override {
        return unpool_backward(gy, map_, fine_ - 1, coarse_vertices_);
    }

private:
    const std::vector<std::vector<InterpSource>>& map_;
    int fine_;
    int coarse_vertices_ = 0;
};

template <typename T>
class OrientPoolLayer : public Layer<T> {
public:
    FeatureMap<T> forward(const FeatureMap<T>& x, bool) override {
        shape_ = FeatureMap<T>();
        shape_.batch = x.batch;
        shape_.level = x.level;
        shape_.vertices = x.vertices;
        shape_.orientations = x.orientations;
        shape_.channels = x.channels;
        return orientation_pool(x, &argmax_);
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override { return orientation_pool_backward(shape_, argmax_, gy); }
    void pattern(std::vector<int>& out) const override { out.insert(out.end(), argmax_.begin(), argmax_.end()); }

private:
    FeatureMap<T> shape_;  // shape fields only
    std::vector<int> argmax_;
};

template <typename T>
class GlobalPoolLayer : public Layer<T> {
public:
    FeatureMap<T> forward(const FeatureMap<T>& x, bool) override {
        shape_ = FeatureMap<T>();
        shape_.batch = x.batch;
        shape_.level = x.level;
        shape_.vertices = x.vertices;
        shape_.orientations = x.orientations;
        shape_.channels = x.channels;
        return global_pool(x);
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override { return global_pool_backward(shape_, gy); }

private:
    FeatureMap<T> shape_;
};

// y = W x + b on the channel axis of a [batch][1][1][c] map.
template <typename T>
class DenseLayer : public Layer<T> {
public:
    DenseLayer(int out, int in, std::string name)
        : out_(out), in_(in), w_(static_cast<std::size_t>(out) * in, T(0)), b_(out, T(0)),
          gw_(w_.size(), T(0)), gb_(out, T(0)), name_(std::move(name)) {}

    FeatureMap<T> forward(const FeatureMap<T>& x, bool) override {
        if (x.channels != in_ || x.vertices != 1 || x.orientations != 1)
            throw ShapeError(name_ + ": expected " + std::to_string(in_) + " pooled features, got " +
                             std::to_string(x.channels));
        x_ = x;
        FeatureMap<T> y(x.batch, -1, 1, 1, out_);
        for (int b = 0; b < x.batch; ++b)
            for (int o = 0; o < out_; ++o) {
                T s = b_[o];
                for (int i = 0; i < in_; ++i) s += w_[o * in_ + i] * x.values[b * in_ + i];
                y.values[b * out_ + o] = s;
            }
        return y;
    }
    FeatureMap<T> backward(const FeatureMap<T>& gy) override {
        FeatureMap<T> gx(x_.batch, -1, 1, 1, in_);
        for (int b = 0; b < x_.batch; ++b)
            for (int o = 0; o < out_; ++o) {
                const T g = gy.values[b * out_ + o];
                gb_[o] += g;
                for (int i = 0; i < in_; ++i) {
                    gw_[o * in_ + i] += g * x_.values[b * in_ + i];
                    gx.values[b * in_ + i] += g * w_[o * in_ + i];
                }
            }
        return gx;
    }
    std::vector<ParamRef<T>> params() override {
        return {{name_ + ".w", &w_, &gw_}, {name_ + ".b", &b_, &gb_}};
    }
    void init(std::mt19937_64& rng) {
        const double a = std::sqrt(6.0 / (in_ + out_));
        std::uniform_real_distribution<double> u(-a, a);
        for (auto& x : w_) x = static_cast<T>(u(rng));
        std::fill(b_.begin(), b_.end(), T(0));
    }

private:
    int out_, in_;
    std::vector<T> w_, b_, gw_, gb_;
    std::string name_;
    FeatureMap<T> x_;
};

bool all_finite(const auto& values) {
    for (const auto& x : values)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

// ---- model -------------------------------------------------------------------

template <typename T>
Model<T>::Model(ModelSpec spec, std::shared_ptr<const LevelContext<T>> ctx) : spec_(std::move(spec)), ctx_(std::move(ctx)) {
    spec_.validate();
    int lvl = spec_.level, ch = spec_.in_channels;
    auto stencil_at = [&](int l) -> const CompactStencil<T>& {
        if (l >= static_cast<int>(ctx_->stencils.size()) || ctx_->stencils[l].vertices == 0)
            throw ShapeError("level context has no stencils for level " + std::to_string(l));
        return ctx_->stencils[l];
    };
    for (std::size_t k = 0; k < spec_.layers.size(); ++k) {
        const LayerSpec& l = spec_.layers[k];
        const std::string name = "L" + std::to_string(k) + "." + info(l.kind).name;
        switch (l.kind) {
            case LayerKind::Psi:
            case LayerKind::Phi:
                layers_.push_back(std::make_unique<OperatorLayer<T>>(l.kind == LayerKind::Phi, l.out, ch, spec_.n,
                                                                     stencil_at(lvl), name));
                ch = l.out;
                break;
            case LayerKind::Mix:
            case LayerKind::MixOrient:
                layers_.push_back(std::make_unique<MixLayer<T>>(l.out, ch, l.kind == LayerKind::Mix ? 1 : spec_.n, name));
                ch = l.out;
                break;
            case LayerKind::BatchNorm: layers_.push_back(std::make_unique<BatchNormLayer<T>>(ch, name)); break;
            case LayerKind::Relu: layers_.push_back(std::make_unique<ReluLayer<T>>()); break;
            case LayerKind::AvgPool:
                layers_.push_back(std::make_unique<PoolLayer<T>>(ctx_->pool.at(lvl), lvl - 1));
                --lvl;
                break;
            case LayerKind::Unpool:
                layers_.push_back(std::make_unique<UnpoolLayer<T>>(ctx_->interp.at(lvl + 1), lvl + 1));
                ++lvl;
                break;
            case LayerKind::OrientPool: layers_.push_back(std::make_unique<OrientPoolLayer<T>>()); break;
            case LayerKind::GlobalPool: layers_.push_back(std::make_unique<GlobalPoolLayer<T>>()); break;
            case LayerKind::Dense:
                layers_.push_back(std::make_unique<DenseLayer<T>>(l.out, ch, name));
                ch = l.out;
                break;
        }
    }
}

template <typename T>
FeatureMap<T> Model<T>::forward(const FeatureMap<T>& x, bool training) {
    const int nv = ctx_->meshes.at(spec_.level).vertex_count();
    if (x.vertices != nv || x.orientations != 1 || x.channels != spec_.in_channels)
        throw ShapeError("model input must be [batch][" + std::to_string(nv) + "][1][" +
                         std::to_string(spec_.in_channels) + "], got [" + std::to_string(x.batch) + "][" +
                         std::to_string(x.vertices) + "][" + std::to_string(x.orientations) + "][" +
                         std::to_string(x.channels) + "]");
    FeatureMap<T> h = x;
    h.level = spec_.level;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        h = layers_[k]->forward(h, training);
        if (!all_finite(h.values))
            throw NumericError("non-finite activation after layer " + std::to_string(k) + " (" +
                               spec_.layers[k].token() + ")");
    }
    return h;
}

template <typename T>
FeatureMap<T> Model<T>::backward(const FeatureMap<T>& grad_logits) {
    FeatureMap<T> g = grad_logits;
    for (std::size_t k = layers_.size(); k-- > 0;) g = layers_[k]->backward(g);
    return g;
}

template <typename T>
void Model<T>::zero_grad() {
    for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), T(0));
}

template <typename T>
std::vector<int> Model<T>::activation_pattern() const {
    std::vector<int> out;
    for (const auto& l : layers_) l->pattern(out);
    return out;
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::params() {
    std::vector<ParamRef<T>> out;
    for (auto& l : layers_)
        for (auto& p : l->params()) out.push_back(p);
    return out;
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::buffers() {
    std::vector<ParamRef<T>> out;
    for (auto& l : layers_)
        for (auto& p : l->buffers()) out.push_back(p);
    return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() {
    std::size_t n = 0;
    for (auto& p : params()) n += p.value->size();
    return n;
}

template <typename T>
std::array<double, 6> operator_init_std(const CompactStencil<T>& st, int group_order, int c_in, int offsets,
                                        double gain) {
    // G = mean over vertices of the Gram matrix of the rows mapping samples to
    // (f, d1, d2, d11, d12, d22); on unit white noise E[(Df)(Df)^T] = G.
    Transform6 g = Transform6::Zero();
    for (int v = 0; v < st.vertices; ++v) {
        Eigen::Matrix<double, 6, 1> c;
        c(0) = 1.0;
        for (int k = 0; k < 5; ++k) c(k + 1) = st.center[5 * v + k];
        g += c * c.transpose();
        for (int j = st.offset[v]; j < st.offset[v + 1]; ++j) {
            Eigen::Matrix<double, 6, 1> r;
            r(0) = 0.0;
            for (int k = 0; k < 5; ++k) r(k + 1) = st.weight[5 * j + k];
            g += r * r.transpose();
        }
    }
    g /= st.vertices;
    // Equal contribution per component before the orientation transform, then
    // one global scale from the exact response averaged over orientations.
    Eigen::Matrix<double, 6, 1> rel;
    for (int k = 0; k < 6; ++k) rel(k) = 1.0 / g(k, k);
    const CyclicGroup grp(group_order);
    double response = 0.0;
    for (int i = 0; i < group_order; ++i) {
        const Transform6 t = coefficient_transform(grp.element(i));
        response += (t * rel.asDiagonal() * t.transpose() * g).trace();
    }
    response /= group_order;
    // psi: sum over c_in; phi: (1/N) sum over c_in and N offsets.
    response *= offsets > 0 ? static_cast<double>(c_in) / offsets : static_cast<double>(c_in);
    const double alpha = gain / response;
    std::array<double, 6> sd{};
    for (int k = 0; k < 6; ++k) sd[k] = std::sqrt(alpha * rel(k));
    return sd;
}

template <typename T>
void Model<T>::init_weights(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    for (auto& l : layers_) {
        if (auto* op = dynamic_cast<OperatorLayer<T>*>(l.get())) {
            OperatorWeights<T>& w = op->weights();
            const auto sd = operator_init_std(op->stencil(), spec_.n, w.c_in, w.offsets, op->hidden() ? 2.0 : 1.0);
            for (std::size_t k = 0; k < w.values.size(); ++k) w.values[k] = static_cast<T>(sd[k % 6] * normal(rng));
        } else if (auto* mx = dynamic_cast<MixLayer<T>*>(l.get())) {
            MixMatrix<T>& m = mx->mix();
            const double sd = std::sqrt(2.0 / (m.c_in * m.offsets));
            for (auto& x : m.values) x = static_cast<T>(sd * normal(rng));
        } else if (auto* bn = dynamic_cast<BatchNormLayer<T>*>(l.get())) {
            bn->reset();
        } else if (auto* d = dynamic_cast<DenseLayer<T>*>(l.get())) {
            d->init(rng);
        }
    }
    zero_grad();
}

// ---- checkpoints -------------------------------------------------------------

template <typename T>
Checkpoint make_checkpoint(Model<T>& model, std::uint64_t seed) {
    Checkpoint ck;
    ck.spec = model.spec();
    ck.seed = seed;
    auto add = [&](const ParamRef<T>& p) {
        ck.names.push_back(p.name);
        ck.tensors.emplace_back(p.value->begin(), p.value->end());
    };
    for (auto& p : model.params()) add(p);
    for (auto& p : model.buffers()) add(p);
    return ck;
}

template <typename T>
void load_into(Model<T>& model, const Checkpoint& ck) {
    if (ck.spec.arch() != model.spec().arch() || ck.spec.level != model.spec().level || ck.spec.n != model.spec().n ||
        ck.spec.in_channels != model.spec().in_channels)
        throw ShapeError("checkpoint architecture '" + ck.spec.arch() + "' does not match model '" +
                         model.spec().arch() + "'");
    std::vector<ParamRef<T>> all = model.params();
    for (auto& b : model.buffers()) all.push_back(b);
    if (all.size() != ck.tensors.size()) throw ShapeError("checkpoint tensor count mismatch");
    for (std::size_t k = 0; k < all.size(); ++k) {
        if (all[k].name != ck.names[k] || all[k].value->size() != ck.tensors[k].size())
            throw ShapeError("checkpoint tensor '" + ck.names[k] + "' does not match '" + all[k].name + "'");
        std::transform(ck.tensors[k].begin(), ck.tensors[k].end(), all[k].value->begin(),
                       [](float x) { return static_cast<T>(x); });
    }
}

std::vector<char> encode_checkpoint(const Checkpoint& ck) {
    io::BinaryWriter w;
    w.magic("SPDOCKPT");
    w.u32(kCheckpointFormatVersion);
    w.str(kToolVersion);
    w.u64(ck.seed);
    w.u32(ck.spec.level);
    w.u32(ck.spec.n);
    w.u32(ck.spec.in_channels);
    w.str(ck.spec.arch());
    w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
    for (std::size_t k = 0; k < ck.tensors.size(); ++k) {
        w.str(ck.names[k]);
        w.u64(ck.tensors[k].size());
        for (float x : ck.tensors[k]) w.f32(x);
    }
    return w.buffer();
}

Checkpoint decode_checkpoint(std::vector<char> bytes) {
    io::BinaryReader r(std::move(bytes));
    r.expect_magic("SPDOCKPT", "checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointFormatVersion)
        throw FormatError("unsupported checkpoint format version " + std::to_string(version));
    r.str();  // tool version
    Checkpoint ck;
    ck.seed = r.u64();
    const int level = static_cast<int>(r.u32());
    const int n = static_cast<int>(r.u32());
    const int in = static_cast<int>(r.u32());
    const std::string arch = r.str();
    try {
        ck.spec = ModelSpec::from_arch(arch, level, n, in);
    } catch (const ShapeError& e) {
        throw FormatError(std::string("checkpoint holds an invalid architecture: ") + e.what());
    }
    const std::uint32_t count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        ck.names.push_back(r.str());
        const std::uint64_t len = r.u64();
        if (len * 4 > r.remaining()) throw FormatError("checkpoint truncated in tensor '" + ck.names.back() + "'");
        std::vector<float> t(len);
        for (auto& x : t) x = r.f32();
        ck.tensors.push_back(std::move(t));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint");
    return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

#define SPDO_INSTANTIATE_MODEL(T)                                                                          \
    template struct LevelContext<T>;                                                                       \
    template class Model<T>;                                                                               \
    template std::array<double, 6> operator_init_std(const CompactStencil<T>&, int, int, int, double);    \
    template Checkpoint make_checkpoint(Model<T>&, std::uint64_t);                                         \
    template void load_into(Model<T>&, const Checkpoint&);

SPDO_INSTANTIATE_MODEL(float)
SPDO_INSTANTIATE_MODEL(double)

}  // namespace spdo
