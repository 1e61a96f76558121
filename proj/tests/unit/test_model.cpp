#include <doctest.h>

#include <cmath>
#include <random>

#include "spdo/error.hpp"
#include "spdo/harness.hpp"
#include "spdo/model.hpp"
#include "spdo/train.hpp"

using namespace spdo;

namespace {

Model<double> make_model(const std::string& arch, int level, int n, int in = 1) {
    const ModelSpec s = ModelSpec::from_arch(arch, level, n, in);
    return Model<double>(s, LevelContext<double>::build(s.levels_used()));
}

FeatureMap<double> noise_input(int batch, int level, int vertices, int channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    FeatureMap<double> x(batch, level, vertices, 1, channels);
    for (auto& v : x.values) v = normal(rng);
    return x;
}

}  // namespace

TEST_CASE("architecture strings round trip") {
    const std::string a = "psi:4,bn,relu,phi:6,mix:6,mixo:5,pool,unpool,opool,gpool,dense:3";
    const ModelSpec s = ModelSpec::from_arch(a, 3, 8, 2);
    CHECK(s.arch() == a);
    CHECK(s.num_classes() == 3);
    CHECK(s.levels_used() == std::vector<int>{3, 2});
}

TEST_CASE("invalid stacks are rejected") {
    CHECK_THROWS_AS(ModelSpec::from_arch("phi:4,opool,gpool,dense:2", 2, 4, 1), ShapeError);
    CHECK_THROWS_AS(ModelSpec::from_arch("psi:4,dense:2", 2, 4, 1), ShapeError);
    CHECK_THROWS_AS(ModelSpec::from_arch("psi:4,opool,gpool", 2, 4, 1), ShapeError);
    CHECK_THROWS_AS(ModelSpec::from_arch("psi:0,opool,gpool,dense:2", 2, 4, 1), ShapeError);
    CHECK_THROWS_AS(ModelSpec::from_arch("psi:4,conv:3", 2, 4, 1), ShapeError);
    CHECK_THROWS_AS(ModelSpec::from_arch("psi:4,pool,pool,pool,opool,gpool,dense:2", 2, 4, 1), ShapeError);
}

TEST_CASE("preset parameter counts") {
    {
        const ModelSpec s = mnist_small_spec();
        Model<float> m(s, LevelContext<float>::build(s.levels_used()));
        CHECK(m.parameter_count() == 72746);
    }
    {
        const ModelSpec s = bumps_small_spec(4);
        Model<float> m(s, LevelContext<float>::build(s.levels_used()));
        CHECK(m.parameter_count() < 30000);
    }
}

TEST_CASE("input shape is checked") {
    Model<double> m = make_model("psi:2,opool,gpool,dense:2", 1, 4);
    m.init_weights(1);
    CHECK_THROWS_AS(m.forward(noise_input(1, 1, 12, 1, 1), true), ShapeError);
    CHECK_THROWS_AS(m.forward(noise_input(1, 1, 42, 2, 1), true), ShapeError);
    CHECK_NOTHROW(m.forward(noise_input(1, 1, 42, 1, 1), true));
}

TEST_CASE("init is a function of the seed") {
    Model<double> a = make_model("psi:3,bn,relu,phi:3,mix:3,opool,gpool,dense:2", 1, 4);
    Model<double> b = make_model("psi:3,bn,relu,phi:3,mix:3,opool,gpool,dense:2", 1, 4);
    a.init_weights(5);
    b.init_weights(5);
    const auto pa = a.params();
    const auto pb = b.params();
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(*pa[k].value == *pb[k].value);
    b.init_weights(6);
    CHECK(*pa[0].value != *b.params()[0].value);
}

TEST_CASE("psi init gives unit output variance on white noise") {
    // Monte-Carlo over weight draws and unit noise at level 4, N = 16.
    const LevelData L = make_level(4);
    const CyclicGroup g(16);
    const auto sd = operator_init_std(L.compact, 16, 1, 0, 1.0);
    std::mt19937_64 rng(42);
    std::normal_distribution<double> normal;
    double sum = 0.0;
    std::size_t count = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        OperatorWeights<double> w(1, 1, 0);
        for (std::size_t k = 0; k < w.values.size(); ++k) w.values[k] = sd[k % 6] * normal(rng);
        FeatureMap<double> x(1, 4, L.mesh.vertex_count(), 1, 1);
        for (auto& v : x.values) v = normal(rng);
        const FeatureMap<double> y = psi_layer(x, w, g, L.compact);
        for (double v : y.values) sum += v * v;
        count += y.values.size();
    }
    const double var = sum / count;
    MESSAGE("psi output variance " << var);
    CHECK(var > 0.5);
    CHECK(var < 2.0);
}

TEST_CASE("layer gradients match central differences") {
    struct Case {
        const char* arch;
        int level;
        int n;
    };
    const Case cases[] = {
        {"psi:2,opool,gpool,dense:3", 1, 4},
        {"psi:2,phi:3,opool,gpool,dense:3", 1, 4},
        {"psi:2,mix:3,opool,gpool,dense:3", 1, 4},
        {"psi:2,mixo:3,opool,gpool,dense:3", 1, 4},
        {"psi:2,bn,opool,gpool,dense:3", 1, 4},
        {"psi:2,relu,phi:2,opool,gpool,dense:3", 1, 4},
        {"psi:2,pool,phi:2,opool,gpool,dense:3", 2, 4},
        {"psi:2,pool,unpool,phi:2,opool,gpool,dense:3", 2, 4},
        {"psi:2,opool,gpool,dense:4,relu,dense:3", 1, 4},
    };
    for (const Case& c : cases) {
        CAPTURE(c.arch);
        Model<double> m = make_model(c.arch, c.level, c.n);
        m.init_weights(3);
        const int v = m.context().meshes[c.level].vertex_count();
        const GradcheckResult r = gradcheck(m, noise_input(4, c.level, v, 1, 9), {0, 1, 2, 1}, 6, 1e-4, 1);
        CHECK(r.max_rel_err < 1e-5);
    }
}

TEST_CASE("composed stack gradcheck") {
    const ModelSpec s = gradcheck_spec();
    Model<double> m(s, LevelContext<double>::build(s.levels_used()));
    m.init_weights(1);
    const int v = m.context().meshes[s.level].vertex_count();
    const GradcheckResult r = gradcheck(m, noise_input(4, s.level, v, 1, 3), {0, 1, 2, 1}, 5, 1e-4, 1);
    CHECK(r.max_rel_err < 1e-5);
}

TEST_CASE("checkpoints round trip bit for bit") {
    const ModelSpec s = ModelSpec::from_arch("psi:3,bn,relu,phi:3,opool,gpool,dense:2", 1, 4, 1);
    auto ctx = LevelContext<float>::build(s.levels_used());
    Model<float> a(s, ctx), b(s, ctx);
    a.init_weights(11);
    b.init_weights(12);
    const std::vector<char> bytes = encode_checkpoint(make_checkpoint(a, 11));
    const Checkpoint ck = decode_checkpoint(bytes);
    CHECK(ck.seed == 11);
    CHECK(ck.spec.arch() == s.arch());
    load_into(b, ck);
    const auto pa = a.params();
    const auto pb = b.params();
    for (std::size_t k = 0; k < pa.size(); ++k) CHECK(*pa[k].value == *pb[k].value);
    CHECK(encode_checkpoint(make_checkpoint(b, 11)) == bytes);

    const ModelSpec other = ModelSpec::from_arch("psi:3,bn,relu,phi:4,opool,gpool,dense:2", 1, 4, 1);
    Model<float> c(other, LevelContext<float>::build(other.levels_used()));
    CHECK_THROWS_AS(load_into(c, ck), ShapeError);

    std::vector<char> bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(std::vector<char>(bytes.begin(), bytes.begin() + 20)), FormatError);
}
