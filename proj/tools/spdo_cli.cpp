// spdo: batch entry points for meshes, stencils, verification reports,
// data sets and training.
//
// Exit codes: 0 success, 1 validation failure (bad flags, shapes, domains,
// failed checks), 2 I/O or file-format error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spdo/data.hpp"
#include "spdo/error.hpp"
#include "spdo/harness.hpp"
#include "spdo/io.hpp"
#include "spdo/model.hpp"
#include "spdo/parallel.hpp"
#include "spdo/stencil.hpp"
#include "spdo/train.hpp"
#include "spdo/version.hpp"

using namespace spdo;
namespace fs = std::filesystem;

namespace {

constexpr double kGradcheckTolerance = 1e-5;

void banner(const std::string& cmd, std::uint64_t seed) {
    std::cout << "spdo " << kToolVersion << ' ' << cmd << " seed=" << seed << " formats: mesh=" << kMeshFormatVersion
              << " stencil=" << kStencilFormatVersion << " checkpoint=" << kCheckpointFormatVersion
              << " dataset=" << kDatasetFormatVersion << " report=" << kReportFormatVersion
              << " threads=" << thread_count() << '\n';
}

void write_report(const ConvergenceReport& r, std::uint64_t seed, const std::string& out) {
    print_report_table(std::cout, r);
    if (!out.empty()) {
        io::write_file_atomic(out, report_csv(r, seed));
        std::cout << "wrote " << out << '\n';
    }
}

ModelSpec resolve_model(const std::string& model, int level, int n, int classes) {
    if (model == "bumps-small") {
        ModelSpec s = bumps_small_spec(classes);
        if (level >= 0) s.level = level;
        if (n > 0) s.n = n;
        s.validate();
        return s;
    }
    if (model == "mnist-small") {
        ModelSpec s = mnist_small_spec(level >= 0 ? level : 4);
        if (n > 0) s.n = n;
        s.validate();
        return s;
    }
    return ModelSpec::from_arch(model, level >= 0 ? level : 3, n > 0 ? n : 8, 1);
}

// Normalization stats: those stored in `stats_from` if given, else the set's own.
void apply_normalization(LabeledSphereDataset& d, const std::string& stats_from) {
    if (stats_from.empty()) {
        normalize(d, channel_stats(d));
        return;
    }
    const LabeledSphereDataset ref = load_dataset(stats_from);
    if (ref.norm_mean.empty()) throw ShapeError(stats_from + " carries no normalization statistics");
    normalize(d, ChannelStats{ref.norm_mean, ref.norm_std});
}

template <typename T>
int run_training(const ModelSpec& spec, const LabeledSphereDataset& train, const LabeledSphereDataset* test,
                 const TrainConfig& cfg, const std::string& out, const std::string& cache) {
    Model<T> model(spec, LevelContext<T>::build(spec.levels_used(), cache));
    model.init_weights(cfg.seed);
    std::cout << "model " << spec.arch() << " level=" << spec.level << " n=" << spec.n
              << " params=" << model.parameter_count() << (sizeof(T) == 8 ? " (64-bit)" : " (32-bit)") << '\n';
    TrainOutputs o;
    o.dir = out;
    o.log = &std::cout;
    const auto h = train_classifier(model, train, test, cfg, o);
    if (!h.empty() && test) std::cout << "final test accuracy " << io::format_double(h.back().test_acc) << '\n';
    if (!out.empty()) std::cout << "wrote " << (fs::path(out) / "final.bin").string() << '\n';
    return 0;
}

template <typename T>
void run_eval(const Checkpoint& ck, const LabeledSphereDataset& data, const std::string& out) {
    Model<T> model(ck.spec, LevelContext<T>::build(ck.spec.levels_used()));
    load_into(model, ck);
    const EvalResult r = evaluate(model, data);
    std::cout << "samples " << data.size() << " loss " << io::format_double(r.loss) << " accuracy "
              << io::format_double(r.accuracy) << '\n';
    if (!out.empty()) {
        std::ostringstream os;
        os << "# tool_version=" << kToolVersion << "\n# format_version=" << kReportFormatVersion
           << "\n# seed=" << ck.seed << "\nsample,label,prediction\n";
        for (int i = 0; i < data.size(); ++i) os << i << ',' << data.labels[i] << ',' << r.predictions[i] << '\n';
        io::write_file_atomic(out, os.str());
        std::cout << "wrote " << out << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spdo: icosahedral PDO stencils, equivariant spherical layers and their verification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    // mesh-gen
    int mesh_level = 4;
    std::string mesh_out;
    auto* mesh_cmd = app.add_subcommand("mesh-gen", "Write an icosahedral mesh as JSON");
    mesh_cmd->add_option("--level", mesh_level, "Subdivision level")->required();
    mesh_cmd->add_option("--out", mesh_out, "Output JSON path")->required();

    // stencil-build
    int st_level = 4;
    std::string st_out;
    auto* st_cmd = app.add_subcommand("stencil-build", "Build per-vertex derivative stencils");
    st_cmd->add_option("--level", st_level, "Subdivision level")->required();
    st_cmd->add_option("--out", st_out, "Output binary path")->required();

    // equivariance-report
    std::string eq_kind = "psi";
    std::vector<int> eq_levels{3, 4, 5};
    int eq_n = 16, eq_trials = 20;
    std::uint64_t eq_seed = 7;
    std::string eq_out;
    bool eq_value_only = false;
    auto* eq_cmd = app.add_subcommand("equivariance-report", "Equivariance defect against the exact continuous layers");
    eq_cmd->add_option("--kind", eq_kind, "psi | phi | smoke")->check(CLI::IsMember({"psi", "phi", "smoke"}));
    eq_cmd->add_option("--levels", eq_levels, "Mesh levels")->delimiter(',');
    eq_cmd->add_option("--n", eq_n, "Group order")->check(CLI::PositiveNumber);
    eq_cmd->add_option("--trials", eq_trials, "Random draws per level")->check(CLI::PositiveNumber);
    eq_cmd->add_option("--seed", eq_seed, "Random seed");
    eq_cmd->add_flag("--value-only", eq_value_only, "psi: weights (1,0,...,0)");
    eq_cmd->add_option("--out", eq_out, "CSV path");

    // convergence-report
    std::string cv_kind = "first";
    std::vector<int> cv_levels{3, 4, 5, 6};
    std::vector<int> cv_ns{2, 4, 8, 16, 32};
    int cv_level = 5, cv_trials = 4, cv_stride = 1;
    std::string cv_family = "poisson";
    std::uint64_t cv_seed = 7;
    std::string cv_out;
    auto* cv_cmd = app.add_subcommand("convergence-report", "Stencil consistency and orientation quadrature studies");
    cv_cmd->add_option("--kind", cv_kind, "first | second (stencils on exp(x3)) | quadrature")
        ->check(CLI::IsMember({"first", "second", "quadrature"}));
    cv_cmd->add_option("--levels", cv_levels, "first/second: mesh levels")->delimiter(',');
    cv_cmd->add_option("--n-values", cv_ns, "quadrature: group orders")->delimiter(',');
    cv_cmd->add_option("--level", cv_level, "quadrature: mesh level");
    cv_cmd->add_option("--family", cv_family, "quadrature: constant | cosine | poisson")
        ->check(CLI::IsMember({"constant", "cosine", "poisson"}));
    cv_cmd->add_option("--trials", cv_trials, "quadrature: random families")->check(CLI::PositiveNumber);
    cv_cmd->add_option("--vertex-stride", cv_stride, "quadrature: evaluate every k-th vertex")->check(CLI::PositiveNumber);
    cv_cmd->add_option("--seed", cv_seed, "Random seed");
    cv_cmd->add_option("--out", cv_out, "CSV path");

    // gradcheck
    std::uint64_t gc_seed = 1;
    int gc_probes = 5;
    double gc_h = 1e-4;
    std::string gc_out;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Backprop against central differences on the composed small model");
    gc_cmd->add_option("--seed", gc_seed, "Random seed");
    gc_cmd->add_option("--probes", gc_probes, "Entries per parameter tensor")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--step", gc_h, "Difference step")->check(CLI::PositiveNumber);
    gc_cmd->add_option("--out", gc_out, "CSV of probed entries");

    // train
    std::string tr_train, tr_test, tr_model = "bumps-small", tr_config, tr_out, tr_cache;
    int tr_level = -1, tr_n = 0;
    std::optional<int> tr_epochs, tr_batch, tr_threads;
    std::optional<double> tr_lr;
    std::optional<std::uint64_t> tr_seed;
    bool tr_det = false;
    auto* tr_cmd = app.add_subcommand("train", "Train a classifier on data sets from synth-data or mnist-prep");
    tr_cmd->add_option("--train", tr_train, "Training set")->required();
    tr_cmd->add_option("--test", tr_test, "Test set, evaluated after every epoch");
    tr_cmd->add_option("--model", tr_model, "bumps-small | mnist-small | architecture string");
    tr_cmd->add_option("--level", tr_level, "Input level (default: preset or 3)");
    tr_cmd->add_option("--n", tr_n, "Group order (default: preset or 8)");
    tr_cmd->add_option("--config", tr_config, "key=value training config");
    tr_cmd->add_option("--epochs", tr_epochs, "Overrides config");
    tr_cmd->add_option("--batch", tr_batch, "Overrides config");
    tr_cmd->add_option("--lr", tr_lr, "Overrides config");
    tr_cmd->add_option("--seed", tr_seed, "Overrides config");
    tr_cmd->add_option("--threads", tr_threads, "Overrides config and SPDO_THREADS");
    tr_cmd->add_flag("--deterministic", tr_det, "64-bit, single thread");
    tr_cmd->add_option("--out", tr_out, "Directory for checkpoints and metrics.csv")->required();
    tr_cmd->add_option("--stencil-cache", tr_cache, "Directory of cached stencils");

    // eval
    std::string ev_ckpt, ev_data, ev_out;
    bool ev_double = false;
    auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a data set");
    ev_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
    ev_cmd->add_option("--data", ev_data, "Data set")->required();
    ev_cmd->add_flag("--deterministic", ev_double, "64-bit, single thread");
    ev_cmd->add_option("--out", ev_out, "CSV of predictions");

    // synth-data
    int sd_level = 3, sd_classes = 4, sd_per_class = 1000;
    bool sd_canonical = false;
    std::uint64_t sd_seed = 1;
    std::string sd_split = "train", sd_stats, sd_out;
    auto* sd_cmd = app.add_subcommand("synth-data", "Generate the bump-constellation classification set");
    sd_cmd->add_option("--level", sd_level, "Mesh level");
    sd_cmd->add_option("--classes", sd_classes, "Number of classes (1-8)");
    sd_cmd->add_option("--per-class", sd_per_class, "Samples per class")->check(CLI::NonNegativeNumber);
    sd_cmd->add_flag("--canonical", sd_canonical, "No random rotations");
    sd_cmd->add_option("--seed", sd_seed, "Rotation seed");
    sd_cmd->add_option("--split", sd_split, "Split name stored in the file");
    sd_cmd->add_option("--stats-from", sd_stats, "Normalize with the statistics stored in this data set");
    sd_cmd->add_option("--out", sd_out, "Output path")->required();

    // mnist-prep
    std::string mp_images, mp_labels, mp_split = "train", mp_stats, mp_out;
    int mp_level = 4, mp_limit = 0;
    bool mp_rotated = false;
    std::uint64_t mp_seed = 1;
    auto* mp_cmd = app.add_subcommand("mnist-prep", "Project IDX digit images onto the mesh");
    mp_cmd->add_option("--images", mp_images, "IDX image file")->required();
    mp_cmd->add_option("--labels", mp_labels, "IDX label file")->required();
    mp_cmd->add_option("--level", mp_level, "Mesh level");
    mp_cmd->add_option("--limit", mp_limit, "Use the first k images (0 = all)")->check(CLI::NonNegativeNumber);
    mp_cmd->add_flag("--rotated", mp_rotated, "Random rotation per image");
    mp_cmd->add_option("--seed", mp_seed, "Rotation seed");
    mp_cmd->add_option("--split", mp_split, "Split name stored in the file");
    mp_cmd->add_option("--stats-from", mp_stats, "Normalize with the statistics stored in this data set");
    mp_cmd->add_option("--out", mp_out, "Output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*mesh_cmd) {
            banner("mesh-gen", 0);
            const IcoMesh mesh = build_mesh(mesh_level);
            save_mesh_json(mesh, mesh_out);
            std::cout << "level " << mesh_level << " vertices " << mesh.vertex_count() << " faces "
                      << mesh.faces.size() << "\nwrote " << mesh_out << '\n';
        } else if (*st_cmd) {
            banner("stencil-build", 0);
            const StencilSet s = build_stencils(build_mesh(st_level));
            save_stencils(s, st_out);
            std::cout << "level " << st_level << " stencils " << s.vertex_count() << "\nwrote " << st_out << '\n';
        } else if (*eq_cmd) {
            banner("equivariance-report", eq_seed);
            if (eq_kind == "psi") {
                PsiDefectOptions o;
                o.n = eq_n;
                o.trials = eq_trials;
                o.seed = eq_seed;
                o.value_only = eq_value_only;
                write_report(psi_equivariance_error(eq_levels, o), eq_seed, eq_out);
            } else if (eq_kind == "phi") {
                PhiLevelOptions o;
                o.n = eq_n;
                o.trials = eq_trials;
                o.seed = eq_seed;
                write_report(phi_level_error(eq_levels, o), eq_seed, eq_out);
            } else {
                SmokeOptions o;
                o.n = eq_n;
                o.trials = eq_trials;
                o.seed = eq_seed;
                const auto rows = network_equivariance_smoke(eq_levels, o);
                std::ostringstream os;
                os << "# tool_version=" << kToolVersion << "\n# format_version=" << kReportFormatVersion
                   << "\n# seed=" << eq_seed << "\n# quantity=stack_defect\nlevel,after_psi,after_phi\n";
                for (const auto& r : rows)
                    os << r.level << ',' << io::format_double(r.max_defect_per_depth[0]) << ','
                       << io::format_double(r.max_defect_per_depth[1]) << '\n';
                std::cout << os.str();
                if (!eq_out.empty()) io::write_file_atomic(eq_out, os.str());
            }
        } else if (*cv_cmd) {
            banner("convergence-report", cv_seed);
            if (cv_kind == "quadrature") {
                PhiQuadratureOptions o;
                o.level = cv_level;
                o.n_values = cv_ns;
                o.trials = cv_trials;
                o.vertex_stride = cv_stride;
                o.seed = cv_seed;
                o.family = cv_family == "constant"  ? PhiQuadratureOptions::Family::Constant
                           : cv_family == "cosine" ? PhiQuadratureOptions::Family::Cosine
                                                   : PhiQuadratureOptions::Family::Poisson;
                write_report(phi_quadrature_error(o), cv_seed, cv_out);
            } else {
                const ConsistencyResult c = stencil_consistency(cv_levels, exp_x3());
                write_report(cv_kind == "first" ? c.first : c.second, cv_seed, cv_out);
            }
        } else if (*gc_cmd) {
            banner("gradcheck", gc_seed);
            const ModelSpec s = gradcheck_spec();
            Model<double> m(s, LevelContext<double>::build(s.levels_used()));
            m.init_weights(gc_seed);
            std::mt19937_64 rng(gc_seed);
            std::normal_distribution<double> normal;
            const int batch = 4;
            FeatureMap<double> x(batch, s.level, m.context().meshes[s.level].vertex_count(), 1, s.in_channels);
            for (auto& v : x.values) v = normal(rng);
            std::vector<int> labels;
            for (int b = 0; b < batch; ++b) labels.push_back(b % s.num_classes());
            const GradcheckResult r = gradcheck(m, x, labels, gc_probes, gc_h, gc_seed);
            int retried = 0;
            for (const auto& e : r.entries) retried += e.step != gc_h;
            std::cout << "model " << s.arch() << " level=" << s.level << " n=" << s.n << "\nprobes "
                      << r.entries.size() << " (step reduced near a kink: " << retried << ")\nmax relative error "
                      << io::format_double(r.max_rel_err) << '\n';
            if (!gc_out.empty()) {
                std::ostringstream os;
                os << "# tool_version=" << kToolVersion << "\n# format_version=" << kReportFormatVersion
                   << "\n# seed=" << gc_seed << "\nparam,index,analytic,numeric,rel_err,step,kink_free\n";
                for (const auto& e : r.entries)
                    os << e.param << ',' << e.index << ',' << io::format_double(e.analytic) << ','
                       << io::format_double(e.numeric) << ',' << io::format_double(e.rel_err) << ','
                       << io::format_double(e.step) << ',' << e.kink_free << '\n';
                io::write_file_atomic(gc_out, os.str());
            }
            if (r.max_rel_err >= kGradcheckTolerance) {
                std::cerr << "gradcheck failed: max relative error " << r.max_rel_err << " >= " << kGradcheckTolerance
                          << '\n';
                return 1;
            }
        } else if (*tr_cmd) {
            TrainConfig cfg;
            if (!tr_config.empty()) {
                const auto bytes = io::read_file(tr_config);
                cfg = TrainConfig::parse(std::string(bytes.begin(), bytes.end()));
            }
            if (tr_epochs) cfg.epochs = *tr_epochs;
            if (tr_batch) cfg.batch = *tr_batch;
            if (tr_lr) cfg.lr = *tr_lr;
            if (tr_seed) cfg.seed = *tr_seed;
            if (tr_threads) cfg.threads = *tr_threads;
            if (tr_det) cfg.deterministic = true;
            if (cfg.batch < 1 || cfg.epochs < 0 || cfg.lr < 0.0) throw ShapeError("need batch >= 1, epochs >= 0, lr >= 0");
            if (cfg.deterministic) set_thread_count(1);
            else if (cfg.threads > 0) set_thread_count(cfg.threads);
            banner("train", cfg.seed);
            const LabeledSphereDataset train = load_dataset(tr_train);
            std::optional<LabeledSphereDataset> test;
            if (!tr_test.empty()) test = load_dataset(tr_test);
            const ModelSpec spec =
                resolve_model(tr_model, tr_level >= 0 ? tr_level : train.mesh_level, tr_n, train.num_classes);
            if (test && test->mesh_level != spec.level)
                throw ShapeError(tr_test + " is at level " + std::to_string(test->mesh_level) + ", model expects " +
                                 std::to_string(spec.level));
            fs::create_directories(tr_out);
            io::write_file_atomic(fs::path(tr_out) / "config.txt", cfg.to_text());
            std::cout << "train " << tr_train << " (" << train.size() << ")";
            if (test) std::cout << " test " << tr_test << " (" << test->size() << ")";
            std::cout << '\n';
            const LabeledSphereDataset* tp = test ? &*test : nullptr;
            return cfg.deterministic ? run_training<double>(spec, train, tp, cfg, tr_out, tr_cache)
                                     : run_training<float>(spec, train, tp, cfg, tr_out, tr_cache);
        } else if (*ev_cmd) {
            if (ev_double) set_thread_count(1);
            const Checkpoint ck = load_checkpoint(ev_ckpt);
            banner("eval", ck.seed);
            const LabeledSphereDataset data = load_dataset(ev_data);
            if (data.mesh_level != ck.spec.level)
                throw ShapeError(ev_data + " is at level " + std::to_string(data.mesh_level) + ", checkpoint expects " +
                                 std::to_string(ck.spec.level));
            if (ev_double) run_eval<double>(ck, data, ev_out);
            else run_eval<float>(ck, data, ev_out);
        } else if (*sd_cmd) {
            banner("synth-data", sd_seed);
            LabeledSphereDataset d = synth_bumps(sd_level, sd_classes, sd_per_class, !sd_canonical, sd_seed, sd_split);
            apply_normalization(d, sd_stats);
            save_dataset(d, sd_out);
            std::cout << "samples " << d.size() << " level " << d.mesh_level << " classes " << d.num_classes
                      << "\nwrote " << sd_out << '\n';
        } else if (*mp_cmd) {
            banner("mnist-prep", mp_seed);
            const ImageSet images = load_mnist_idx(mp_images, mp_labels);
            DigitProjection p;
            p.level = mp_level;
            p.limit = mp_limit;
            p.rotated = mp_rotated;
            p.seed = mp_seed;
            p.split = mp_split;
            LabeledSphereDataset d = project_image_set(images, p);
            apply_normalization(d, mp_stats);
            save_dataset(d, mp_out);
            std::cout << "samples " << d.size() << " level " << d.mesh_level << "\nwrote " << mp_out << '\n';
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
