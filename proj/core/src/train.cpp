#include "spdo/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "spdo/error.hpp"
#include "spdo/io.hpp"
#include "spdo/parallel.hpp"
#include "spdo/version.hpp"

namespace spdo {

// ---- losses ------------------------------------------------------------------

template <typename T>
double softmax_cross_entropy(const FeatureMap<T>& logits, const std::vector<int>& labels, FeatureMap<T>* grad) {
    const int nb = logits.batch, nc = logits.channels;
    if (static_cast<int>(labels.size()) != nb) throw ShapeError("label count does not match the batch");
    if (grad) *grad = FeatureMap<T>(nb, logits.level, 1, 1, nc);
    double loss = 0.0;
    for (int b = 0; b < nb; ++b) {
        const T* z = &logits.values[static_cast<std::size_t>(b) * nc];
        const double m = *std::max_element(z, z + nc);
        double sum = 0.0;
        for (int c = 0; c < nc; ++c) sum += std::exp(z[c] - m);
        const int y = labels[b];
        if (y < 0 || y >= nc) throw ShapeError("label " + std::to_string(y) + " out of range");
        loss += std::log(sum) + m - z[y];
        if (grad)
            for (int c = 0; c < nc; ++c)
                grad->values[static_cast<std::size_t>(b) * nc + c] =
                    static_cast<T>((std::exp(z[c] - m) / sum - (c == y ? 1.0 : 0.0)) / nb);
    }
    return loss / nb;
}

template <typename T>
double squared_loss(const FeatureMap<T>& out, const FeatureMap<T>& target, FeatureMap<T>* grad) {
    if (!out.same_shape(target)) throw ShapeError("squared_loss: shape mismatch");
    if (grad) *grad = out;
    double loss = 0.0;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        const double e = static_cast<double>(out.values[k]) - target.values[k];
        loss += 0.5 * e * e;
        if (grad) grad->values[k] = static_cast<T>(e);
    }
    return loss;
}

// ---- Adam --------------------------------------------------------------------

template <typename T>
void Adam<T>::step(const std::vector<ParamRef<T>>& params, double lr) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.value->size(), 0.0);
            v_.emplace_back(p.value->size(), 0.0);
        }
    }
    if (m_.size() != params.size()) throw ShapeError("optimizer state does not match the parameter list");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = *params[k].value;
        const auto& g = *params[k].grad;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * gi;
            v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * gi * gi;
            const double mh = m_[k][i] / c1, vh = v_[k][i] / c2;
            w[i] = static_cast<T>(w[i] - lr * mh / (std::sqrt(vh) + eps_));
        }
    }
}

// ---- config ------------------------------------------------------------------

double TrainConfig::lr_at(int epoch) const {
    return decay_every > 0 ? lr * std::pow(decay, epoch / decay_every) : lr;
}

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
        };
        if (strip(line).empty()) continue;
        const std::string where = "config line " + std::to_string(lineno);
        if (eq == std::string::npos) throw ShapeError(where + ": expected key=value");
        const std::string key = strip(line.substr(0, eq)), val = strip(line.substr(eq + 1));
        static const std::set<std::string> known{"lr", "batch", "epochs", "decay", "decay_every", "seed", "threads",
                                                 "deterministic"};
        if (!known.count(key)) throw ShapeError(where + ": unknown key '" + key + "'");
        try {
            std::size_t used = 0;
            auto whole = [&] {
                if (used != val.size()) throw std::invalid_argument(val);
            };
            if (key == "lr") { c.lr = std::stod(val, &used); whole(); }
            else if (key == "batch") { c.batch = std::stoi(val, &used); whole(); }
            else if (key == "epochs") { c.epochs = std::stoi(val, &used); whole(); }
            else if (key == "decay") { c.decay = std::stod(val, &used); whole(); }
            else if (key == "decay_every") { c.decay_every = std::stoi(val, &used); whole(); }
            else if (key == "seed") { c.seed = std::stoull(val, &used); whole(); }
            else if (key == "threads") { c.threads = std::stoi(val, &used); whole(); }
            else if (key == "deterministic") {
                if (val == "true" || val == "1") c.deterministic = true;
                else if (val == "false" || val == "0") c.deterministic = false;
                else throw std::invalid_argument(val);
            }
        } catch (const std::logic_error&) {
            throw ShapeError(where + ": bad value '" + val + "' for '" + key + "'");
        }
    }
    if (c.batch < 1 || c.epochs < 0 || c.lr < 0.0) throw ShapeError("config: batch must be >= 1, epochs and lr >= 0");
    return c;
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os << "lr=" << io::format_double(lr) << "\nbatch=" << batch << "\nepochs=" << epochs
       << "\ndecay=" << io::format_double(decay) << "\ndecay_every=" << decay_every << "\nseed=" << seed
       << "\ndeterministic=" << (deterministic ? "true" : "false") << "\nthreads=" << threads << "\n";
    return os.str();
}

// ---- loop --------------------------------------------------------------------

template <typename T>
EvalResult evaluate(Model<T>& model, const LabeledSphereDataset& data, int batch) {
    EvalResult r;
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    double loss = 0.0;
    int correct = 0;
    for (std::size_t b = 0; b < idx.size(); b += batch) {
        const std::size_t e = std::min(idx.size(), b + batch);
        const FeatureMap<T> logits = model.forward(data.batch<T>(idx, b, e), false);
        const std::vector<int> y(data.labels.begin() + b, data.labels.begin() + e);
        loss += softmax_cross_entropy(logits, y) * static_cast<double>(e - b);
        for (std::size_t k = 0; k < e - b; ++k) {
            const T* z = &logits.values[k * logits.channels];
            const int pred = static_cast<int>(std::max_element(z, z + logits.channels) - z);
            r.predictions.push_back(pred);
            correct += pred == y[k];
        }
    }
    r.loss = idx.empty() ? 0.0 : loss / idx.size();
    r.accuracy = idx.empty() ? 0.0 : static_cast<double>(correct) / idx.size();
    return r;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history, std::uint64_t seed) {
    std::ostringstream os;
    os << "# tool_version=" << kToolVersion << "\n# format_version=" << kReportFormatVersion << "\n# seed=" << seed
       << "\nepoch,lr,train_loss,train_acc,test_loss,test_acc\n";
    for (const auto& m : history)
        os << m.epoch << ',' << io::format_double(m.lr) << ',' << io::format_double(m.train_loss) << ','
           << io::format_double(m.train_acc) << ',' << io::format_double(m.test_loss) << ','
           << io::format_double(m.test_acc) << '\n';
    return os.str();
}

template <typename T>
std::vector<EpochMetrics> train_classifier(Model<T>& model, const LabeledSphereDataset& train,
                                           const LabeledSphereDataset* test, const TrainConfig& cfg,
                                           const TrainOutputs& out) {
    if (train.mesh_level != model.spec().level)
        throw ShapeError("training data is at level " + std::to_string(train.mesh_level) + ", model expects " +
                         std::to_string(model.spec().level));
    if (train.num_classes > model.spec().num_classes())
        throw ShapeError("data has more classes than the model outputs");
    const int prev_threads = thread_count();
    if (cfg.deterministic) set_thread_count(1);
    else if (cfg.threads > 0) set_thread_count(cfg.threads);

    std::mt19937_64 rng(cfg.seed);
    Adam<T> opt;
    std::vector<EpochMetrics> history;
    std::vector<int> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (!out.dir.empty()) std::filesystem::create_directories(out.dir);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(idx.begin(), idx.end(), rng);
        EpochMetrics m;
        m.epoch = epoch + 1;
        m.lr = cfg.lr_at(epoch);
        double loss_sum = 0.0;
        int correct = 0;
        for (std::size_t b = 0; b < idx.size(); b += cfg.batch) {
            const std::size_t e = std::min(idx.size(), b + cfg.batch);
            std::vector<int> y;
            for (std::size_t k = b; k < e; ++k) y.push_back(train.labels[idx[k]]);
            model.zero_grad();
            const FeatureMap<T> logits = model.forward(train.batch<T>(idx, b, e), true);
            FeatureMap<T> g;
            const double loss = softmax_cross_entropy(logits, y, &g);
            if (!std::isfinite(loss))
                throw NumericError("loss became non-finite at epoch " + std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(b / cfg.batch) + " (lr " + io::format_double(m.lr) + ")");
            model.backward(g);
            opt.step(model.params(), m.lr);
            loss_sum += loss * static_cast<double>(e - b);
            for (std::size_t k = 0; k < e - b; ++k) {
                const T* z = &logits.values[k * logits.channels];
                correct += (std::max_element(z, z + logits.channels) - z) == y[k];
            }
        }
        m.train_loss = idx.empty() ? 0.0 : loss_sum / idx.size();
        m.train_acc = idx.empty() ? 0.0 : static_cast<double>(correct) / idx.size();
        if (test) {
            const EvalResult r = evaluate(model, *test, std::max(cfg.batch, 32));
            m.test_loss = r.loss;
            m.test_acc = r.accuracy;
        }
        history.push_back(m);
        if (out.log)
            *out.log << "epoch " << m.epoch << " lr " << m.lr << " loss " << m.train_loss << " acc " << m.train_acc
                     << (test ? " test_acc " + std::to_string(m.test_acc) : std::string()) << std::endl;
        if (!out.dir.empty()) {
            if (out.checkpoint_every_epoch) {
                char name[32];
                std::snprintf(name, sizeof name, "ckpt_epoch_%03d.bin", m.epoch);
                save_checkpoint(make_checkpoint(model, cfg.seed), out.dir / name);
            }
            io::write_file_atomic(out.dir / "metrics.csv", metrics_csv(history, cfg.seed));
        }
    }
    if (!out.dir.empty()) {
        save_checkpoint(make_checkpoint(model, cfg.seed), out.dir / "final.bin");
        io::write_file_atomic(out.dir / "metrics.csv", metrics_csv(history, cfg.seed));
    }
    set_thread_count(prev_threads);
    return history;
}

// ---- gradient check ----------------------------------------------------------

GradcheckResult gradcheck(Model<double>& model, const FeatureMap<double>& x, const std::vector<int>& labels,
                          int probes, double h, std::uint64_t seed, double floor_fraction) {
    // Running statistics change on every training-mode forward; restore them
    // so the check leaves the model as it found it.
    std::vector<std::vector<double>> saved;
    for (auto& b : model.buffers()) saved.push_back(*b.value);

    model.zero_grad();
    FeatureMap<double> g;
    softmax_cross_entropy(model.forward(x, true), labels, &g);
    const std::vector<int> base = model.activation_pattern();
    model.backward(g);
    double gmax = 0.0;
    for (auto& p : model.params())
        for (double v : *p.grad) gmax = std::max(gmax, std::abs(v));
    const double floor = std::max(floor_fraction * gmax, 1e-300);
    // Loss at the current weights; false if the forward pass left the piece
    // of the piecewise-smooth loss that contains the base point.
    auto loss_at = [&](double& loss) {
        loss = softmax_cross_entropy(model.forward(x, true), labels);
        return model.activation_pattern() == base;
    };

    GradcheckResult res;
    res.floor = floor;
    std::mt19937_64 rng(seed);
    for (auto& p : model.params()) {
        std::uniform_int_distribution<std::size_t> pick(0, p.value->size() - 1);
        for (int k = 0; k < probes; ++k) {
            const std::size_t i = pick(rng);
            const double w0 = (*p.value)[i];
            GradcheckEntry e;
            e.param = p.name;
            e.index = i;
            e.analytic = (*p.grad)[i];
            e.step = h;
            for (int attempt = 0; attempt <= kGradcheckRetries; ++attempt, e.step *= 0.1) {
                double lp = 0.0, lm = 0.0;
                (*p.value)[i] = w0 + e.step;
                const bool same_p = loss_at(lp);
                (*p.value)[i] = w0 - e.step;
                const bool same_m = loss_at(lm);
                (*p.value)[i] = w0;
                e.numeric = (lp - lm) / (2.0 * e.step);
                e.kink_free = same_p && same_m;
                if (e.kink_free) break;
            }
            if (!e.kink_free) e.step *= 10.0;
            e.rel_err = std::abs(e.analytic - e.numeric) /
                        std::max({std::abs(e.analytic), std::abs(e.numeric), floor});
            res.max_rel_err = std::max(res.max_rel_err, e.rel_err);
            res.entries.push_back(e);
        }
    }
    auto bufs = model.buffers();
    for (std::size_t k = 0; k < bufs.size(); ++k) *bufs[k].value = saved[k];
    return res;
}

ModelSpec gradcheck_spec() {
    return ModelSpec::from_arch("psi:3,bn,relu,phi:3,mixo:3,bn,relu,pool,phi:4,mix:4,relu,opool,gpool,dense:5,relu,dense:3",
                                2, 4, 1);
}

#define SPDO_INSTANTIATE_TRAIN(T)                                                                             \
    template double softmax_cross_entropy(const FeatureMap<T>&, const std::vector<int>&, FeatureMap<T>*);     \
    template double squared_loss(const FeatureMap<T>&, const FeatureMap<T>&, FeatureMap<T>*);                 \
    template class Adam<T>;                                                                                   \
    template EvalResult evaluate(Model<T>&, const LabeledSphereDataset&, int);                                \
    template std::vector<EpochMetrics> train_classifier(Model<T>&, const LabeledSphereDataset&,              \
                                                        const LabeledSphereDataset*, const TrainConfig&,     \
                                                        const TrainOutputs&);

SPDO_INSTANTIATE_TRAIN(float)
SPDO_INSTANTIATE_TRAIN(double)

}  // namespace spdo
