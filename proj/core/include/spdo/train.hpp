#pragma once

// Losses, Adam with step decay, the classifier training loop and gradient
// checking.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "spdo/data.hpp"
#include "spdo/model.hpp"

namespace spdo {

// Mean softmax cross-entropy over the batch. logits: [batch][1][1][classes].
// grad (optional) receives d loss / d logits.
template <typename T>
double softmax_cross_entropy(const FeatureMap<T>& logits, const std::vector<int>& labels,
                             FeatureMap<T>* grad = nullptr);

// 0.5 * sum of squared differences.
template <typename T>
double squared_loss(const FeatureMap<T>& out, const FeatureMap<T>& target, FeatureMap<T>* grad = nullptr);

template <typename T>
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(const std::vector<ParamRef<T>>& params, double lr);

private:
    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Flat key=value configuration (one pair per line, '#' comments).
struct TrainConfig {
    double lr = 0.01;
    int batch = 16;
    int epochs = 10;
    double decay = 0.5;      // lr factor applied every decay_every epochs
    int decay_every = 10;
    std::uint64_t seed = 1;
    bool deterministic = false;  // 64-bit, single thread
    int threads = 0;             // float mode; 0 = SPDO_THREADS or hardware

    double lr_at(int epoch) const;  // epoch counted from 0

    // Unknown keys and malformed values throw ShapeError naming the line.
    static TrainConfig parse(const std::string& text);
    std::string to_text() const;
};

struct EpochMetrics {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_loss = 0.0;
    double test_acc = 0.0;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<int> predictions;
};

template <typename T>
EvalResult evaluate(Model<T>& model, const LabeledSphereDataset& data, int batch = 64);

struct TrainOutputs {
    std::filesystem::path dir;  // empty: nothing written
    bool checkpoint_every_epoch = true;
    std::ostream* log = nullptr;
};

// Adam on mini-batches shuffled per epoch from cfg.seed; the learning rate
// follows lr_at. Writes metrics.csv and ckpt_epoch_<k>.bin (plus final.bin)
// under out.dir. Throws NumericError with the epoch and batch if the loss
// goes non-finite.
template <typename T>
std::vector<EpochMetrics> train_classifier(Model<T>& model, const LabeledSphereDataset& train,
                                           const LabeledSphereDataset* test, const TrainConfig& cfg,
                                           const TrainOutputs& out = {});

std::string metrics_csv(const std::vector<EpochMetrics>& history, std::uint64_t seed);

struct GradcheckEntry {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
    double step = 0.0;       // step actually used
    bool kink_free = true;   // no relu / argmax / floor switch within +-step
};

struct GradcheckResult {
    std::vector<GradcheckEntry> entries;
    double max_rel_err = 0.0;
    double floor = 0.0;
};

inline constexpr int kGradcheckRetries = 3;

// Central differences (step h) of the training-mode cross-entropy at
// `probes` random entries of every parameter tensor. Relative error is
// |a - n| / max(|a|, |n|, floor) with floor = floor_fraction times the
// largest analytic gradient entry, so that entries near zero are judged on
// the model's gradient scale rather than their own. The loss is only piecewise smooth; a probe
// whose +-h evaluations change the activation pattern is repeated with the
// step divided by 10, at most kGradcheckRetries times.
GradcheckResult gradcheck(Model<double>& model, const FeatureMap<double>& x, const std::vector<int>& labels,
                          int probes, double h, std::uint64_t seed, double floor_fraction = 1e-3);

// The composed model used by the gradcheck command: every layer type at
// small sizes (level 2, N = 4).
ModelSpec gradcheck_spec();

}  // namespace spdo
