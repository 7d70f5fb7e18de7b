#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "audit/bounds.hpp"
#include "audit/dataset.hpp"
#include "audit/linalg.hpp"
#include "audit/rng.hpp"

namespace audit {

struct OptimizerConfig {
    enum class Kind { sgd_momentum, adam };
    Kind kind = Kind::adam;
    double momentum = 0.9; // sgd_momentum only
    double beta1 = 0.9;    // adam
    double beta2 = 0.999;  // adam
    double eps_hat = 1e-8; // adam
};

struct TrainConfig {
    std::vector<std::size_t> layer_widths; // input, hidden..., classes
    std::size_t epochs = 100;
    std::size_t warmup_epochs = 5;
    std::size_t ramp_epochs = 50;
    double learning_rate = 5e-4;
    double kappa_final = 0.5;          // final weight on the robust loss term
    double epsilon_target = 0.0;       // radius reached at the end of the ramp
    std::vector<std::size_t> pert_dims;
    Norm norm = Norm::l2;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    OptimizerConfig optimizer;

    void validate() const;
};

// Loss mixing weight and perturbation radius for one epoch:
//   epoch < warmup:                  chi = 1, eps = 0
//   warmup <= epoch < warmup + ramp: both move linearly with (epoch - warmup) / ramp
//   epoch >= warmup + ramp:          chi = 1 - kappa_final, eps = epsilon_target
struct ScheduleState {
    double chi = 1.0;
    double epsilon = 0.0;
};

ScheduleState schedule(std::size_t epoch, const TrainConfig& cfg);

// Cross-entropy of softmax(logits) against the true class, computed in
// log-sum-exp form so extreme logits stay finite.
double task_loss(VecView logits, std::size_t true_class);

// Same cross-entropy applied to the adversarial logit vector obtained from
// the interval pass at the given radius. Nondecreasing in epsilon.
double spec_loss(const Network& net, VecView z0, const PerturbationSpec& pert, std::size_t true_class);

// chi * mean task loss + (1 - chi) * mean spec loss over the batch rows.
double total_loss(const Network& net, const Dataset& data, std::span<const std::size_t> batch, double chi,
                  const PerturbationSpec& pert);

// Exact gradient of total_loss, differentiating through the interval
// recursion (|W| via sign(W) with sign(0) = 0, the l2 row norm with a zero
// subgradient on zero rows, relu with subgradient 0 at the kink).
GradientSet certified_backward(const Network& net, const Dataset& data, std::span<const std::size_t> batch,
                               double chi, const PerturbationSpec& pert);

struct EpochRecord {
    std::size_t epoch = 0;
    double chi = 1.0;
    double epsilon = 0.0;
    double task_loss = 0.0;
    double spec_loss = 0.0;
    double total_loss = 0.0;
    double clean_error = 0.0;    // eval set
    double verified_error = 0.0; // eval set, interval engine, at epsilon_target
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
};

// Glorot-uniform initial network (+-sqrt(6/(fan_in+fan_out)), biases 0),
// relu on hidden layers and identity on the output layer. Consumes draws
// from the stream in a fixed order (layer by layer, row-major, weights
// before biases), which is what makes training reproducible.
Network init_classifier(const std::vector<std::size_t>& widths, Rng& rng);

// Minibatch training with the scheduled robust objective. Deterministic for
// a fixed config and datasets: seeded init, seeded shuffles, ordered
// reductions, single thread. Throws NumericError naming epoch and batch if
// the loss goes nonfinite.
std::pair<Network, TrainHistory> train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& eval_set);

// Fraction of rows whose argmax prediction differs from the label.
double clean_error(const Network& net, const Dataset& data);

} // namespace audit
