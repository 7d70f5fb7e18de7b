#include "audit/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "harness_internal.hpp"

namespace audit {

void TrainConfig::validate() const {
    if (layer_widths.size() < 2) throw ConfigError("train config: need at least input and output widths");
    for (std::size_t w : layer_widths)
        if (w == 0) throw ConfigError("train config: layer width 0");
    if (epochs == 0) throw ConfigError("train config: epochs must be positive");
    if (batch_size == 0) throw ConfigError("train config: batch size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning rate must be positive");
    if (kappa_final < 0.0 || kappa_final > 1.0) throw ConfigError("train config: kappa_final must be in [0, 1]");
    if (epsilon_target < 0.0) throw ConfigError("train config: epsilon_target must be nonnegative");
    if (ramp_epochs == 0) throw ConfigError("train config: ramp_epochs must be positive");
    if (epsilon_target > 0.0 || kappa_final > 0.0) {
        PerturbationSpec pert{pert_dims, epsilon_target, norm};
        pert.validate(layer_widths.front());
    }
}

ScheduleState schedule(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch < cfg.warmup_epochs) return {1.0, 0.0};
    const std::size_t into_ramp = epoch - cfg.warmup_epochs;
    if (into_ramp >= cfg.ramp_epochs) return {1.0 - cfg.kappa_final, cfg.epsilon_target};
    const double frac = static_cast<double>(into_ramp) / static_cast<double>(cfg.ramp_epochs);
    return {1.0 - cfg.kappa_final * frac, cfg.epsilon_target * frac};
}

namespace {

double log_sum_exp(VecView logits) {
    double m = logits[0];
    for (double z : logits) m = std::max(m, z);
    double acc = 0.0;
    for (double z : logits) acc += std::exp(z - m);
    return m + std::log(acc);
}

Vector softmax(VecView logits) {
    double m = logits[0];
    for (double z : logits) m = std::max(m, z);
    Vector p(logits.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        acc += p[i];
    }
    for (double& v : p) v /= acc;
    return p;
}

// d(cross entropy)/d(logits) = softmax(logits) - onehot(y).
Vector cross_entropy_grad(VecView logits, std::size_t true_class) {
    Vector g = softmax(logits);
    g[true_class] -= 1.0;
    return g;
}

// Derivative of the first-layer half-width eps * ||W_i on dims||_q with
// respect to W_ij. Zero rows under q = 2 take the zero subgradient.
double half_width_derivative(const Layer& layer, std::size_t i, std::size_t j, const PerturbationSpec& pert,
                             double row_norm) {
    if (pert.norm == Norm::linf) {
        const double w = layer.weights.at(i, j);
        return w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
    }
    if (row_norm == 0.0) return 0.0;
    return layer.weights.at(i, j) / row_norm;
}

bool is_perturbed(const PerturbationSpec& pert, std::size_t j) {
    return std::binary_search(pert.dims.begin(), pert.dims.end(), j);
}

struct BatchLosses {
    double task = 0.0;
    double spec = 0.0;
    double total = 0.0;
};

// Shared evaluation of the scheduled objective over one batch; when grads is
// nonnull it also accumulates d(total)/d(params). The robust term is the
// cross entropy of the adversarial logits from the interval pass, and its
// gradient walks the same recursion backwards.
BatchLosses batch_objective(const Network& net, const Dataset& data, std::span<const std::size_t> batch, double chi,
                            const PerturbationSpec& pert, GradientSet* grads) {
    if (batch.empty()) throw ArgumentError("batch_objective: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const bool robust = chi < 1.0;
    const std::size_t num_layers = net.layers.size();

    BatchLosses losses;
    for (std::size_t index : batch) {
        const VecView z0 = data.row(index);
        const std::size_t label = data.labels[index];

        ForwardTrace trace = forward(net, z0);
        const double sample_task = task_loss(trace.logits(), label);
        losses.task += sample_task * inv_n;

        if (grads != nullptr && chi > 0.0) {
            Vector g = cross_entropy_grad(trace.logits(), label);
            for (double& v : g) v *= chi * inv_n;
            grads->axpy(1.0, backward(net, trace, g));
        }

        if (!robust) continue;

        BoundTrace bounds = propagate_bounds_trace(net, z0, pert);
        const Vector worst = worst_case_logits(bounds.logits(), label);
        const double sample_spec = task_loss(worst, label);
        losses.spec += sample_spec * inv_n;

        if (grads == nullptr) continue;

        // Route the cross-entropy gradient into the two interval channels:
        // the true class feeds the lower endpoint, the rest feed the upper.
        Vector g_worst = cross_entropy_grad(worst, label);
        const double weight = (1.0 - chi) * inv_n;
        Vector g_lo(net.output_dim(), 0.0);
        Vector g_hi(net.output_dim(), 0.0);
        for (std::size_t y = 0; y < net.output_dim(); ++y) {
            if (y == label) g_lo[y] = weight * g_worst[y];
            else g_hi[y] = weight * g_worst[y];
        }

        for (std::size_t k = num_layers; k-- > 0;) {
            const Layer& layer = net.layers[k];
            const Interval& pre = bounds.pre[k];

            // Endpoint gradients through the monotone activation.
            Vector ga_lo(pre.size());
            Vector ga_hi(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i) {
                ga_lo[i] = g_lo[i] * activation_derivative(layer.activation, pre.lower[i]);
                ga_hi[i] = g_hi[i] * activation_derivative(layer.activation, pre.upper[i]);
            }

            LayerGradient& lg = grads->layers[k];
            if (k == 0) {
                // First layer: endpoints are W z0 + b -+ eps * row norm.
                for (std::size_t i = 0; i < layer.output_dim(); ++i) {
                    const double sum = ga_lo[i] + ga_hi[i];
                    const double diff = ga_hi[i] - ga_lo[i];
                    lg.bias[i] += sum;
                    if (sum == 0.0 && diff == 0.0) continue;
                    const double row_norm =
                        pert.norm == Norm::l2 ? restricted_dual_norm(layer.weights.row(i), pert.dims, Norm::l2) : 0.0;
                    double* wg = lg.weights.values.data() + i * layer.input_dim();
                    for (std::size_t j = 0; j < layer.input_dim(); ++j) {
                        wg[j] += sum * z0[j];
                        if (pert.epsilon != 0.0 && is_perturbed(pert, j))
                            wg[j] += diff * pert.epsilon * half_width_derivative(layer, i, j, pert, row_norm);
                    }
                }
            } else {
                const Interval& below = bounds.post[k - 1];
                Vector mid(below.size());
                Vector rad(below.size());
                for (std::size_t j = 0; j < below.size(); ++j) {
                    mid[j] = (below.lower[j] + below.upper[j]) / 2.0;
                    rad[j] = (below.upper[j] - below.lower[j]) / 2.0;
                }

                Vector g_lo_below(below.size(), 0.0);
                Vector g_hi_below(below.size(), 0.0);
                for (std::size_t i = 0; i < layer.output_dim(); ++i) {
                    const double sum = ga_lo[i] + ga_hi[i];
                    const double diff = ga_hi[i] - ga_lo[i];
                    lg.bias[i] += sum;
                    const double* wrow = layer.weights.values.data() + i * layer.input_dim();
                    double* wg = lg.weights.values.data() + i * layer.input_dim();
                    for (std::size_t j = 0; j < layer.input_dim(); ++j) {
                        const double w = wrow[j];
                        const double sgn = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
                        // endpoints are W mid + b -+ |W| rad, so
                        // d(lo_i)/dW_ij = mid_j - sign(W_ij) rad_j and the
                        // upper endpoint takes the + sign
                        wg[j] += sum * mid[j] + diff * sgn * rad[j];
                        const double w_pos = w > 0.0 ? w : 0.0;
                        const double w_neg = w < 0.0 ? w : 0.0;
                        g_lo_below[j] += ga_lo[i] * w_pos + ga_hi[i] * w_neg;
                        g_hi_below[j] += ga_lo[i] * w_neg + ga_hi[i] * w_pos;
                    }
                }
                g_lo = std::move(g_lo_below);
                g_hi = std::move(g_hi_below);
            }
        }
    }

    if (!robust) losses.spec = losses.task;
    losses.total = chi * losses.task + (1.0 - chi) * losses.spec;
    return losses;
}

struct OptimizerState {
    GradientSet first;  // momentum buffer / first moment
    GradientSet second; // adam second moment
    std::size_t step = 0;
};

void apply_update(Network& net, const GradientSet& grads, const OptimizerConfig& opt, double lr,
                  OptimizerState& state) {
    state.step += 1;
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        auto update_array = [&](std::vector<double>& theta, const std::vector<double>& g, std::vector<double>& m,
                                std::vector<double>& v) {
            if (opt.kind == OptimizerConfig::Kind::sgd_momentum) {
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    m[i] = opt.momentum * m[i] + g[i];
                    theta[i] -= lr * m[i];
                }
                return;
            }
            const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
            const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
                theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.eps_hat);
            }
        };
        update_array(net.layers[k].weights.values, grads.layers[k].weights.values, state.first.layers[k].weights.values,
                     state.second.layers[k].weights.values);
        update_array(net.layers[k].bias, grads.layers[k].bias, state.first.layers[k].bias,
                     state.second.layers[k].bias);
    }
}

} // namespace

double task_loss(VecView logits, std::size_t true_class) {
    if (logits.empty()) throw ArgumentError("task_loss: empty logits");
    if (true_class >= logits.size())
        throw ArgumentError("task_loss: class " + std::to_string(true_class) + " out of range for " +
                            std::to_string(logits.size()) + " logits");
    require_finite(logits, "task_loss logits");
    return log_sum_exp(logits) - logits[true_class];
}

double spec_loss(const Network& net, VecView z0, const PerturbationSpec& pert, std::size_t true_class) {
    const Interval logit_box = propagate_bounds(net, z0, pert);
    return task_loss(worst_case_logits(logit_box, true_class), true_class);
}

double total_loss(const Network& net, const Dataset& data, std::span<const std::size_t> batch, double chi,
                  const PerturbationSpec& pert) {
    if (chi < 0.0 || chi > 1.0) throw ArgumentError("total_loss: chi must be in [0, 1]");
    return batch_objective(net, data, batch, chi, pert, nullptr).total;
}

GradientSet certified_backward(const Network& net, const Dataset& data, std::span<const std::size_t> batch, double chi,
                               const PerturbationSpec& pert) {
    if (chi < 0.0 || chi > 1.0) throw ArgumentError("certified_backward: chi must be in [0, 1]");
    GradientSet grads = GradientSet::zeros_like(net);
    batch_objective(net, data, batch, chi, pert, &grads);
    return grads;
}

Network init_classifier(const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) throw ConfigError("init_classifier: need at least input and output widths");
    Network net;
    net.input_dim = widths.front();
    net.layers.reserve(widths.size() - 1);
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        Layer layer;
        layer.weights = Matrix(widths[k + 1], widths[k]);
        layer.bias = Vector(widths[k + 1], 0.0);
        layer.activation = (k + 2 == widths.size()) ? Activation::identity : Activation::relu;
        const double limit = std::sqrt(6.0 / static_cast<double>(widths[k] + widths[k + 1]));
        for (double& w : layer.weights.values) w = rng.uniform(-limit, limit);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

double clean_error(const Network& net, const Dataset& data) {
    if (data.size() == 0) throw ArgumentError("clean_error: empty dataset");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (argmax(forward(net, data.row(i)).logits()) != data.labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(data.size());
}

std::pair<Network, TrainHistory> train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& eval_set) {
    cfg.validate();
    train_set.validate();
    eval_set.validate();
    if (train_set.dim() != cfg.layer_widths.front())
        throw ConfigError("train: data dim " + std::to_string(train_set.dim()) + " does not match input width " +
                          std::to_string(cfg.layer_widths.front()));
    if (eval_set.dim() != train_set.dim()) throw ConfigError("train: eval data dim differs from train data dim");
    const std::size_t classes = cfg.layer_widths.back();
    for (std::size_t label : train_set.labels)
        if (label >= classes) throw ConfigError("train: label " + std::to_string(label) + " out of range for " +
                                                std::to_string(classes) + " classes");

    Rng rng(cfg.seed);
    Network net = init_classifier(cfg.layer_widths, rng);
    net.validate();

    OptimizerState opt_state{GradientSet::zeros_like(net), GradientSet::zeros_like(net), 0};

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    const PerturbationSpec eval_pert{cfg.pert_dims, cfg.epsilon_target, cfg.norm};

    TrainHistory history;
    history.epochs.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const ScheduleState sched = schedule(epoch, cfg);
        const PerturbationSpec pert{cfg.pert_dims, sched.epsilon, cfg.norm};

        rng.shuffle(order);

        double task_sum = 0.0;
        double spec_sum = 0.0;
        double total_sum = 0.0;
        const std::size_t n = train_set.size();
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            const std::span<const std::size_t> batch(order.data() + start, count);

            GradientSet grads = GradientSet::zeros_like(net);
            const BatchLosses losses = batch_objective(net, train_set, batch, sched.chi, pert, &grads);
            if (!std::isfinite(losses.total)) {
                std::ostringstream msg;
                msg << "training diverged: nonfinite loss at epoch " << epoch << ", batch " << batch_index;
                throw NumericError(msg.str());
            }

            const double w = static_cast<double>(count) / static_cast<double>(n);
            task_sum += losses.task * w;
            spec_sum += losses.spec * w;
            total_sum += losses.total * w;

            apply_update(net, grads, cfg.optimizer, cfg.learning_rate, opt_state);
        }

        EpochRecord record;
        record.epoch = epoch;
        record.chi = sched.chi;
        record.epsilon = sched.epsilon;
        record.task_loss = task_sum;
        record.spec_loss = spec_sum;
        record.total_loss = total_sum;
        record.clean_error = clean_error(net, eval_set);
        record.verified_error = internal::interval_verified_error(net, eval_set, eval_pert);
        history.epochs.push_back(record);
    }

    return {std::move(net), std::move(history)};
}

} // namespace audit
