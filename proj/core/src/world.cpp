#include "audit/world.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "audit/rng.hpp"
#include "audit/train.hpp"

namespace audit {

void WorldConfig::validate() const {
    if (latent_dim == 0 || pixel_dim == 0) throw ConfigError("world config: dims must be positive");
    if (n_train == 0 || n_test == 0) throw ConfigError("world config: sample counts must be positive");
    if (class_rule.dim >= latent_dim)
        throw ConfigError("world config: class rule dim " + std::to_string(class_rule.dim) +
                          " out of range for latent dim " + std::to_string(latent_dim));
    if (!(class_rule.margin >= 0.0)) throw ConfigError("world config: class margin must be nonnegative");
    if (!factor_scales.empty()) {
        if (factor_scales.size() != latent_dim)
            throw ConfigError("world config: " + std::to_string(factor_scales.size()) + " factor scales for " +
                              std::to_string(latent_dim) + " latent dims");
        for (double s : factor_scales)
            if (!(s > 0.0)) throw ConfigError("world config: factor scales must be positive");
    }
}

namespace {

constexpr std::size_t kResampleBudget = 1000;

Dataset sample_latents(const WorldConfig& cfg, const Vector& scales, std::size_t count, Rng& rng) {
    Dataset data;
    data.points = Matrix(count, cfg.latent_dim);
    data.labels.resize(count);
    data.num_classes = 2;

    const std::size_t rule_dim = cfg.class_rule.dim;
    for (std::size_t i = 0; i < count; ++i) {
        double* row = data.points.values.data() + i * cfg.latent_dim;
        for (std::size_t j = 0; j < cfg.latent_dim; ++j) row[j] = scales[j] * rng.gaussian();

        // Keep the labeling coordinate out of the dead band so the two
        // classes are separated by a known margin.
        std::size_t attempts = 0;
        while (std::abs(row[rule_dim]) < cfg.class_rule.margin) {
            if (++attempts > kResampleBudget)
                throw ConfigError("world config: margin " + std::to_string(cfg.class_rule.margin) +
                                  " rejects nearly every draw on dim " + std::to_string(rule_dim) +
                                  " (scale " + std::to_string(scales[rule_dim]) + ")");
            row[rule_dim] = scales[rule_dim] * rng.gaussian();
        }
        data.labels[i] = row[rule_dim] > 0.0 ? 1 : 0;
    }
    return data;
}

Network random_decoder(const WorldConfig& cfg, Rng& rng) {
    const std::size_t hidden = 2 * cfg.pixel_dim;
    Network decoder;
    decoder.role = NetworkRole::decoder;
    decoder.input_dim = cfg.latent_dim;

    // Mostly-active relu units keep the map close to affine, which is what
    // lets a linear encoder invert it to a small residual.
    Layer first;
    first.weights = Matrix(hidden, cfg.latent_dim);
    first.bias = Vector(hidden);
    first.activation = Activation::relu;
    const double w1_scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    for (double& w : first.weights.values) w = w1_scale * rng.gaussian();
    for (double& b : first.bias) b = 0.5 + 0.25 * rng.gaussian();

    Layer second;
    second.weights = Matrix(cfg.pixel_dim, hidden);
    second.bias = Vector(cfg.pixel_dim, 0.0);
    second.activation = Activation::identity;
    const double w2_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double& w : second.weights.values) w = w2_scale * rng.gaussian();

    decoder.layers.push_back(std::move(first));
    decoder.layers.push_back(std::move(second));
    return decoder;
}

// Solves the symmetric positive definite system A X = B in place via
// Cholesky; returns false when a pivot collapses (rank deficiency).
bool cholesky_solve(Matrix& a, Matrix& b) {
    const std::size_t n = a.rows;
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a.at(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= a.at(j, k) * a.at(j, k);
        if (!(diag > 0.0)) return false;
        diag = std::sqrt(diag);
        a.at(j, j) = diag;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a.at(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= a.at(i, k) * a.at(j, k);
            a.at(i, j) = v / diag;
        }
    }
    // Forward then back substitution, column by column of B.
    for (std::size_t col = 0; col < b.cols; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double v = b.at(i, col);
            for (std::size_t k = 0; k < i; ++k) v -= a.at(i, k) * b.at(k, col);
            b.at(i, col) = v / a.at(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double v = b.at(i, col);
            for (std::size_t k = i + 1; k < n; ++k) v -= a.at(k, i) * b.at(k, col);
            b.at(i, col) = v / a.at(i, i);
        }
    }
    return true;
}

Network least_squares_encoder(const World& world) {
    const std::size_t n = world.train.size();
    const std::size_t m = world.config.pixel_dim;
    const std::size_t d = world.config.latent_dim;

    // Normal equations over pixel rows augmented with a bias column.
    Matrix gram(m + 1, m + 1);
    Matrix rhs(m + 1, d);
    Vector pixels;
    for (std::size_t i = 0; i < n; ++i) {
        pixels = decode(world, world.train.row(i));
        const VecView z = world.train.row(i);
        for (std::size_t a = 0; a < m; ++a) {
            for (std::size_t b = a; b < m; ++b) gram.at(a, b) += pixels[a] * pixels[b];
            gram.at(a, m) += pixels[a];
            for (std::size_t c = 0; c < d; ++c) rhs.at(a, c) += pixels[a] * z[c];
        }
        gram.at(m, m) += 1.0;
        for (std::size_t c = 0; c < d; ++c) rhs.at(m, c) += z[c];
    }
    for (std::size_t a = 0; a < m + 1; ++a)
        for (std::size_t b = 0; b < a; ++b) gram.at(a, b) = gram.at(b, a);

    Matrix factor = gram;
    Matrix solution = rhs;
    if (!cholesky_solve(factor, solution)) {
        std::cerr << "warning: encoder normal equations are ill-conditioned; refitting with ridge 1e-8\n";
        factor = gram;
        for (std::size_t a = 0; a < m + 1; ++a) factor.at(a, a) += 1e-8;
        solution = rhs;
        if (!cholesky_solve(factor, solution))
            throw NumericError("fit_encoder: normal equations unsolvable even with ridge");
    }

    Network encoder;
    encoder.role = NetworkRole::encoder;
    encoder.input_dim = m;
    Layer layer;
    layer.weights = Matrix(d, m);
    layer.bias = Vector(d);
    layer.activation = Activation::identity;
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t a = 0; a < m; ++a) layer.weights.at(c, a) = solution.at(a, c);
        layer.bias[c] = solution.at(m, c);
    }
    encoder.layers.push_back(std::move(layer));
    return encoder;
}

Network gradient_encoder(const World& world) {
    const std::size_t m = world.config.pixel_dim;
    const std::size_t d = world.config.latent_dim;
    const std::size_t n = world.train.size();

    Rng rng(world.config.seed ^ 0x9e3779b97f4a7c15ull);
    Network encoder = init_classifier({m, 2 * m, d}, rng);
    encoder.role = NetworkRole::encoder;

    Matrix pixels(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const Vector x = decode(world, world.train.row(i));
        std::copy(x.begin(), x.end(), pixels.values.begin() + i * m);
    }

    OptimizerConfig opt;
    GradientSet first = GradientSet::zeros_like(encoder);
    GradientSet second = GradientSet::zeros_like(encoder);
    std::size_t step = 0;
    const double lr = 1e-3;
    const std::size_t epochs = 60;
    const std::size_t batch_size = 64;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t count = std::min(batch_size, n - start);
            GradientSet grads = GradientSet::zeros_like(encoder);
            for (std::size_t b = 0; b < count; ++b) {
                const std::size_t i = order[start + b];
                const ForwardTrace trace = forward(encoder, pixels.row(i));
                const VecView z = world.train.row(i);
                // Mean squared error over coordinates, averaged over the batch.
                Vector g(d);
                for (std::size_t c = 0; c < d; ++c)
                    g[c] = 2.0 * (trace.logits()[c] - z[c]) / static_cast<double>(d * count);
                grads.axpy(1.0, backward(encoder, trace, g));
            }
            ++step;
            const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
            for (std::size_t k = 0; k < encoder.layers.size(); ++k) {
                auto update = [&](std::vector<double>& theta, const std::vector<double>& g, std::vector<double>& mm,
                                  std::vector<double>& vv) {
                    for (std::size_t i = 0; i < theta.size(); ++i) {
                        mm[i] = opt.beta1 * mm[i] + (1.0 - opt.beta1) * g[i];
                        vv[i] = opt.beta2 * vv[i] + (1.0 - opt.beta2) * g[i] * g[i];
                        theta[i] -= lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + opt.eps_hat);
                    }
                };
                update(encoder.layers[k].weights.values, grads.layers[k].weights.values,
                       first.layers[k].weights.values, second.layers[k].weights.values);
                update(encoder.layers[k].bias, grads.layers[k].bias, first.layers[k].bias, second.layers[k].bias);
            }
        }
    }
    return encoder;
}

} // namespace

World generate_world(const WorldConfig& cfg) {
    cfg.validate();
    World world;
    world.config = cfg;
    if (world.config.factor_scales.empty()) world.config.factor_scales = Vector(cfg.latent_dim, 1.0);

    // One stream drives everything, consumed in a fixed order: decoder
    // weights, then train latents, then test latents.
    Rng rng(world.config.seed);
    world.decoder = random_decoder(world.config, rng);
    world.train = sample_latents(world.config, world.config.factor_scales, world.config.n_train, rng);
    world.test = sample_latents(world.config, world.config.factor_scales, world.config.n_test, rng);
    return world;
}

Network fit_encoder(World& world, EncoderFit method) {
    if (world.decoder.layers.empty()) throw ArgumentError("fit_encoder: world has no decoder");
    if (world.train.size() == 0 || world.test.size() == 0)
        throw ArgumentError("fit_encoder: world needs nonempty train and test sets");
    world.encoder = method == EncoderFit::least_squares ? least_squares_encoder(world) : gradient_encoder(world);

    // Held-out reconstruction quality: rms per-coordinate error over the
    // test latents.
    double acc = 0.0;
    for (std::size_t i = 0; i < world.test.size(); ++i) {
        const VecView z = world.test.row(i);
        const Vector back = encode(world, decode(world, z));
        for (std::size_t c = 0; c < z.size(); ++c) acc += (back[c] - z[c]) * (back[c] - z[c]);
    }
    world.reconstruction_error =
        std::sqrt(acc / static_cast<double>(world.test.size() * world.config.latent_dim));
    return world.encoder;
}

Vector decode(const World& world, VecView z) {
    if (z.size() != world.config.latent_dim)
        throw ShapeError("decode: latent length " + std::to_string(z.size()) + " does not match latent dim " +
                         std::to_string(world.config.latent_dim));
    return forward(world.decoder, z).logits();
}

Vector encode(const World& world, VecView x) {
    if (!world.has_encoder()) throw ArgumentError("encode: world has no fitted encoder");
    if (x.size() != world.config.pixel_dim)
        throw ShapeError("encode: pixel length " + std::to_string(x.size()) + " does not match pixel dim " +
                         std::to_string(world.config.pixel_dim));
    return forward(world.encoder, x).logits();
}

Dataset decode_dataset(const World& world, const Dataset& latents) {
    Dataset pixels;
    pixels.points = Matrix(latents.size(), world.config.pixel_dim);
    pixels.labels = latents.labels;
    pixels.num_classes = latents.num_classes;
    for (std::size_t i = 0; i < latents.size(); ++i) {
        const Vector x = decode(world, latents.row(i));
        std::copy(x.begin(), x.end(), pixels.points.values.begin() + i * world.config.pixel_dim);
    }
    return pixels;
}

double nominal_epsilon(const WorldConfig& cfg, const std::vector<std::size_t>& dims) {
    if (dims.empty()) throw ArgumentError("nominal_epsilon: dims must be nonempty");
    const Vector scales = cfg.factor_scales.empty() ? Vector(cfg.latent_dim, 1.0) : cfg.factor_scales;
    double acc = 0.0;
    for (std::size_t d : dims) {
        if (d >= cfg.latent_dim)
            throw ArgumentError("nominal_epsilon: dim " + std::to_string(d) + " out of range for latent dim " +
                                std::to_string(cfg.latent_dim));
        acc += scales[d];
    }
    return acc / static_cast<double>(dims.size());
}

} // namespace audit
