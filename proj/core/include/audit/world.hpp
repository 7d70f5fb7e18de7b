#pragma once

#include <cstdint>
#include <vector>

#include "audit/dataset.hpp"
#include "audit/linalg.hpp"

namespace audit {

// Labels follow the sign of one latent coordinate, with a dead band of the
// given half-width around zero that is resampled away so classes stay
// separated by a known margin.
struct ClassRule {
    std::size_t dim = 0;
    double margin = 0.5;
};

struct WorldConfig {
    std::size_t latent_dim = 4;
    std::size_t pixel_dim = 16;
    std::size_t n_train = 2000;
    std::size_t n_test = 500;
    ClassRule class_rule;
    Vector factor_scales; // per-dim latent std; defaults to all ones
    std::uint64_t seed = 0;

    void validate() const;
};

// A complete synthetic ground truth: latent samples with labels, a frozen
// random decoder to pixel space, and (after fitting) an approximate inverse
// encoder with its measured held-out reconstruction error.
struct World {
    WorldConfig config;
    Network decoder;  // latent_dim -> pixel_dim, one relu hidden layer
    Network encoder;  // pixel_dim -> latent_dim, empty until fitted
    Dataset train;    // latent rows
    Dataset test;     // latent rows
    double reconstruction_error = -1.0; // held-out rms per-coordinate, -1 until fitted

    bool has_encoder() const { return !encoder.layers.empty(); }
};

// Deterministic for a fixed config: latents are Gaussian with the configured
// per-dim scales, labels come from the class rule (dead-band coordinates are
// redrawn, with a bounded attempt budget), and the decoder weights are
// frozen from the same seed.
World generate_world(const WorldConfig& cfg);

enum class EncoderFit { least_squares, gradient };

// Fits encoder(decode(z)) ~ z over the training latents: either one linear
// layer by regularized normal equations, or a small relu network by gradient
// descent. Stores the encoder and the held-out reconstruction error in the
// world and returns the encoder.
Network fit_encoder(World& world, EncoderFit method = EncoderFit::least_squares);

Vector decode(const World& world, VecView z);
Vector encode(const World& world, VecView x);

// Pixel-space copy of a latent dataset (labels carried over).
Dataset decode_dataset(const World& world, const Dataset& latents);

// Nominal radius convention: the mean factor scale over the perturbed dims.
double nominal_epsilon(const WorldConfig& cfg, const std::vector<std::size_t>& dims);

} // namespace audit
