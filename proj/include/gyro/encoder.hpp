#pragma once

// Two-branch MLP encoder: a tanh trunk d -> hidden -> embed, unit-normalized,
// then a Euclidean head and a hyperbolic head (embed -> out). The hyperbolic
// head output is pre-map; callers clip and exp_map_0 it.

#include <random>

#include "gyro/types.hpp"

namespace gyro {

struct EncoderShape {
    Eigen::Index input_dim = 0;
    Eigen::Index hidden = 64;
    Eigen::Index embed = 32;
    Eigen::Index out = 16;
    bool shared_heads = false;  // both branches read head_e when set

    void validate() const;
    bool operator==(const EncoderShape&) const = default;
};

struct EncoderParams {
    EncoderShape shape;
    Matrix w1;  // hidden x input_dim
    Vector b1;
    Matrix w2;  // embed x hidden
    Vector b2;
    Matrix head_e;  // out x embed
    Vector bias_e;
    Matrix head_h;  // empty when shape.shared_heads
    Vector bias_h;

    /// Zero parameters of the given shape.
    explicit EncoderParams(const EncoderShape& s = {});

    Eigen::Index parameter_count() const;
    Vector flatten() const;
    void assign(const Vector& flat);

    // Throws InvalidArgument on a shape mismatch or non-finite entries.
    void validate() const;
};

/// Gaussian (Glorot-scaled) trunk weights; heads with orthonormal rows drawn
/// from a QR factorization of a Gaussian matrix; zero biases.
EncoderParams init_encoder(const EncoderShape& shape, std::mt19937_64& rng);

// Forward activations kept for the backward pass.
struct EncoderForward {
    Matrix ze;      // K x out
    Matrix zh_pre;  // K x out
    Matrix hidden;  // K x hidden, post tanh
    Matrix unit;    // K x embed, normalized trunk output
    Vector norms;   // trunk output norms; below kNormGuard the unit row is e1
};

inline constexpr double kNormGuard = 1e-12;

EncoderForward encode(const EncoderParams& params, const Matrix& x);

/// Gradient with respect to the flattened parameters given dL/d ze and
/// dL/d zh_pre (either may be empty when its branch is unused).
Vector encoder_backward(const EncoderParams& params, const Matrix& x, const EncoderForward& fwd,
                        const Matrix& grad_e, const Matrix& grad_h);

}  // namespace gyro
