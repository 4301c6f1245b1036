#pragma once

// Poincare-ball gyrovector operations.
//
// All kernels are pure functions in double precision. A curvature of c = 0
// selects explicit Euclidean branches (vector addition, 2 * ||x - y||)
// instead of evaluating the hyperbolic formulas in the limit.

#include "gyro/types.hpp"

namespace gyro {

struct BallConfig {
    double c = 0.1;          // curvature, ball radius is 1 / sqrt(c)
    double r = 2.3;          // clip radius applied before the exponential map
    double eps_ball = 1e-5;  // points are kept at sqrt(c) * ||x|| <= 1 - eps_ball

    // Throws InvalidArgument naming the offending field.
    void validate() const;
};

/// True when c * ||x||^2 < 1 (always true for c = 0).
bool inside_ball(const VecRef& x, double c);

/// Rescales x onto the shell sqrt(c) * ||x|| = 1 - eps_ball when it lies on
/// or beyond it. Identity for c = 0.
Vector project_to_ball(const VecRef& x, const BallConfig& cfg);

/// Mobius addition x (+)_c y. The result is re-projected into the ball.
/// Throws DomainError naming "x" or "y" when an input lies outside the ball.
Vector mobius_add(const VecRef& x, const VecRef& y, const BallConfig& cfg);

/// Geodesic distance (2 / sqrt(c)) * artanh(sqrt(c) * ||-x (+)_c y||).
/// Requires c > 0; use euclidean_limit_dist (or ball_dist) for c = 0.
double hyp_dist(const VecRef& x, const VecRef& y, const BallConfig& cfg);

/// The c -> 0 limit of hyp_dist: 2 * ||x - y||.
double euclidean_limit_dist(const VecRef& x, const VecRef& y);

/// hyp_dist for c > 0, euclidean_limit_dist for c = 0.
double ball_dist(const VecRef& x, const VecRef& y, const BallConfig& cfg);

/// Exponential map at the origin: tanh(sqrt(c) ||v||) v / (sqrt(c) ||v||),
/// projected into the ball. v = 0 maps to the origin; c = 0 is the identity.
Vector exp_map_0(const VecRef& v, const BallConfig& cfg);

/// v if ||v|| <= r, otherwise v rescaled to norm r.
Vector clip_norm(const VecRef& v, double r);

/// Squared chord distance between the unit directions of a and b:
/// 2 - 2 cos(a, b). Throws DomainError on a zero-norm input.
double cos_dist(const VecRef& a, const VecRef& b);

// ---------------------------------------------------------------------------
// Derivatives. The *_vjp functions take the gradient with respect to the
// output and return the gradient with respect to the input.

struct PairGrad {
    Vector dx;
    Vector dy;
};

Vector clip_norm_vjp(const VecRef& v, double r, const VecRef& grad_out);

Vector exp_map_0_vjp(const VecRef& v, const BallConfig& cfg, const VecRef& grad_out);

/// Gradient of cos_dist(a, b) with respect to both arguments.
PairGrad cos_dist_grad(const VecRef& a, const VecRef& b);

/// Gradient of ball_dist(x, y) with respect to both arguments. Coincident
/// points and pairs whose gyro-difference was clamped by the ball projection
/// get a zero gradient.
PairGrad ball_dist_grad(const VecRef& x, const VecRef& y, const BallConfig& cfg);

}  // namespace gyro
