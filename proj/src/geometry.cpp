#include "gyro/geometry.hpp"

#include <cmath>
#include <string>

namespace gyro {

namespace {

bool all_finite(const VecRef& v) { return v.allFinite(); }

void require_inside(const VecRef& p, double c, const char* name) {
    if (!all_finite(p)) {
        throw DomainError(std::string("mobius_add: argument ") + name + " is not finite");
    }
    if (!inside_ball(p, c)) {
        throw DomainError(std::string("mobius_add: argument ") + name +
                          " lies outside the Poincare ball (c * ||" + name + "||^2 >= 1)");
    }
}

// Largest admissible Euclidean norm for a ball point.
double max_ball_norm(const BallConfig& cfg) { return (1.0 - cfg.eps_ball) / std::sqrt(cfg.c); }

}  // namespace

void BallConfig::validate() const {
    if (!(c >= 0.0) || !std::isfinite(c)) {
        throw InvalidArgument("ball.c", "curvature must be finite and >= 0");
    }
    if (!(r > 0.0) || !std::isfinite(r)) {
        throw InvalidArgument("ball.r", "clip radius must be finite and > 0");
    }
    if (!(eps_ball > 0.0 && eps_ball < 1.0)) {
        throw InvalidArgument("ball.eps_ball", "safety margin must lie in (0, 1)");
    }
}

bool inside_ball(const VecRef& x, double c) {
    if (c == 0.0) return true;
    return c * x.squaredNorm() < 1.0;
}

Vector project_to_ball(const VecRef& x, const BallConfig& cfg) {
    if (cfg.c == 0.0) return x;
    const double norm = x.norm();
    const double limit = max_ball_norm(cfg);
    if (norm >= limit && norm > 0.0) {
        return x * (limit / norm);
    }
    return x;
}

Vector mobius_add(const VecRef& x, const VecRef& y, const BallConfig& cfg) {
    if (x.size() != y.size()) {
        throw InvalidArgument("mobius_add", "dimension mismatch");
    }
    const double c = cfg.c;
    require_inside(x, c, "x");
    require_inside(y, c, "y");
    if (c == 0.0) return x + y;

    const double xy = x.dot(y);
    const double x2 = x.squaredNorm();
    const double y2 = y.squaredNorm();
    const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    Vector num = (1.0 + 2.0 * c * xy + c * y2) * x + (1.0 - c * x2) * y;
    return project_to_ball(num / den, cfg);
}

double hyp_dist(const VecRef& x, const VecRef& y, const BallConfig& cfg) {
    if (cfg.c == 0.0) {
        throw DomainError("hyp_dist: c = 0 has no hyperbolic distance; use the Euclidean limit 2 * ||x - y||");
    }
    const double sqrt_c = std::sqrt(cfg.c);
    const Vector diff = mobius_add(-x, y, cfg);
    const double arg = sqrt_c * diff.norm();
    if (!(arg < 1.0)) {
        throw DomainError("hyp_dist: ||-x (+) y|| reached the ball boundary");
    }
    return 2.0 / sqrt_c * std::atanh(arg);
}

double euclidean_limit_dist(const VecRef& x, const VecRef& y) { return 2.0 * (x - y).norm(); }

double ball_dist(const VecRef& x, const VecRef& y, const BallConfig& cfg) {
    return cfg.c == 0.0 ? euclidean_limit_dist(x, y) : hyp_dist(x, y, cfg);
}

Vector exp_map_0(const VecRef& v, const BallConfig& cfg) {
    if (!all_finite(v)) throw DomainError("exp_map_0: input is not finite");
    if (cfg.c == 0.0) return v;
    const double norm = v.norm();
    if (norm == 0.0) return Vector::Zero(v.size());
    const double z = std::sqrt(cfg.c) * norm;
    return project_to_ball(v * (std::tanh(z) / z), cfg);
}

Vector clip_norm(const VecRef& v, double r) {
    const double norm = v.norm();
    if (norm <= r) return v;
    return v * (r / norm);
}

double cos_dist(const VecRef& a, const VecRef& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw DomainError("cos_dist: zero-norm input");
    }
    return 2.0 - 2.0 * a.dot(b) / (na * nb);
}

Vector clip_norm_vjp(const VecRef& v, double r, const VecRef& grad_out) {
    const double norm = v.norm();
    if (norm <= r) return grad_out;
    const Vector unit = v / norm;
    return (r / norm) * (grad_out - unit * unit.dot(grad_out));
}

Vector exp_map_0_vjp(const VecRef& v, const BallConfig& cfg, const VecRef& grad_out) {
    if (cfg.c == 0.0) return grad_out;
    const double s = std::sqrt(cfg.c);
    const double n = v.norm();
    if (n == 0.0) return grad_out;  // Jacobian at the origin is the identity.

    const double z = s * n;
    const double t = std::tanh(z);
    const Vector unit = v / n;
    if (t >= 1.0 - cfg.eps_ball) {
        // Output clamped to the shell: ((1 - eps) / s) * v / ||v||.
        return ((1.0 - cfg.eps_ball) / s / n) * (grad_out - unit * unit.dot(grad_out));
    }

    // f(v) = g(n) v with g(n) = tanh(s n) / (s n);
    // J^T u = g u + g'(n) (v . u) v / n = g u + g'(n) n (unit . u) unit.
    double g = 0.0;
    double dg_times_n = 0.0;
    if (z < 1e-4) {
        g = 1.0 - z * z / 3.0;
        dg_times_n = -2.0 * z * z / 3.0;
    } else {
        const double sech2 = 1.0 - t * t;
        g = t / z;
        dg_times_n = sech2 - t / z;
    }
    return g * grad_out + dg_times_n * unit.dot(grad_out) * unit;
}

PairGrad cos_dist_grad(const VecRef& a, const VecRef& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw DomainError("cos_dist: zero-norm input");
    }
    const double cosine = a.dot(b) / (na * nb);
    PairGrad out;
    out.dx = -2.0 * (b / (na * nb) - cosine * a / (na * na));
    out.dy = -2.0 * (a / (na * nb) - cosine * b / (nb * nb));
    return out;
}

PairGrad ball_dist_grad(const VecRef& x, const VecRef& y, const BallConfig& cfg) {
    PairGrad out{Vector::Zero(x.size()), Vector::Zero(y.size())};
    const Vector diff = x - y;
    const double b = diff.squaredNorm();
    if (b == 0.0) return out;

    if (cfg.c == 0.0) {
        out.dx = 2.0 * diff / std::sqrt(b);
        out.dy = -out.dx;
        return out;
    }

    // ||-x (+) y||^2 = ||x - y||^2 / A with A = 1 - 2c<x,y> + c^2 ||x||^2 ||y||^2,
    // so d = (2 / sqrt(c)) artanh(sqrt(c q)) with q = B / A.
    const double c = cfg.c;
    const double x2 = x.squaredNorm();
    const double y2 = y.squaredNorm();
    const double a = 1.0 - 2.0 * c * x.dot(y) + c * c * x2 * y2;
    const double q = b / a;
    const double u = std::sqrt(q);
    if (std::sqrt(c) * u >= 1.0 - cfg.eps_ball) return out;

    const double dd_dq = 1.0 / (u * (1.0 - c * q));
    const Vector da_dx = -2.0 * c * y + 2.0 * c * c * y2 * x;
    const Vector da_dy = -2.0 * c * x + 2.0 * c * c * x2 * y;
    out.dx = dd_dq * (2.0 * diff * a - b * da_dx) / (a * a);
    out.dy = dd_dq * (-2.0 * diff * a - b * da_dy) / (a * a);
    return out;
}

}  // namespace gyro
