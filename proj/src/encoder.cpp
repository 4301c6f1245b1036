#include "gyro/encoder.hpp"

#include <cmath>

#include <Eigen/QR>

namespace gyro {

void EncoderShape::validate() const {
    if (input_dim < 1) throw InvalidArgument("model.input_dim", "must be >= 1");
    if (hidden < 1) throw InvalidArgument("model.hidden", "must be >= 1");
    if (embed < 1) throw InvalidArgument("model.embed", "must be >= 1");
    if (out < 1) throw InvalidArgument("model.out", "must be >= 1");
}

EncoderParams::EncoderParams(const EncoderShape& s)
    : shape(s),
      w1(Matrix::Zero(s.hidden, s.input_dim)),
      b1(Vector::Zero(s.hidden)),
      w2(Matrix::Zero(s.embed, s.hidden)),
      b2(Vector::Zero(s.embed)),
      head_e(Matrix::Zero(s.out, s.embed)),
      bias_e(Vector::Zero(s.out)),
      head_h(s.shared_heads ? Matrix() : Matrix::Zero(s.out, s.embed)),
      bias_h(s.shared_heads ? Vector() : Vector::Zero(s.out)) {}

namespace {

// Visits every parameter block in flattening order.
template <typename Params, typename F>
void for_each_block(Params& p, F&& f) {
    f(p.w1.data(), p.w1.size());
    f(p.b1.data(), p.b1.size());
    f(p.w2.data(), p.w2.size());
    f(p.b2.data(), p.b2.size());
    f(p.head_e.data(), p.head_e.size());
    f(p.bias_e.data(), p.bias_e.size());
    f(p.head_h.data(), p.head_h.size());
    f(p.bias_h.data(), p.bias_h.size());
}

Matrix orthonormal_rows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const bool tall = rows >= cols;
    const Eigen::Index n = tall ? rows : cols;
    const Eigen::Index k = tall ? cols : rows;
    Eigen::MatrixXd g(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
    // Sign fix so the factorization is unique.
    const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < k; ++j) {
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    return tall ? Matrix(q) : Matrix(q.transpose());
}

void fill_gaussian(Matrix& m, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
}

}  // namespace

Eigen::Index EncoderParams::parameter_count() const {
    Eigen::Index n = 0;
    for_each_block(*this, [&](const double*, Eigen::Index size) { n += size; });
    return n;
}

Vector EncoderParams::flatten() const {
    Vector out(parameter_count());
    Eigen::Index offset = 0;
    for_each_block(*this, [&](const double* data, Eigen::Index size) {
        out.segment(offset, size) = Eigen::Map<const Vector>(data, size);
        offset += size;
    });
    return out;
}

void EncoderParams::assign(const Vector& flat) {
    if (flat.size() != parameter_count()) throw InvalidArgument("model.params", "flat parameter size mismatch");
    Eigen::Index offset = 0;
    for_each_block(*this, [&](double* data, Eigen::Index size) {
        Eigen::Map<Vector>(data, size) = flat.segment(offset, size);
        offset += size;
    });
}

void EncoderParams::validate() const {
    shape.validate();
    const EncoderParams ref(shape);
    auto same = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
    if (!same(w1, ref.w1) || !same(b1, ref.b1) || !same(w2, ref.w2) || !same(b2, ref.b2) ||
        !same(head_e, ref.head_e) || !same(bias_e, ref.bias_e) || !same(head_h, ref.head_h) ||
        !same(bias_h, ref.bias_h)) {
        throw InvalidArgument("model.params", "parameter shapes do not match the declared shape");
    }
    if (!flatten().allFinite()) throw InvalidArgument("model.params", "parameters contain non-finite values");
}

EncoderParams init_encoder(const EncoderShape& shape, std::mt19937_64& rng) {
    shape.validate();
    EncoderParams p(shape);
    fill_gaussian(p.w1, std::sqrt(2.0 / static_cast<double>(shape.input_dim + shape.hidden)), rng);
    fill_gaussian(p.w2, std::sqrt(2.0 / static_cast<double>(shape.hidden + shape.embed)), rng);
    p.head_e = orthonormal_rows(shape.out, shape.embed, rng);
    if (!shape.shared_heads) p.head_h = orthonormal_rows(shape.out, shape.embed, rng);
    return p;
}

EncoderForward encode(const EncoderParams& params, const Matrix& x) {
    if (x.cols() != params.shape.input_dim) {
        throw InvalidArgument("features", "input dimension " + std::to_string(x.cols()) + " does not match model (" +
                                              std::to_string(params.shape.input_dim) + ")");
    }
    if (!x.allFinite()) throw InvalidArgument("features", "non-finite input");

    EncoderForward f;
    f.hidden = ((x * params.w1.transpose()).rowwise() + params.b1.transpose()).array().tanh().matrix();
    Matrix t = (f.hidden * params.w2.transpose()).rowwise() + params.b2.transpose();
    f.norms = t.rowwise().norm();
    f.unit = Matrix::Zero(t.rows(), t.cols());
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        if (f.norms(i) < kNormGuard) {
            f.unit(i, 0) = 1.0;
        } else {
            f.unit.row(i) = t.row(i) / f.norms(i);
        }
    }
    f.ze = (f.unit * params.head_e.transpose()).rowwise() + params.bias_e.transpose();
    if (params.shape.shared_heads) {
        f.zh_pre = f.ze;
    } else {
        f.zh_pre = (f.unit * params.head_h.transpose()).rowwise() + params.bias_h.transpose();
    }
    if (!f.ze.allFinite() || !f.zh_pre.allFinite()) throw NumericError("encoder produced non-finite outputs");
    return f;
}

Vector encoder_backward(const EncoderParams& params, const Matrix& x, const EncoderForward& fwd,
                        const Matrix& grad_e, const Matrix& grad_h) {
    const Eigen::Index k = x.rows();
    const Matrix ge = grad_e.size() ? grad_e : Matrix::Zero(k, params.shape.out);
    const Matrix gh = grad_h.size() ? grad_h : Matrix::Zero(k, params.shape.out);

    EncoderParams g(params.shape);
    Matrix gu;
    if (params.shape.shared_heads) {
        const Matrix gz = ge + gh;
        g.head_e = gz.transpose() * fwd.unit;
        g.bias_e = gz.colwise().sum().transpose();
        gu = gz * params.head_e;
    } else {
        g.head_e = ge.transpose() * fwd.unit;
        g.bias_e = ge.colwise().sum().transpose();
        g.head_h = gh.transpose() * fwd.unit;
        g.bias_h = gh.colwise().sum().transpose();
        gu = ge * params.head_e + gh * params.head_h;
    }

    Matrix gt = Matrix::Zero(k, params.shape.embed);
    for (Eigen::Index i = 0; i < k; ++i) {
        if (fwd.norms(i) < kNormGuard) continue;  // the fallback is constant
        const double radial = fwd.unit.row(i).dot(gu.row(i));
        gt.row(i) = (gu.row(i) - radial * fwd.unit.row(i)) / fwd.norms(i);
    }
    g.w2 = gt.transpose() * fwd.hidden;
    g.b2 = gt.colwise().sum().transpose();
    const Matrix ga = ((gt * params.w2).array() * (1.0 - fwd.hidden.array().square())).matrix();
    g.w1 = ga.transpose() * x;
    g.b1 = ga.colwise().sum().transpose();
    return g.flatten();
}

}  // namespace gyro
