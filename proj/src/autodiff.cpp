#include "kclnet/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace kclnet {

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Matrix value) {
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(value);
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.val = kclnet::add(nodes_[a].val, nodes_[b].val);
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.val = kclnet::sub(nodes_[a].val, nodes_[b].val);
    return push(std::move(n));
}

int Tape::scale(int a, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.aux = c;
    n.val = kclnet::scale(nodes_[a].val, c);
    return push(std::move(n));
}

namespace {

// y (+)= W x for column vectors; the row-major dot is the hot path.
void matvec_into(Matrix& y, const Matrix& w, const Matrix& x, bool accumulate) {
    const int rows = w.rows();
    const int cols = w.cols();
    const double* wd = w.data();
    const double* xd = x.data();
    for (int i = 0; i < rows; ++i) {
        const double* row = wd + static_cast<size_t>(i) * cols;
        double s = accumulate ? y(i, 0) : 0.0;
        for (int k = 0; k < cols; ++k) s += row[k] * xd[k];
        y(i, 0) = s;
    }
}

}  // namespace

int Tape::matmul(int a, int b) {
    Node n;
    n.op = Op::Matmul;
    n.a = a;
    n.b = b;
    const Matrix& va = nodes_[a].val;
    const Matrix& vb = nodes_[b].val;
    if (vb.cols() == 1 && va.cols() == vb.rows()) {
        n.val = Matrix(va.rows(), 1);
        matvec_into(n.val, va, vb, false);
    } else {
        n.val = kclnet::matmul(va, vb);
    }
    return push(std::move(n));
}

int Tape::affine(int w, int x, int b) {
    const Matrix& vw = nodes_[w].val;
    const Matrix& vx = nodes_[x].val;
    const Matrix& vb = nodes_[b].val;
    if (vx.cols() != 1 || vw.cols() != vx.rows() || vb.rows() != vw.rows() || vb.cols() != 1)
        throw ShapeError("affine");
    Node n;
    n.op = Op::Affine;
    n.inputs = {w, x, b};
    n.val = vb;
    matvec_into(n.val, vw, vx, true);
    return push(std::move(n));
}

int Tape::gcn_combine(int w_msg, int e, int w_init, int x0, int b) {
    const Matrix& vb = nodes_[b].val;
    Node n;
    n.op = Op::GcnCombine;
    n.inputs = {w_msg, e, w_init, x0, b};
    n.val = vb;
    matvec_into(n.val, nodes_[w_msg].val, nodes_[e].val, true);
    matvec_into(n.val, nodes_[w_init].val, nodes_[x0].val, true);
    for (size_t i = 0; i < n.val.size(); ++i)
        if (n.val.at_flat(i) < 0.0) n.val.at_flat(i) = 0.0;
    return push(std::move(n));
}

int Tape::relu(int a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.val = nodes_[a].val;
    for (size_t i = 0; i < n.val.size(); ++i)
        if (n.val.at_flat(i) < 0.0) n.val.at_flat(i) = 0.0;
    return push(std::move(n));
}

int Tape::abs(int a) {
    Node n;
    n.op = Op::Abs;
    n.a = a;
    n.val = nodes_[a].val;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.at_flat(i) = std::abs(n.val.at_flat(i));
    return push(std::move(n));
}

int Tape::hadamard(int a, int b) {
    Node n;
    n.op = Op::Hadamard;
    n.a = a;
    n.b = b;
    n.val = kclnet::hadamard(nodes_[a].val, nodes_[b].val);
    return push(std::move(n));
}

int Tape::concat_rows(int a, int b) {
    const Matrix& va = nodes_[a].val;
    const Matrix& vb = nodes_[b].val;
    if (va.cols() != 1 || vb.cols() != 1) throw ShapeError("concat_rows expects column vectors");
    Node n;
    n.op = Op::ConcatRows;
    n.a = a;
    n.b = b;
    n.val = Matrix(va.rows() + vb.rows(), 1);
    for (int i = 0; i < va.rows(); ++i) n.val(i, 0) = va(i, 0);
    for (int i = 0; i < vb.rows(); ++i) n.val(va.rows() + i, 0) = vb(i, 0);
    return push(std::move(n));
}

int Tape::weighted_sum(std::vector<int> xs, std::vector<double> coeffs, int rows, int cols) {
    if (xs.size() != coeffs.size()) throw ShapeError("weighted_sum inputs/coeffs");
    Node n;
    n.op = Op::WeightedSum;
    n.val = Matrix(rows, cols);
    for (size_t i = 0; i < xs.size(); ++i) axpy(n.val, coeffs[i], nodes_[xs[i]].val);
    n.inputs = std::move(xs);
    n.coeffs = std::move(coeffs);
    return push(std::move(n));
}

int Tape::dot(int a, int b) {
    Node n;
    n.op = Op::Dot;
    n.a = a;
    n.b = b;
    n.val = Matrix(1, 1, dot_flat(nodes_[a].val, nodes_[b].val));
    return push(std::move(n));
}

int Tape::cos_sim(int a, int b) {
    Node n;
    n.op = Op::CosSim;
    n.a = a;
    n.b = b;
    n.val = Matrix(1, 1, cosine_similarity(nodes_[a].val, nodes_[b].val));
    return push(std::move(n));
}

int Tape::log_sum_exp(std::vector<int> scalars) {
    if (scalars.empty()) throw ShapeError("log_sum_exp of nothing");
    Node n;
    n.op = Op::LogSumExp;
    double m = -1e300;
    for (int id : scalars) m = std::max(m, nodes_[id].val(0, 0));
    double s = 0.0;
    for (int id : scalars) s += std::exp(nodes_[id].val(0, 0) - m);
    n.val = Matrix(1, 1, m + std::log(s));
    n.inputs = std::move(scalars);
    return push(std::move(n));
}

int Tape::softmax_cross_entropy(int logits, int label) {
    const Matrix& z = nodes_[logits].val;
    if (z.cols() != 1) throw ShapeError("softmax_cross_entropy expects a column vector");
    if (label < 0 || label >= z.rows())
        throw GradError("LabelOutOfRange: " + std::to_string(label));
    Node n;
    n.op = Op::SoftmaxCrossEntropy;
    n.a = logits;
    n.label = label;
    double m = z(0, 0);
    for (int i = 1; i < z.rows(); ++i) m = std::max(m, z(i, 0));
    double s = 0.0;
    for (int i = 0; i < z.rows(); ++i) s += std::exp(z(i, 0) - m);
    n.val = Matrix(1, 1, m + std::log(s) - z(label, 0));
    return push(std::move(n));
}

int Tape::bce_with_logit(int logit, double target) {
    double x = nodes_[logit].val(0, 0);
    Node n;
    n.op = Op::BceWithLogit;
    n.a = logit;
    n.aux = target;
    n.val = Matrix(1, 1, std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x))));
    return push(std::move(n));
}

int Tape::square(int a) {
    Node n;
    n.op = Op::Square;
    n.a = a;
    n.val = nodes_[a].val;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.at_flat(i) *= n.val.at_flat(i);
    return push(std::move(n));
}

int Tape::sqrt(int a) {
    Node n;
    n.op = Op::Sqrt;
    n.a = a;
    n.val = nodes_[a].val;
    for (size_t i = 0; i < n.val.size(); ++i) n.val.at_flat(i) = std::sqrt(n.val.at_flat(i));
    return push(std::move(n));
}

int Tape::entry(int a, int r, int c) {
    Node n;
    n.op = Op::Entry;
    n.a = a;
    n.aux = static_cast<double>(r);
    n.label = c;
    n.val = Matrix(1, 1, nodes_[a].val(r, c));
    return push(std::move(n));
}

Matrix Tape::grad_or_zero(int id) const {
    if (nodes_[id].grad.empty())
        return Matrix(nodes_[id].val.rows(), nodes_[id].val.cols());
    return nodes_[id].grad;
}

Matrix Tape::take_grad(int id) {
    if (nodes_[id].grad.empty())
        return Matrix(nodes_[id].val.rows(), nodes_[id].val.cols());
    return std::move(nodes_[id].grad);
}

Matrix& Tape::ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Matrix(n.val.rows(), n.val.cols());
    return n.grad;
}

void Tape::clear() { nodes_.clear(); }

void Tape::backward(int root) {
    if (nodes_[root].val.size() != 1) throw GradError("backward root must be a scalar");
    for (Node& n : nodes_) n.grad = Matrix();
    ensure_grad(root)(0, 0) = 1.0;
    for (int id = root; id >= 0; --id) {
        if (nodes_[id].grad.empty()) continue;
        backprop_node(id);
        if (!all_finite(nodes_[id].grad)) throw GradError("NonFiniteGradient");
    }
}

void Tape::backprop_node(int id) {
    Node& n = nodes_[id];
    const Matrix& g = n.grad;
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add:
            axpy(ensure_grad(n.a), 1.0, g);
            axpy(ensure_grad(n.b), 1.0, g);
            break;
        case Op::Sub:
            axpy(ensure_grad(n.a), 1.0, g);
            axpy(ensure_grad(n.b), -1.0, g);
            break;
        case Op::Scale:
            axpy(ensure_grad(n.a), n.aux, g);
            break;
        case Op::Matmul: {
            const Matrix& a = nodes_[n.a].val;
            const Matrix& b = nodes_[n.b].val;
            Matrix& da = ensure_grad(n.a);
            Matrix& db = ensure_grad(n.b);
            if (b.cols() == 1) {
                for (int i = 0; i < a.rows(); ++i) {
                    double gi = g(i, 0);
                    if (gi == 0.0) continue;
                    for (int k = 0; k < a.cols(); ++k) {
                        da(i, k) += gi * b(k, 0);
                        db(k, 0) += gi * a(i, k);
                    }
                }
            } else {
                axpy(da, 1.0, kclnet::matmul(g, transpose(b)));
                axpy(db, 1.0, kclnet::matmul(transpose(a), g));
            }
            break;
        }
        case Op::Affine: {
            const Matrix& w = nodes_[n.inputs[0]].val;
            const Matrix& x = nodes_[n.inputs[1]].val;
            Matrix& dw = ensure_grad(n.inputs[0]);
            Matrix& dx = ensure_grad(n.inputs[1]);
            Matrix& db = ensure_grad(n.inputs[2]);
            for (int i = 0; i < w.rows(); ++i) {
                double gi = g(i, 0);
                db(i, 0) += gi;
                if (gi == 0.0) continue;
                for (int k = 0; k < w.cols(); ++k) {
                    dw(i, k) += gi * x(k, 0);
                    dx(k, 0) += gi * w(i, k);
                }
            }
            break;
        }
        case Op::GcnCombine: {
            const Matrix& w_msg = nodes_[n.inputs[0]].val;
            const Matrix& e = nodes_[n.inputs[1]].val;
            const Matrix& w_init = nodes_[n.inputs[2]].val;
            const Matrix& x0 = nodes_[n.inputs[3]].val;
            Matrix& d_wmsg = ensure_grad(n.inputs[0]);
            Matrix& d_e = ensure_grad(n.inputs[1]);
            Matrix& d_winit = ensure_grad(n.inputs[2]);
            Matrix& d_x0 = ensure_grad(n.inputs[3]);
            Matrix& d_b = ensure_grad(n.inputs[4]);
            for (int i = 0; i < w_msg.rows(); ++i) {
                if (n.val(i, 0) <= 0.0) continue;  // relu gate
                double gi = g(i, 0);
                if (gi == 0.0) continue;
                d_b(i, 0) += gi;
                for (int k = 0; k < w_msg.cols(); ++k) {
                    d_wmsg(i, k) += gi * e(k, 0);
                    d_e(k, 0) += gi * w_msg(i, k);
                    d_winit(i, k) += gi * x0(k, 0);
                    d_x0(k, 0) += gi * w_init(i, k);
                }
            }
            break;
        }
        case Op::Relu: {
            Matrix& da = ensure_grad(n.a);
            const Matrix& x = nodes_[n.a].val;
            for (size_t i = 0; i < da.size(); ++i)
                if (x.at_flat(i) > 0.0) da.at_flat(i) += g.at_flat(i);
            break;
        }
        case Op::Abs: {
            Matrix& da = ensure_grad(n.a);
            const Matrix& x = nodes_[n.a].val;
            for (size_t i = 0; i < da.size(); ++i) {
                if (x.at_flat(i) > 0.0)
                    da.at_flat(i) += g.at_flat(i);
                else if (x.at_flat(i) < 0.0)
                    da.at_flat(i) -= g.at_flat(i);
            }
            break;
        }
        case Op::Hadamard: {
            Matrix& da = ensure_grad(n.a);
            Matrix& db = ensure_grad(n.b);
            const Matrix& va = nodes_[n.a].val;
            const Matrix& vb = nodes_[n.b].val;
            for (size_t i = 0; i < da.size(); ++i) {
                da.at_flat(i) += g.at_flat(i) * vb.at_flat(i);
                db.at_flat(i) += g.at_flat(i) * va.at_flat(i);
            }
            break;
        }
        case Op::ConcatRows: {
            Matrix& da = ensure_grad(n.a);
            Matrix& db = ensure_grad(n.b);
            for (int i = 0; i < da.rows(); ++i) da(i, 0) += g(i, 0);
            for (int i = 0; i < db.rows(); ++i) db(i, 0) += g(da.rows() + i, 0);
            break;
        }
        case Op::WeightedSum:
            for (size_t i = 0; i < n.inputs.size(); ++i)
                axpy(ensure_grad(n.inputs[i]), n.coeffs[i], g);
            break;
        case Op::Dot: {
            double s = g(0, 0);
            axpy(ensure_grad(n.a), s, nodes_[n.b].val);
            axpy(ensure_grad(n.b), s, nodes_[n.a].val);
            break;
        }
        case Op::CosSim: {
            const Matrix& a = nodes_[n.a].val;
            const Matrix& b = nodes_[n.b].val;
            double na = norm2(a);
            double nb = norm2(b);
            if (na < 1e-12 || nb < 1e-12) break;  // degenerate value is the constant 0
            double s = n.val(0, 0);
            double gg = g(0, 0);
            Matrix& da = ensure_grad(n.a);
            Matrix& db = ensure_grad(n.b);
            for (size_t i = 0; i < a.size(); ++i) {
                da.at_flat(i) += gg * (b.at_flat(i) / (na * nb) - s * a.at_flat(i) / (na * na));
                db.at_flat(i) += gg * (a.at_flat(i) / (na * nb) - s * b.at_flat(i) / (nb * nb));
            }
            break;
        }
        case Op::LogSumExp: {
            double m = n.val(0, 0);
            double gg = g(0, 0);
            for (int id_in : n.inputs)
                ensure_grad(id_in)(0, 0) += gg * std::exp(nodes_[id_in].val(0, 0) - m);
            break;
        }
        case Op::SoftmaxCrossEntropy: {
            const Matrix& z = nodes_[n.a].val;
            double m = z(0, 0);
            for (int i = 1; i < z.rows(); ++i) m = std::max(m, z(i, 0));
            double s = 0.0;
            for (int i = 0; i < z.rows(); ++i) s += std::exp(z(i, 0) - m);
            double gg = g(0, 0);
            Matrix& da = ensure_grad(n.a);
            for (int i = 0; i < z.rows(); ++i) {
                double p = std::exp(z(i, 0) - m) / s;
                da(i, 0) += gg * (p - (i == n.label ? 1.0 : 0.0));
            }
            break;
        }
        case Op::BceWithLogit: {
            double x = nodes_[n.a].val(0, 0);
            double sig = 1.0 / (1.0 + std::exp(-x));
            ensure_grad(n.a)(0, 0) += g(0, 0) * (sig - n.aux);
            break;
        }
        case Op::Square: {
            Matrix& da = ensure_grad(n.a);
            const Matrix& x = nodes_[n.a].val;
            for (size_t i = 0; i < da.size(); ++i)
                da.at_flat(i) += 2.0 * x.at_flat(i) * g.at_flat(i);
            break;
        }
        case Op::Sqrt: {
            Matrix& da = ensure_grad(n.a);
            for (size_t i = 0; i < da.size(); ++i)
                da.at_flat(i) += 0.5 / n.val.at_flat(i) * g.at_flat(i);
            break;
        }
        case Op::Entry: {
            Matrix& da = ensure_grad(n.a);
            da(static_cast<int>(n.aux), n.label) += g(0, 0);
            break;
        }
    }
}

double grad_check(const std::function<int(Tape&, const std::vector<int>&)>& build,
                  std::vector<Matrix> params, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw GradError("grad_check eps out of range");

    auto eval = [&](const std::vector<Matrix>& p) {
        Tape tape;
        std::vector<int> ids;
        ids.reserve(p.size());
        for (const Matrix& m : p) ids.push_back(tape.leaf(m));
        int loss = build(tape, ids);
        return tape.scalar(loss);
    };

    Tape tape;
    std::vector<int> ids;
    for (const Matrix& m : params) ids.push_back(tape.leaf(m));
    int loss = build(tape, ids);
    tape.backward(loss);
    std::vector<Matrix> analytic;
    for (int id : ids) analytic.push_back(tape.grad_or_zero(id));

    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        for (size_t i = 0; i < params[pi].size(); ++i) {
            double saved = params[pi].at_flat(i);
            params[pi].at_flat(i) = saved + eps;
            double f_plus = eval(params);
            params[pi].at_flat(i) = saved - eps;
            double f_minus = eval(params);
            params[pi].at_flat(i) = saved;
            double numeric = (f_plus - f_minus) / (2.0 * eps);
            double a = analytic[pi].at_flat(i);
            if (!std::isfinite(numeric) || !std::isfinite(a)) throw GradError("NonFiniteGradient");
            worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
        }
    }
    return worst;
}

}  // namespace kclnet
