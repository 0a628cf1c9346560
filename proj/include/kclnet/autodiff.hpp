#pragma once

#include <functional>
#include <vector>

#include "kclnet/tensor.hpp"

namespace kclnet {

struct GradError : std::runtime_error {
    explicit GradError(const std::string& msg) : std::runtime_error(msg) {}
};

// Append-only computation tape. Nodes are created in evaluation order, so
// walking the tape backwards is a reverse topological sweep that visits each
// node exactly once.
class Tape {
public:
    enum class Op {
        Leaf,
        Add,
        Sub,
        Scale,
        Matmul,
        Affine,      // w x + b
        GcnCombine,  // relu(w_msg e + w_init x0 + b), fused hot path
        Relu,
        Abs,
        Hadamard,
        ConcatRows,
        WeightedSum,
        Dot,
        CosSim,
        LogSumExp,
        SoftmaxCrossEntropy,
        BceWithLogit,
        Square,
        Sqrt,
        Entry,
    };

    int leaf(Matrix value);

    int add(int a, int b);
    int sub(int a, int b);
    int scale(int a, double c);
    int matmul(int a, int b);
    int affine(int w, int x, int b);
    int gcn_combine(int w_msg, int e, int w_init, int x0, int b);
    int relu(int a);
    int abs(int a);
    int hadamard(int a, int b);
    int concat_rows(int a, int b);
    // sum_i coeffs[i] * xs[i]; empty input yields zeros of the given shape.
    int weighted_sum(std::vector<int> xs, std::vector<double> coeffs, int rows, int cols);
    int dot(int a, int b);
    int cos_sim(int a, int b);
    int log_sum_exp(std::vector<int> scalars);
    int softmax_cross_entropy(int logits, int label);
    int bce_with_logit(int logit, double target);
    int square(int a);
    int sqrt(int a);
    int entry(int a, int r, int c);

    const Matrix& value(int id) const { return nodes_[id].val; }
    double scalar(int id) const { return nodes_[id].val(0, 0); }
    // Empty matrix when no gradient reached the node.
    const Matrix& grad(int id) const { return nodes_[id].grad; }
    Matrix grad_or_zero(int id) const;
    // Moves the gradient out (zeros-shaped if none reached the node).
    Matrix take_grad(int id);

    void backward(int root);
    void clear();
    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        std::vector<int> inputs;
        std::vector<double> coeffs;
        double aux = 0.0;
        int label = -1;
        Matrix val;
        Matrix grad;
    };

    int push(Node n);
    Matrix& ensure_grad(int id);
    void backprop_node(int id);

    std::vector<Node> nodes_;
};

// Max over parameter entries of |analytic - numeric| / max(1, |numeric|),
// with numeric gradients from central differences at step eps. The builder
// must construct the scalar loss on the given tape from leaves bound to the
// supplied parameter values (bound in order).
double grad_check(const std::function<int(Tape&, const std::vector<int>&)>& build,
                  std::vector<Matrix> params, double eps);

}  // namespace kclnet
