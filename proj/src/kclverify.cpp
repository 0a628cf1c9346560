#include "kclnet/kclverify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "json.hpp"
#include "kclnet/kclloss.hpp"

namespace kclnet {

Matrix difference_matrix(const std::vector<Matrix>& I, const std::vector<Matrix>& Iprime) {
    if (I.size() != Iprime.size())
        throw VerifyError("DimensionError", "vector families differ in length");
    const int n = static_cast<int>(I.size());
    if (n == 0) throw VerifyError("DimensionError", "empty vector families");
    const int d = I[0].rows();
    if (n >= d)
        throw VerifyError("DimensionError",
                          "need n < d, got n=" + std::to_string(n) + " d=" + std::to_string(d));
    Matrix a(d, n);
    for (int i = 0; i < n; ++i) {
        if (I[i].rows() != d || I[i].cols() != 1 || Iprime[i].rows() != d || Iprime[i].cols() != 1)
            throw VerifyError("DimensionError", "vector length mismatch");
        for (int r = 0; r < d; ++r) a(r, i) = I[i](r, 0) - Iprime[i](r, 0);
    }
    return a;
}

KclWitness construct_phi(const Matrix& a) {
    KclWitness wit;
    wit.frobenius = frobenius_norm(a);
    wit.sigma_min = smallest_singular_value(a);
    std::optional<Matrix> w = null_space_vector(a);
    if (!w) {
        throw VerifyError("NoWitness",
                          "null space solver found full row rank (d=" + std::to_string(a.rows()) +
                              ", n=" + std::to_string(a.cols()) +
                              ", sigma_min=" + std::to_string(wit.sigma_min) +
                              ", frobenius=" + std::to_string(wit.frobenius) + ")");
    }
    wit.w = std::move(*w);
    for (int i = 0; i < a.cols(); ++i) {
        double r = 0.0;
        for (int row = 0; row < a.rows(); ++row) r += wit.w(row, 0) * a(row, i);
        wit.residuals.push_back(std::abs(r));
        wit.residual_max = std::max(wit.residual_max, std::abs(r));
    }
    return wit;
}

EpsilonReport epsilon_bound_report(const std::vector<Matrix>& I,
                                   const std::vector<Matrix>& Iprime) {
    for (const auto& fam : {std::cref(I), std::cref(Iprime)})
        for (const Matrix& v : fam.get())
            if (std::abs(norm2(v) - 1.0) > 1e-9)
                throw VerifyError("NotNormalized", "inputs must be unit vectors");

    const int n = static_cast<int>(I.size());
    EpsilonReport rep;
    for (int i = 0; i < n; ++i)
        rep.epsilon = std::max(rep.epsilon, 1.0 - dot_flat(I[i], Iprime[i]));
    rep.epsilon = std::max(rep.epsilon, 0.0);

    Matrix a = difference_matrix(I, Iprime);
    rep.frobenius = frobenius_norm(a);
    rep.sigma_min = smallest_singular_value(a);
    rep.bound = std::sqrt(2.0 * n * rep.epsilon);
    if (rep.frobenius > rep.bound + 1e-12)
        throw VerifyError("BoundViolated", "||A||_F exceeds sqrt(2 n eps)");
    if (rep.sigma_min > rep.frobenius + 1e-12)
        throw VerifyError("BoundViolated", "sigma_min exceeds ||A||_F");
    return rep;
}

VerifyReport verify_trained_model(const AgnnConfig& cfg, const AgnnParams& params,
                                  const Circuit& circuit, const std::string& name) {
    CompiledCircuit cc = compile_circuit(circuit, name);

    Tape tape;
    BoundAgnn bound = bind_agnn(tape, params);
    std::vector<int> nodes = forward_async(tape, bound, cc.dag, cc.depths, cc.features);
    std::vector<DepthCurrent> currents = depth_current_embeddings(tape, nodes, cc.depths);

    const int pairs = static_cast<int>(currents.size()) / 2;
    if (pairs < 1) throw VerifyError("DimensionError", "need at least two depth layers");
    if (pairs >= cfg.hidden_size)
        throw VerifyError("TooManyPairs", "depth pairs must stay below hidden size");

    std::vector<Matrix> I, Iprime;
    for (int i = 0; i < pairs; ++i) {
        I.push_back(tape.value(currents[2 * i].var));
        Iprime.push_back(tape.value(currents[2 * i + 1].var));
    }

    VerifyReport rep;
    rep.circuit = cc.name;
    rep.n = pairs;
    rep.d = cfg.hidden_size;

    Matrix a = difference_matrix(I, Iprime);
    KclWitness wit = construct_phi(a);
    rep.residual_max = wit.residual_max;
    rep.frobenius = wit.frobenius;
    rep.sigma_min = wit.sigma_min;

    // Epsilon of the normalized sums; a degenerate (near-zero) sum counts as
    // maximally misaligned, matching the cosine convention.
    double eps = 0.0;
    for (int i = 0; i < pairs; ++i)
        eps = std::max(eps, 1.0 - cosine_similarity(I[i], Iprime[i]));
    rep.epsilon = eps;
    rep.bound = std::sqrt(2.0 * pairs * eps);

    double tol = 1e-9 * std::max(1.0, rep.frobenius);
    rep.pass = rep.residual_max <= tol && std::abs(norm2(wit.w) - 1.0) <= 1e-12;
    return rep;
}

std::string verify_report_json(const VerifyReport& r) {
    nlohmann::ordered_json j;
    j["circuit"] = r.circuit;
    j["n"] = r.n;
    j["d"] = r.d;
    j["residual_max"] = r.residual_max;
    j["epsilon"] = r.epsilon;
    j["frobenius"] = r.frobenius;
    j["bound"] = r.bound;
    j["sigma_min"] = r.sigma_min;
    j["pass"] = r.pass;
    return j.dump(2) + "\n";
}

}  // namespace kclnet
