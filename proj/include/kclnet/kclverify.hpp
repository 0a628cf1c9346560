#pragma once

#include <string>
#include <vector>

#include "kclnet/agnn.hpp"
#include "kclnet/tensor.hpp"

namespace kclnet {

struct VerifyError : std::runtime_error {
    VerifyError(std::string error_code, const std::string& msg)
        : std::runtime_error(error_code + ": " + msg), code(std::move(error_code)) {}
    std::string code;  // DimensionError | NoWitness | NotNormalized | TooManyPairs
};

struct KclWitness {
    Matrix w;                       // unit vector, d x 1
    double c = 0.0;
    std::vector<double> residuals;  // |w . v_i| per pair
    double residual_max = 0.0;
    double frobenius = 0.0;
    double sigma_min = 0.0;
};

// Column i = I[i] - Iprime[i]; requires n < d.
Matrix difference_matrix(const std::vector<Matrix>& I, const std::vector<Matrix>& Iprime);

KclWitness construct_phi(const Matrix& a);

struct EpsilonReport {
    double epsilon = 0.0;
    double frobenius = 0.0;
    double bound = 0.0;  // sqrt(2 n epsilon)
    double sigma_min = 0.0;
};

// Inputs must be unit vectors (tolerance 1e-9). Checks the chain
// sigma_min <= ||A||_F <= sqrt(2 n epsilon).
EpsilonReport epsilon_bound_report(const std::vector<Matrix>& I, const std::vector<Matrix>& Iprime);

struct VerifyReport {
    std::string circuit;
    int n = 0;
    int d = 0;
    double residual_max = 0.0;
    double epsilon = 0.0;
    double frobenius = 0.0;
    double bound = 0.0;
    double sigma_min = 0.0;
    bool pass = false;
};

// Runs the encoder, pairs consecutive non-empty depths into two disjoint
// families, builds the witness, and reports epsilon of the normalized sums.
VerifyReport verify_trained_model(const AgnnConfig& cfg, const AgnnParams& params,
                                  const Circuit& circuit, const std::string& name = "");

std::string verify_report_json(const VerifyReport& r);

}  // namespace kclnet
