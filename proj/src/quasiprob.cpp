#include "qpt/quasiprob.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qpt {

QPDistribution qp_deletion(double delta, double eps_tail) {
    if (!(delta >= 0.0 && delta < 0.5)) {
        throw std::invalid_argument(
            "qp_deletion: delta must lie in [0, 1/2); split the channel first");
    }
    if (!(eps_tail > 0.0 && eps_tail < 1.0)) {
        throw std::invalid_argument("qp_deletion: eps_tail must lie in (0, 1)");
    }
    QPDistribution q;
    q.kind = ChannelKind::deletion;
    q.param = delta;
    q.gamma = 1.0 / (1.0 - 2.0 * delta);
    if (delta == 0.0) {
        q.weights = {1.0};
        q.tail_bound = 0.0;
        return q;
    }
    // |q_j| = (1/(1−δ))·r^j with r = δ/(1−δ); absolute tail past index J is
    // r^{J+1}/(1−2δ). Truncate at the smallest J below eps_tail.
    const double r = delta / (1.0 - delta);
    double tail = q.gamma * r; // Σ_{j>0} |q_j|
    int J = 0;
    while (tail >= eps_tail) {
        tail *= r;
        ++J;
    }
    q.tail_bound = tail;
    q.weights.resize(static_cast<std::size_t>(J) + 1);
    double w = 1.0 / (1.0 - delta);
    for (int j = 0; j <= J; ++j) {
        q.weights[static_cast<std::size_t>(j)] = w;
        w *= -r;
    }
    double sum = std::accumulate(q.weights.begin(), q.weights.end(), 0.0);
    q.weights[0] += 1.0 - sum; // additive renormalization: Σ q_j = 1 exactly
    return q;
}

QPDistribution qp_insertion(double eta) {
    if (!(eta >= 0.0 && eta < 1.0)) {
        throw std::invalid_argument("qp_insertion: eta must lie in [0, 1)");
    }
    QPDistribution q;
    q.kind = ChannelKind::insertion;
    q.param = eta;
    q.gamma = (1.0 + eta) / (1.0 - eta);
    q.weights = {1.0 / (1.0 - eta), -eta / (1.0 - eta)};
    if (eta == 0.0) q.weights = {1.0};
    q.tail_bound = 0.0;
    return q;
}

QPDistribution qp_symmetry(double sigma) {
    if (!(sigma >= 0.0 && sigma < 0.5)) {
        throw std::invalid_argument("qp_symmetry: sigma must lie in [0, 1/2)");
    }
    QPDistribution q;
    q.kind = ChannelKind::symmetry;
    q.param = sigma;
    q.gamma = 1.0 / (1.0 - 2.0 * sigma);
    q.weights = {(1.0 - sigma) / (1.0 - 2.0 * sigma), -sigma / (1.0 - 2.0 * sigma)};
    if (sigma == 0.0) q.weights = {1.0};
    q.tail_bound = 0.0;
    return q;
}

QPDistribution qp_for_stage(const ChannelSpec& spec, double eps_tail) {
    switch (spec.kind) {
    case ChannelKind::deletion:
        return qp_deletion(spec.param, eps_tail);
    case ChannelKind::insertion:
        return qp_insertion(spec.param);
    case ChannelKind::symmetry:
        return qp_symmetry(spec.param);
    }
    throw std::logic_error("unreachable channel kind");
}

SignedDraw qp_sample(const QPDistribution& q, Stream& stream) {
    switch (q.kind) {
    case ChannelKind::deletion: {
        // P[j] = |q_j|/γ = (1−r)r^j with r = δ/(1−δ): Geom((1−2δ)/(1−δ)).
        double p = (1.0 - 2.0 * q.param) / (1.0 - q.param);
        int j = static_cast<int>(stream.geometric(p));
        return {j, (j & 1) ? -q.gamma : q.gamma};
    }
    case ChannelKind::insertion: {
        bool one = stream.bernoulli(q.param / (1.0 + q.param));
        return {one ? 1 : 0, one ? -q.gamma : q.gamma};
    }
    case ChannelKind::symmetry: {
        bool one = stream.bernoulli(q.param);
        return {one ? 1 : 0, one ? -q.gamma : q.gamma};
    }
    }
    throw std::logic_error("unreachable channel kind");
}

double norm_1inf(const Matrix& a) { return a.cwiseAbs().rowwise().sum().maxCoeff(); }

bool is_column_stochastic(const Matrix& a, double tol) {
    if (a.rows() == 0 || a.cols() == 0) return false;
    if ((a.array() < -tol).any()) return false;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        if (std::abs(a.col(c).sum() - 1.0) > tol) return false;
    }
    return true;
}

namespace {

Matrix checked_inverse(const Matrix& lambda) {
    if (lambda.rows() != lambda.cols()) {
        throw std::invalid_argument("matrix channel must be square");
    }
    Eigen::FullPivLU<Matrix> lu(lambda);
    if (!lu.isInvertible()) {
        throw std::invalid_argument("channel matrix is singular; no inverse to decompose");
    }
    return lu.inverse();
}

} // namespace

double decomposition_residual(const Matrix& lambda, const std::vector<double>& weights,
                              const std::vector<Matrix>& ops) {
    if (weights.size() > ops.size()) {
        throw std::invalid_argument("more weights than operations");
    }
    Matrix diff = checked_inverse(lambda);
    for (std::size_t j = 0; j < weights.size(); ++j) {
        if (ops[j].rows() != diff.rows() || ops[j].cols() != diff.cols()) {
            throw std::invalid_argument("operation matrix dimension mismatch");
        }
        diff -= weights[j] * ops[j];
    }
    return norm_1inf(diff);
}

QPSolveResult qp_solve(const Matrix& lambda, const std::vector<Matrix>& ops) {
    if (ops.empty()) throw std::invalid_argument("qp_solve: empty operation set");
    const Matrix target = checked_inverse(lambda);
    const Eigen::Index dim = target.rows();
    if (dim > 256) throw std::invalid_argument("qp_solve: state space larger than 256");
    const Eigen::Index m = dim * dim;
    const std::size_t n = ops.size();

    // Vectorize: minimize ‖A w − t‖₂ subject to Σ w = 1. Substitute
    // w = e₀ + B z with B's columns (e_j − e₀), j ≥ 1, and solve the reduced
    // unconstrained least squares by column-pivoted QR (rank-deficiency safe).
    Eigen::MatrixXd a(m, static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
        if (ops[j].rows() != dim || ops[j].cols() != dim) {
            throw std::invalid_argument("operation matrix dimension mismatch");
        }
        a.col(static_cast<Eigen::Index>(j)) =
            Eigen::Map<const Eigen::VectorXd>(ops[j].data(), m);
    }
    Eigen::VectorXd t = Eigen::Map<const Eigen::VectorXd>(target.data(), m);

    Eigen::VectorXd w(static_cast<Eigen::Index>(n));
    if (n == 1) {
        w[0] = 1.0;
    } else {
        Eigen::MatrixXd reduced(m, static_cast<Eigen::Index>(n - 1));
        for (std::size_t j = 1; j < n; ++j) {
            reduced.col(static_cast<Eigen::Index>(j - 1)) =
                a.col(static_cast<Eigen::Index>(j)) - a.col(0);
        }
        Eigen::VectorXd rhs = t - a.col(0);
        Eigen::VectorXd z = reduced.colPivHouseholderQr().solve(rhs);
        w[0] = 1.0 - z.sum();
        w.tail(static_cast<Eigen::Index>(n - 1)) = z;
    }

    QPSolveResult result;
    result.weights.assign(w.data(), w.data() + w.size());
    result.residual = decomposition_residual(lambda, result.weights, ops);
    return result;
}

} // namespace qpt
