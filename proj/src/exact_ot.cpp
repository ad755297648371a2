#include "coot/exact_ot.hpp"

#include <cmath>
#include <vector>

namespace coot {

namespace {

constexpr double kPivotEps = 1e-11;

// Dense tableau simplex, Bland's rule (anti-cycling). Minimizes c'x subject
// to Ax = b, x >= 0 with b >= 0. The transport polytope is nonempty and
// bounded, so phase 2 always terminates at an optimum.
class Simplex {
public:
    Simplex(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& c)
        : m_(A.rows()), n_(A.cols()), tableau_(A.rows() + 1, A.cols() + A.rows() + 1) {
        tableau_.setZero();
        tableau_.block(0, 0, m_, n_) = A;
        tableau_.block(0, n_, m_, m_) = Eigen::MatrixXd::Identity(m_, m_);
        tableau_.col(n_ + m_).head(m_) = b;
        basis_.resize(static_cast<size_t>(m_));
        for (Eigen::Index i = 0; i < m_; ++i) basis_[static_cast<size_t>(i)] = n_ + i;

        run_phase1();
        run_phase2(c);
    }

    Eigen::VectorXd solution() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (basis_[static_cast<size_t>(i)] < n_) {
                x(basis_[static_cast<size_t>(i)]) = tableau_(i, n_ + m_);
            }
        }
        return x;
    }

private:
    void pivot(Eigen::Index row, Eigen::Index col) {
        tableau_.row(row) /= tableau_(row, col);
        for (Eigen::Index i = 0; i < tableau_.rows(); ++i) {
            if (i != row && std::abs(tableau_(i, col)) > 0.0) {
                tableau_.row(i) -= tableau_(i, col) * tableau_.row(row);
            }
        }
        basis_[static_cast<size_t>(row)] = col;
    }

    // Bland: entering = lowest-index column with negative reduced cost;
    // leaving = ratio test, ties broken by lowest basis index.
    bool iterate(Eigen::Index ncols) {
        Eigen::Index enter = -1;
        for (Eigen::Index j = 0; j < ncols; ++j) {
            if (tableau_(m_, j) < -kPivotEps) {
                enter = j;
                break;
            }
        }
        if (enter < 0) return false;

        Eigen::Index leave = -1;
        double best_ratio = 0.0;
        for (Eigen::Index i = 0; i < m_; ++i) {
            const double a = tableau_(i, enter);
            if (a > kPivotEps) {
                const double ratio = tableau_(i, n_ + m_) / a;
                if (leave < 0 || ratio < best_ratio - kPivotEps ||
                    (std::abs(ratio - best_ratio) <= kPivotEps &&
                     basis_[static_cast<size_t>(i)] < basis_[static_cast<size_t>(leave)])) {
                    leave = i;
                    best_ratio = ratio;
                }
            }
        }
        if (leave < 0) {
            throw Error(ErrorKind::Internal, "exact_ot_oracle: unbounded direction in bounded polytope");
        }
        pivot(leave, enter);
        return true;
    }

    void run_phase1() {
        // Objective: sum of artificials. Canonicalize by subtracting the
        // constraint rows (artificials start basic).
        tableau_.row(m_).setZero();
        for (Eigen::Index i = 0; i < m_; ++i) tableau_(m_, n_ + i) = 1.0;
        for (Eigen::Index i = 0; i < m_; ++i) tableau_.row(m_) -= tableau_.row(i);

        while (iterate(n_ + m_)) {
        }
        if (tableau_(m_, n_ + m_) < -1e-8) {
            throw Error(ErrorKind::Numeric, "exact_ot_oracle: infeasible marginals");
        }
        // Drive zero-level artificials out of the basis where possible;
        // rows with no original-column support are redundant constraints.
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (basis_[static_cast<size_t>(i)] >= n_) {
                for (Eigen::Index j = 0; j < n_; ++j) {
                    if (std::abs(tableau_(i, j)) > kPivotEps) {
                        pivot(i, j);
                        break;
                    }
                }
            }
        }
    }

    void run_phase2(const Eigen::VectorXd& c) {
        tableau_.row(m_).setZero();
        tableau_.row(m_).head(n_) = c;
        for (Eigen::Index i = 0; i < m_; ++i) {
            const Eigen::Index b = basis_[static_cast<size_t>(i)];
            if (b < n_) tableau_.row(m_) -= c(b) * tableau_.row(i);
        }
        while (iterate(n_)) { // artificials never re-enter
        }
    }

    Eigen::Index m_;
    Eigen::Index n_;
    Eigen::MatrixXd tableau_;
    std::vector<Eigen::Index> basis_;
};

} // namespace

ExactPlan exact_ot_oracle(const CostMatrix& C, const Measure& mu, const Measure& nu) {
    const Eigen::Index ns = C.rows();
    const Eigen::Index nt = C.cols();
    if (ns != mu.size() || nt != nu.size()) {
        throw Error(ErrorKind::Config, "exact_ot_oracle: shape mismatch");
    }
    if (ns > 8 || nt > 8) {
        throw Error(ErrorKind::Config, "exact_ot_oracle: supports larger than 8 are beyond oracle scale");
    }

    // Variables x_ij flattened row-major; constraints: row sums then column sums.
    const Eigen::Index nvars = ns * nt;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ns + nt, nvars);
    Eigen::VectorXd b(ns + nt);
    Eigen::VectorXd c(nvars);
    for (Eigen::Index i = 0; i < ns; ++i) {
        for (Eigen::Index j = 0; j < nt; ++j) {
            A(i, i * nt + j) = 1.0;
            A(ns + j, i * nt + j) = 1.0;
            c(i * nt + j) = C.values(i, j);
        }
    }
    b.head(ns) = mu.weights;
    b.tail(nt) = nu.weights;

    Simplex lp(A, b, c);
    const Eigen::VectorXd x = lp.solution();

    ExactPlan out;
    out.coupling.resize(ns, nt);
    for (Eigen::Index i = 0; i < ns; ++i) {
        for (Eigen::Index j = 0; j < nt; ++j) {
            out.coupling(i, j) = std::max(0.0, x(i * nt + j));
        }
    }
    out.cost = c.dot(x);
    return out;
}

} // namespace coot
