#ifndef COOT_EXACT_OT_HPP
#define COOT_EXACT_OT_HPP

#include "coot/ot.hpp"

namespace coot {

struct ExactPlan {
    Eigen::MatrixXd coupling;
    double cost = 0.0;
};

/// Exact optimum of the unregularized transport problem, solved as a small
/// linear program (two-phase simplex, Bland's rule). Test oracle: shares no
/// code with the Sinkhorn solver and is limited to supports of size <= 8.
ExactPlan exact_ot_oracle(const CostMatrix& C, const Measure& mu, const Measure& nu);

} // namespace coot

#endif
