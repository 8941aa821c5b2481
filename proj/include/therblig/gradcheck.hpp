#pragma once

// Finite-difference gradient checks with a quad-precision oracle.
// Requires linking libquadmath.

#include "losses.hpp"

#include <boost/multiprecision/float128.hpp>

namespace therblig {

using quad = boost::multiprecision::float128;

/// Max relative error of the double-precision analytic gradient against
/// central differences evaluated in 113-bit arithmetic.
inline double finite_diff_check_quad(const LossInstance<double>& inst, double h = 1e-5)
{
    return finite_diff_check<quad, double>(inst, h);
}

} // namespace therblig
