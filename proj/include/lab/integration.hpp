#pragma once

#include <vector>

#include "lab/ladlag_path.hpp"
#include "lab/timebase.hpp"

namespace lab {

/// Predictable finite-variation integrand split into a continuous part
/// (piecewise linear between nodes, no jumps at nodes), left jumps and
/// right jumps at nodes. The total is
///   phi_t = phi^c_t + sum_{0<u<=t} dphi_u + sum_{0<=u<t} d+phi_u.
class FVIntegrand {
  public:
    FVIntegrand(TimeGridPtr grid, std::vector<double> continuous_nodes, std::vector<double> left_jumps,
                std::vector<double> right_jumps);

    static FVIntegrand constant(TimeGridPtr grid, double c);
    // single left jump: phi = size * 1_{[s,1]}
    static FVIntegrand left_indicator(TimeGridPtr grid, std::size_t node, double size = 1.0);
    // single right jump: phi = size * 1_{(s,1]}
    static FVIntegrand right_indicator(TimeGridPtr grid, std::size_t node, double size = 1.0);

    const TimeGridPtr& grid() const { return grid_; }
    std::size_t nodes() const { return continuous_.size(); }
    double continuous_at(std::size_t k) const { return continuous_[k]; }
    double left_jump(std::size_t k) const { return left_jumps_[k]; }
    double right_jump(std::size_t k) const { return right_jumps_[k]; }

    /// Value of the reconstructed total at node k.
    double value_at_node(std::size_t k) const;
    /// Right limit at node k (= value just inside the interval to the right).
    double right_limit(std::size_t k) const;
    /// Left limit at node k (0-convention at k = 0).
    double left_limit(std::size_t k) const;

    double total_variation() const;

  private:
    TimeGridPtr grid_;
    std::vector<double> continuous_;   // phi^c at nodes, interpolated linearly
    std::vector<double> left_jumps_;   // left_jumps_[0] must be 0
    std::vector<double> right_jumps_;  // right_jumps_[K] must be 0
};

/// Exact decomposition of a piecewise-constant path: every change is a
/// jump, so the continuous part is the constant phi_0. Integrands with a
/// genuinely sloped continuous part are built with the FVIntegrand
/// constructor from node samples of phi^c plus jump lists.
FVIntegrand split_integrand(const LadlagPath& phi);

/// int_0^t X dphi = int X dphi^c + sum_{0<u<=t} X_{u-} dphi_u
///                + sum_{0<=u<t} X_u d+phi_u      (t is a node index).
double integrate_X_dphi(const LadlagPath& X, const FVIntegrand& phi, std::size_t t_node);

/// int_0^t phi dX = int phi^c dX + sum_{0<u<=t} dphi_u (X_t - X_{u-})
///                + sum_{0<=u<t} d+phi_u (X_t - X_u).
double integrate_phi_dX(const FVIntegrand& phi, const LadlagPath& X, std::size_t t_node);

/// phi_t X_t - phi_0 X_0 - int phi dX - int X dphi; identically zero up
/// to rounding for these conventions.
double integration_by_parts_residual(const FVIntegrand& phi, const LadlagPath& X, std::size_t t_node);

/// Limit-integral value per scenario:
///   int_0^tau phi^c dX1 + sum_{0<u<=tau} dphi_u (X1_tau - X0_u)
///                       + sum_{0<=u<tau} d+phi_u (X1_tau - X1_u),
/// the object converging integral sequences are tested against.
std::vector<double> limit_integral_formula(const FVIntegrand& phi, const PathBundle& X1,
                                           const PathBundle& X0, const GridStoppingTime& tau);

}  // namespace lab
