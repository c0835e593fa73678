#include "lab/integration.hpp"

#include <cmath>

namespace lab {

FVIntegrand::FVIntegrand(TimeGridPtr grid, std::vector<double> continuous_nodes,
                         std::vector<double> left_jumps, std::vector<double> right_jumps)
    : grid_(std::move(grid)),
      continuous_(std::move(continuous_nodes)),
      left_jumps_(std::move(left_jumps)),
      right_jumps_(std::move(right_jumps)) {
    if (!grid_) throw LabError("FVIntegrand: null grid");
    const std::size_t n = grid_->size();
    if (continuous_.size() != n || left_jumps_.size() != n || right_jumps_.size() != n)
        throw LabError("FVIntegrand: component sizes must match the grid");
    if (left_jumps_[0] != 0.0) throw LabError("FVIntegrand: no left jump at time 0");
    if (right_jumps_[n - 1] != 0.0) throw LabError("FVIntegrand: no right jump at time 1");
}

FVIntegrand FVIntegrand::constant(TimeGridPtr grid, double c) {
    const std::size_t n = grid->size();
    return FVIntegrand(std::move(grid), std::vector<double>(n, c), std::vector<double>(n, 0.0),
                       std::vector<double>(n, 0.0));
}

FVIntegrand FVIntegrand::left_indicator(TimeGridPtr grid, std::size_t node, double size) {
    const std::size_t n = grid->size();
    std::vector<double> lj(n, 0.0);
    if (node == 0 || node >= n) throw LabError("FVIntegrand::left_indicator: bad node");
    lj[node] = size;
    return FVIntegrand(std::move(grid), std::vector<double>(n, 0.0), std::move(lj),
                       std::vector<double>(n, 0.0));
}

FVIntegrand FVIntegrand::right_indicator(TimeGridPtr grid, std::size_t node, double size) {
    const std::size_t n = grid->size();
    std::vector<double> rj(n, 0.0);
    if (node + 1 >= n) throw LabError("FVIntegrand::right_indicator: bad node");
    rj[node] = size;
    return FVIntegrand(std::move(grid), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                       std::move(rj));
}

double FVIntegrand::value_at_node(std::size_t k) const {
    double v = continuous_[k];
    for (std::size_t j = 1; j <= k; ++j) v += left_jumps_[j];
    for (std::size_t j = 0; j < k; ++j) v += right_jumps_[j];
    return v;
}

double FVIntegrand::right_limit(std::size_t k) const {
    if (k + 1 == continuous_.size()) return value_at_node(k);
    return value_at_node(k) + right_jumps_[k];
}

double FVIntegrand::left_limit(std::size_t k) const {
    if (k == 0) return 0.0;
    return value_at_node(k) - left_jumps_[k];
}

double FVIntegrand::total_variation() const {
    double tv = 0.0;
    for (std::size_t k = 0; k + 1 < continuous_.size(); ++k)
        tv += std::abs(continuous_[k + 1] - continuous_[k]);
    for (double j : left_jumps_) tv += std::abs(j);
    for (double j : right_jumps_) tv += std::abs(j);
    return tv;
}

FVIntegrand split_integrand(const LadlagPath& phi) {
    const std::size_t n = phi.nodes();
    std::vector<double> cont(n, phi.node_value(0));
    std::vector<double> lj(n, 0.0), rj(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const auto [dl, dr] = phi.jumps(k);
        if (k > 0) lj[k] = dl;
        if (k + 1 < n) rj[k] = dr;
    }
    return FVIntegrand(phi.grid(), std::move(cont), std::move(lj), std::move(rj));
}

double integrate_X_dphi(const LadlagPath& X, const FVIntegrand& phi, std::size_t t_node) {
    require_same_grid(X.grid(), phi.grid(), "integrate_X_dphi");
    if (t_node >= X.nodes()) throw LabError("integrate_X_dphi: node out of range");
    double acc = 0.0;
    // continuous part: X is interval-constant, phi^c node-linear
    for (std::size_t k = 0; k < t_node; ++k)
        acc += X.interval_value(k) * (phi.continuous_at(k + 1) - phi.continuous_at(k));
    for (std::size_t u = 1; u <= t_node; ++u) acc += X.left_limit(u) * phi.left_jump(u);
    for (std::size_t u = 0; u < t_node; ++u) acc += X.node_value(u) * phi.right_jump(u);
    return acc;
}

double integrate_phi_dX(const FVIntegrand& phi, const LadlagPath& X, std::size_t t_node) {
    require_same_grid(X.grid(), phi.grid(), "integrate_phi_dX");
    if (t_node >= X.nodes()) throw LabError("integrate_phi_dX: node out of range");
    double acc = 0.0;
    // int phi^c dX against the double-index increments of X; phi^c is
    // continuous so left/right limits coincide with the node value
    for (std::size_t u = 1; u <= t_node; ++u) {
        acc += phi.continuous_at(u) * (X.node_value(u) - X.left_limit(u));
    }
    for (std::size_t u = 0; u < t_node; ++u) {
        acc += phi.continuous_at(u) * (X.right_limit(u) - X.node_value(u));
    }
    const double xt = X.node_value(t_node);
    for (std::size_t u = 1; u <= t_node; ++u) acc += phi.left_jump(u) * (xt - X.left_limit(u));
    for (std::size_t u = 0; u < t_node; ++u) acc += phi.right_jump(u) * (xt - X.node_value(u));
    return acc;
}

double integration_by_parts_residual(const FVIntegrand& phi, const LadlagPath& X, std::size_t t_node) {
    const double lhs = phi.value_at_node(t_node) * X.node_value(t_node) -
                       phi.value_at_node(0) * X.node_value(0);
    return lhs - integrate_phi_dX(phi, X, t_node) - integrate_X_dphi(X, phi, t_node);
}

std::vector<double> limit_integral_formula(const FVIntegrand& phi, const PathBundle& X1,
                                           const PathBundle& X0, const GridStoppingTime& tau) {
    require_same_grid(X1.grid, phi.grid(), "limit_integral_formula");
    require_same_grid(X1.grid, X0.grid, "limit_integral_formula");
    require_same_grid(X1.grid, tau.grid, "limit_integral_formula");
    if (X1.scenarios() != X0.scenarios() || X1.scenarios() != tau.node_of.size())
        throw LabError("limit_integral_formula: bundles/stopping time are not aligned");

    std::vector<double> out(X1.scenarios());
    for (std::size_t s = 0; s < X1.scenarios(); ++s) {
        if (tau.never(s))
            throw LabError("limit_integral_formula: stopping time infinite on scenario " +
                           std::to_string(s));
        const std::size_t t = tau.node_of[s];
        const LadlagPath& x1 = X1.paths[s];
        const LadlagPath& x0 = X0.paths[s];
        double acc = 0.0;
        for (std::size_t u = 1; u <= t; ++u)
            acc += phi.continuous_at(u) * (x1.node_value(u) - x1.left_limit(u));
        for (std::size_t u = 0; u < t; ++u)
            acc += phi.continuous_at(u) * (x1.right_limit(u) - x1.node_value(u));
        const double x1t = x1.node_value(t);
        for (std::size_t u = 1; u <= t; ++u) acc += phi.left_jump(u) * (x1t - x0.node_value(u));
        for (std::size_t u = 0; u < t; ++u) acc += phi.right_jump(u) * (x1t - x1.node_value(u));
        out[s] = acc;
    }
    return out;
}

}  // namespace lab
