#pragma once

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

namespace bilevel {

struct Interval {
    double a{0.0};
    double b{1.0};
};

struct Rect {
    double a1{0.0}, b1{1.0};
    double a2{0.0}, b2{1.0};
};

/// Bounded open set on which signals live: a 1D interval or a 2D rectangle.
class Domain {
public:
    explicit Domain(Interval iv);
    explicit Domain(Rect r);

    int dim() const { return dim_; }
    double measure() const;
    double lower(int axis) const;
    double side(int axis) const;
    const std::variant<Interval, Rect>& kind() const { return kind_; }
    bool operator==(const Domain& other) const;

private:
    std::variant<Interval, Rect> kind_;
    int dim_;
};

/// Uniform cell-center grid: nodes at lower + (i+1/2)h per axis, h = side/points_per_axis.
/// Distinct nodes are at least h apart, so singular pair kernels stay finite off the diagonal.
class Grid {
public:
    Grid(Domain domain, int points_per_axis);

    const Domain& domain() const { return domain_; }
    int points_per_axis() const { return points_; }
    int dim() const { return domain_.dim(); }
    std::size_t node_count() const { return nodes_; }
    double spacing(int axis = 0) const;
    double cell_measure() const;

    /// Cell-center coordinate of a node along one axis.
    /// 2D nodes are indexed row-major: node = iy*points + ix.
    double coord(std::size_t node, int axis) const;
    std::array<double, 2> point(std::size_t node) const;
    double distance(std::size_t i, std::size_t j) const;

    bool operator==(const Grid& other) const;

private:
    Domain domain_;
    int points_;
    std::size_t nodes_;
    std::array<double, 2> h_{0.0, 0.0};
};

using GridPtr = std::shared_ptr<const Grid>;

GridPtr make_grid(Domain domain, int points_per_axis);
GridPtr make_grid(Interval iv, int points_per_axis);
GridPtr make_grid(Rect r, int points_per_axis);

/// Discretized u in L2 of the domain; immutable after construction, all values finite.
class GridSignal {
public:
    GridSignal(GridPtr grid, std::vector<double> values);

    static GridSignal from_function(const GridPtr& grid, const std::function<double(double)>& f);
    static GridSignal from_function_2d(const GridPtr& grid,
                                       const std::function<double(double, double)>& f);
    static GridSignal constant(const GridPtr& grid, double c);

    const Grid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    std::span<const double> values() const { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    std::size_t size() const { return values_.size(); }

private:
    GridPtr grid_;
    std::vector<double> values_;
};

/// N pairs of (clean, noisy) signals sharing a single grid.
class TrainingSet {
public:
    struct Pair {
        GridSignal clean;
        GridSignal noisy;
    };

    explicit TrainingSet(std::vector<Pair> pairs);

    std::size_t size() const { return pairs_.size(); }
    const Pair& pair(std::size_t j) const { return pairs_[j]; }
    const std::vector<Pair>& pairs() const { return pairs_; }
    const Grid& grid() const { return pairs_.front().clean.grid(); }
    const GridPtr& grid_ptr() const { return pairs_.front().clean.grid_ptr(); }

private:
    std::vector<Pair> pairs_;
};

/// Pair integrand g(x, y, u(x), u(y)); x, y passed as 2D points (y-component 0 in 1D).
using PairIntegrand =
    std::function<double(std::array<double, 2>, std::array<double, 2>, double, double)>;

// Midpoint-rule quadratures. All reductions are pairwise and deterministic
// regardless of the worker-thread count.
double l2_norm_sq(const GridSignal& u);
double l2_inner(const GridSignal& u, const GridSignal& v);
double l2_dist_sq(const GridSignal& u, const GridSignal& v);
double mean_value(const GridSignal& u);

/// O(N^2) quadrature of the double integral of g(x,y,u(x),u(y)) over ordered
/// off-diagonal node pairs; diagonal cells contribute zero.
/// Throws on a non-finite integrand value, reporting the offending pair.
double double_integral(const PairIntegrand& g, const GridSignal& u);

/// Total variation of the piecewise-linear extension of the samples to the
/// closed domain. 1D: interior difference sum plus half of each one-sided end difference;
/// 2D: anisotropic sum of per-line variations times the transverse spacing.
double tv_discrete(const GridSignal& u);

/// 1D: max adjacent difference quotient (exact for grid functions);
/// 2D: max over all node pairs, O(N^2).
double lipschitz_constant(const GridSignal& u);

/// Gagliardo-type seminorm ( sum_{x!=y} |u(x)-u(y)|^p / |x-y|^{beta p} * w^2 )^{1/p}.
double gagliardo_seminorm(const GridSignal& u, double p, double beta);

}  // namespace bilevel
