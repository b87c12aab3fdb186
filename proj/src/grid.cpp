#include "bilevel/grid.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bilevel/util.hpp"

namespace bilevel {

Domain::Domain(Interval iv) : kind_(iv), dim_(1) {
    if (!(iv.a < iv.b)) throw std::invalid_argument("Domain: interval requires a < b");
}

Domain::Domain(Rect r) : kind_(r), dim_(2) {
    if (!(r.a1 < r.b1) || !(r.a2 < r.b2))
        throw std::invalid_argument("Domain: rect requires a < b per axis");
}

double Domain::measure() const {
    if (dim_ == 1) {
        const auto& iv = std::get<Interval>(kind_);
        return iv.b - iv.a;
    }
    const auto& r = std::get<Rect>(kind_);
    return (r.b1 - r.a1) * (r.b2 - r.a2);
}

double Domain::lower(int axis) const {
    if (dim_ == 1) return std::get<Interval>(kind_).a;
    const auto& r = std::get<Rect>(kind_);
    return axis == 0 ? r.a1 : r.a2;
}

double Domain::side(int axis) const {
    if (dim_ == 1) return measure();
    const auto& r = std::get<Rect>(kind_);
    return axis == 0 ? r.b1 - r.a1 : r.b2 - r.a2;
}

bool Domain::operator==(const Domain& other) const {
    if (dim_ != other.dim_) return false;
    if (dim_ == 1) {
        const auto &a = std::get<Interval>(kind_), &b = std::get<Interval>(other.kind_);
        return a.a == b.a && a.b == b.b;
    }
    const auto &a = std::get<Rect>(kind_), &b = std::get<Rect>(other.kind_);
    return a.a1 == b.a1 && a.b1 == b.b1 && a.a2 == b.a2 && a.b2 == b.b2;
}

Grid::Grid(Domain domain, int points_per_axis) : domain_(std::move(domain)), points_(points_per_axis) {
    if (points_ < 1) throw std::invalid_argument("Grid: points_per_axis must be positive");
    h_[0] = domain_.side(0) / points_;
    nodes_ = static_cast<std::size_t>(points_);
    if (domain_.dim() == 2) {
        h_[1] = domain_.side(1) / points_;
        nodes_ *= static_cast<std::size_t>(points_);
    }
}

double Grid::spacing(int axis) const { return h_[axis]; }

double Grid::cell_measure() const { return dim() == 1 ? h_[0] : h_[0] * h_[1]; }

double Grid::coord(std::size_t node, int axis) const {
    if (dim() == 1) return domain_.lower(0) + (static_cast<double>(node) + 0.5) * h_[0];
    const std::size_t ix = node % static_cast<std::size_t>(points_);
    const std::size_t iy = node / static_cast<std::size_t>(points_);
    const std::size_t i = (axis == 0) ? ix : iy;
    return domain_.lower(axis) + (static_cast<double>(i) + 0.5) * h_[axis];
}

std::array<double, 2> Grid::point(std::size_t node) const {
    if (dim() == 1) return {coord(node, 0), 0.0};
    return {coord(node, 0), coord(node, 1)};
}

double Grid::distance(std::size_t i, std::size_t j) const {
    if (dim() == 1) return std::abs(coord(i, 0) - coord(j, 0));
    const double dx = coord(i, 0) - coord(j, 0);
    const double dy = coord(i, 1) - coord(j, 1);
    return std::hypot(dx, dy);
}

bool Grid::operator==(const Grid& other) const {
    return points_ == other.points_ && domain_ == other.domain_;
}

GridPtr make_grid(Domain domain, int points_per_axis) {
    return std::make_shared<Grid>(std::move(domain), points_per_axis);
}
GridPtr make_grid(Interval iv, int points_per_axis) { return make_grid(Domain(iv), points_per_axis); }
GridPtr make_grid(Rect r, int points_per_axis) { return make_grid(Domain(r), points_per_axis); }

GridSignal::GridSignal(GridPtr grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw std::invalid_argument("GridSignal: null grid");
    if (values_.size() != grid_->node_count())
        throw std::invalid_argument("GridSignal: value count does not match grid node count");
    for (double v : values_)
        if (!std::isfinite(v)) throw std::invalid_argument("GridSignal: non-finite value");
}

GridSignal GridSignal::from_function(const GridPtr& grid, const std::function<double(double)>& f) {
    if (grid->dim() != 1) throw std::invalid_argument("from_function: 1D grid expected");
    std::vector<double> v(grid->node_count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid->coord(i, 0));
    return GridSignal(grid, std::move(v));
}

GridSignal GridSignal::from_function_2d(const GridPtr& grid,
                                        const std::function<double(double, double)>& f) {
    if (grid->dim() != 2) throw std::invalid_argument("from_function_2d: 2D grid expected");
    std::vector<double> v(grid->node_count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(grid->coord(i, 0), grid->coord(i, 1));
    return GridSignal(grid, std::move(v));
}

GridSignal GridSignal::constant(const GridPtr& grid, double c) {
    return GridSignal(grid, std::vector<double>(grid->node_count(), c));
}

TrainingSet::TrainingSet(std::vector<Pair> pairs) : pairs_(std::move(pairs)) {
    if (pairs_.empty()) throw std::invalid_argument("TrainingSet: needs at least one pair");
    const Grid& g = pairs_.front().clean.grid();
    for (const auto& p : pairs_)
        if (!(p.clean.grid() == g) || !(p.noisy.grid() == g))
            throw std::invalid_argument("TrainingSet: all signals must share one grid");
}

namespace {

void require_same_grid(const GridSignal& u, const GridSignal& v, const char* op) {
    if (!(u.grid() == v.grid())) {
        std::ostringstream os;
        os << op << ": grid mismatch";
        throw std::invalid_argument(os.str());
    }
}

double weighted_square_sum(const GridSignal& u, const GridSignal* v, int mode) {
    // mode 0: sum u^2, 1: sum u*v, 2: sum (u-v)^2
    const std::size_t n = u.size();
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (mode) {
            case 0: terms[i] = u[i] * u[i]; break;
            case 1: terms[i] = u[i] * (*v)[i]; break;
            default: {
                const double d = u[i] - (*v)[i];
                terms[i] = d * d;
            }
        }
    }
    return u.grid().cell_measure() * pairwise_sum(terms);
}

}  // namespace

double l2_norm_sq(const GridSignal& u) { return weighted_square_sum(u, nullptr, 0); }

double l2_inner(const GridSignal& u, const GridSignal& v) {
    require_same_grid(u, v, "l2_inner");
    return weighted_square_sum(u, &v, 1);
}

double l2_dist_sq(const GridSignal& u, const GridSignal& v) {
    require_same_grid(u, v, "l2_dist_sq");
    return weighted_square_sum(u, &v, 2);
}

double mean_value(const GridSignal& u) {
    std::vector<double> terms(u.values().begin(), u.values().end());
    return pairwise_sum(terms) / static_cast<double>(u.size());
}

double double_integral(const PairIntegrand& g, const GridSignal& u) {
    const Grid& grid = u.grid();
    const std::size_t n = grid.node_count();
    const double w2 = grid.cell_measure() * grid.cell_measure();
    std::vector<double> row(n, 0.0);
    std::atomic<bool> bad{false};
    std::size_t bad_i = 0, bad_j = 0;

    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double acc = 0.0;
            const auto xi = grid.point(i);
            const double ui = u[i];
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double val = g(xi, grid.point(j), ui, u[j]);
                if (!std::isfinite(val)) {
                    if (!bad.exchange(true)) {
                        bad_i = i;
                        bad_j = j;
                    }
                    return;
                }
                acc += val;
            }
            row[i] = acc;
        }
    });
    if (bad.load()) {
        std::ostringstream os;
        os << "double_integral: non-finite integrand at node pair (" << bad_i << ", " << bad_j
           << "), x = (" << u.grid().coord(bad_i, 0) << "), y = (" << u.grid().coord(bad_j, 0)
           << ")";
        throw std::runtime_error(os.str());
    }
    return w2 * pairwise_sum(row);
}

namespace {

// TV of the piecewise-linear extension of one line of samples to the closed
// interval: the end cells extrapolate with the one-sided slope, contributing
// half of each end difference.
double tv_line(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n < 2) return 0.0;
    std::vector<double> terms(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) terms[i] = std::abs(v[i + 1] - v[i]);
    double tv = pairwise_sum(terms);
    tv += 0.5 * terms.front() + 0.5 * terms.back();
    return tv;
}

}  // namespace

double tv_discrete(const GridSignal& u) {
    const Grid& g = u.grid();
    if (g.dim() == 1) return tv_line(u.values());

    const std::size_t p = static_cast<std::size_t>(g.points_per_axis());
    std::vector<double> line(p), contributions;
    contributions.reserve(2 * p);
    for (std::size_t iy = 0; iy < p; ++iy) {
        for (std::size_t ix = 0; ix < p; ++ix) line[ix] = u[iy * p + ix];
        contributions.push_back(tv_line(line) * g.spacing(1));
    }
    for (std::size_t ix = 0; ix < p; ++ix) {
        for (std::size_t iy = 0; iy < p; ++iy) line[iy] = u[iy * p + ix];
        contributions.push_back(tv_line(line) * g.spacing(0));
    }
    return pairwise_sum(contributions);
}

double lipschitz_constant(const GridSignal& u) {
    const Grid& g = u.grid();
    const std::size_t n = g.node_count();
    double lip = 0.0;
    if (g.dim() == 1) {
        const double h = g.spacing(0);
        for (std::size_t i = 0; i + 1 < n; ++i)
            lip = std::max(lip, std::abs(u[i + 1] - u[i]) / h);
        return lip;
    }
    std::vector<double> row_max(n, 0.0);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double m = 0.0;
            for (std::size_t j = i + 1; j < n; ++j)
                m = std::max(m, std::abs(u[i] - u[j]) / g.distance(i, j));
            row_max[i] = m;
        }
    });
    for (double m : row_max) lip = std::max(lip, m);
    return lip;
}

double gagliardo_seminorm(const GridSignal& u, double p, double beta) {
    if (p < 1.0) throw std::invalid_argument("gagliardo_seminorm: p >= 1 required");
    if (beta < 0.0 || beta > 1.0)
        throw std::invalid_argument("gagliardo_seminorm: beta in [0,1] required");
    const double bp = beta * p;
    const double sum = double_integral(
        [p, bp](std::array<double, 2> x, std::array<double, 2> y, double xi, double zeta) {
            const double dx = x[0] - y[0], dy = x[1] - y[1];
            const double dist = std::hypot(dx, dy);
            const double diff = std::abs(xi - zeta);
            if (diff == 0.0) return 0.0;
            return std::pow(diff, p) / std::pow(dist, bp);
        },
        u);
    return std::pow(sum, 1.0 / p);
}

}  // namespace bilevel
