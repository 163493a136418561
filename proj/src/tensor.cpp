#include "maskdepth/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace maskdepth {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (size_t i = 0; i < rank; ++i) {
        const int64_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
        const int64_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (ea != eb && ea != 1 && eb != 1) {
            throw std::invalid_argument("shapes not broadcastable: " + shape_str(a) +
                                        " vs " + shape_str(b));
        }
        out[rank - 1 - i] = std::max(ea, eb);
    }
    return out;
}

namespace autograd {

namespace {
std::atomic<uint64_t> g_next_id{1};

// Graph buffers are large and short-lived; keep them on the heap free lists
// instead of round-tripping through mmap on every allocation.
#ifdef __GLIBC__
const bool g_malloc_tuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
    return true;
}();
#endif
}

std::vector<double>& Node::ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("leaf data size " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

NodePtr make_node(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    bool rg = false;
    for (const auto& p : parents) rg = rg || (p && p->requires_grad);
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

std::vector<int64_t> broadcast_strides(const Shape& from, const Shape& to) {
    std::vector<int64_t> strides(to.size(), 0);
    int64_t acc = 1;
    for (size_t i = 0; i < from.size(); ++i) {
        const size_t fi = from.size() - 1 - i;
        const size_t ti = to.size() - 1 - i;
        strides[ti] = (from[fi] == 1 && to[ti] != 1) ? 0 : acc;
        acc *= from[fi];
    }
    return strides;
}

}  // namespace autograd

using autograd::Node;
using autograd::NodePtr;

// ---------------------------------------------------------------------------
// Tensor basics

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(autograd::make_leaf(std::move(shape), std::vector<double>(n, 0.0),
                                      requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(autograd::make_leaf(std::move(shape), std::vector<double>(n, value),
                                      requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    return Tensor(autograd::make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(autograd::make_leaf({1}, {value}, requires_grad));
}

int64_t Tensor::dim(int axis) const {
    const auto& s = node_->shape;
    int a = axis < 0 ? axis + static_cast<int>(s.size()) : axis;
    if (a < 0 || a >= static_cast<int>(s.size())) {
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for " +
                                    shape_str(s));
    }
    return s[a];
}

double Tensor::value() const {
    if (numel() != 1) {
        throw std::invalid_argument("value() on non-scalar tensor of shape " +
                                    shape_str(node_->shape));
    }
    return node_->data[0];
}

std::span<const double> Tensor::grad() const {
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    auto& g = node_->ensure_grad();
    std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::backward() const {
    if (numel() != 1) {
        throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                    shape_str(node_->shape));
    }
    if (!node_->requires_grad) {
        throw std::invalid_argument("backward() on a tensor with no gradient path");
    }
    if (node_->backward_root_used) {
        throw std::runtime_error(
            "backward() called twice on the same node; double-backward is unsupported");
    }
    node_->backward_root_used = true;

    // Reachable requires_grad subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents) {
            if (p && p->requires_grad && seen.insert(p.get()).second) {
                stack.push_back(p.get());
            }
        }
    }
    // Tape order == construction order; replay adjoints newest-first.
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->id > b->id; });

    // Interior grads are temporaries of this sweep; leaf grads persist.
    for (Node* n : order) {
        if (n->backward_fn) {
            n->grad.assign(n->data.size(), 0.0);
        } else {
            n->ensure_grad();
        }
    }
    node_->grad.assign(1, 1.0);
    for (Node* n : order) {
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// Elementwise machinery

namespace {

inline void check_defined(const Tensor& t, const char* what) {
    if (!t.defined()) throw std::invalid_argument(std::string(what) + ": undefined tensor");
}

// How one operand's elements map onto the broadcast output. Common patterns
// get dedicated loops; only the general case pays for per-element index
// tables.
//   full:   operand shape == output shape
//   scalar: one element
//   suffix: operand equals the trailing dims (bias rows, position embeddings)
//   outer:  operand equals the leading dims, trailing extents 1 (keepdims)
enum class MapKind { full, scalar, suffix, outer, general };

struct BroadcastPlan {
    Shape out_shape;
    MapKind a_kind, b_kind;
    int64_t a_span = 1;  // suffix: operand numel; outer: trailing span
    int64_t b_span = 1;
    std::vector<int64_t> a_index, b_index;  // general only
};

MapKind classify(const Shape& from, const Shape& to, int64_t& span) {
    if (from == to) return MapKind::full;
    const int64_t n = shape_numel(from);
    if (n == 1) return MapKind::scalar;
    // right-align and find the split between broadcast and matching dims
    const size_t rank = to.size();
    std::vector<int64_t> padded(rank, 1);
    for (size_t i = 0; i < from.size(); ++i) padded[rank - from.size() + i] = from[i];
    size_t first_match = rank;
    for (size_t i = 0; i < rank; ++i) {
        if (padded[i] != 1) {
            first_match = i;
            break;
        }
    }
    bool suffix = true;
    for (size_t i = first_match; i < rank; ++i) suffix &= padded[i] == to[i];
    if (suffix) {
        span = n;
        return MapKind::suffix;
    }
    size_t last_match = 0;
    for (size_t i = 0; i < rank; ++i) {
        if (padded[i] != 1) last_match = i;
    }
    bool outer = true;
    for (size_t i = 0; i <= last_match; ++i) outer &= padded[i] == to[i];
    if (outer) {
        span = 1;
        for (size_t i = last_match + 1; i < rank; ++i) span *= to[i];
        return MapKind::outer;
    }
    return MapKind::general;
}

std::vector<int64_t> index_table(const Shape& from, const Shape& to) {
    const int64_t n = shape_numel(to);
    const auto strides = autograd::broadcast_strides(from, to);
    const size_t rank = to.size();
    std::vector<int64_t> table(n);
    std::vector<int64_t> idx(rank, 0);
    int64_t fi = 0;
    for (int64_t i = 0; i < n; ++i) {
        table[i] = fi;
        for (int64_t d = static_cast<int64_t>(rank) - 1; d >= 0; --d) {
            ++idx[d];
            fi += strides[d];
            if (idx[d] < to[d]) break;
            idx[d] = 0;
            fi -= strides[d] * to[d];
        }
    }
    return table;
}

BroadcastPlan make_plan(const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    plan.out_shape = broadcast_shape(a, b);
    plan.a_kind = classify(a, plan.out_shape, plan.a_span);
    plan.b_kind = classify(b, plan.out_shape, plan.b_span);
    if (plan.a_kind == MapKind::general) plan.a_index = index_table(a, plan.out_shape);
    if (plan.b_kind == MapKind::general) plan.b_index = index_table(b, plan.out_shape);
    return plan;
}

inline int64_t map_index(MapKind kind, int64_t i, int64_t span,
                         const std::vector<int64_t>& table) {
    switch (kind) {
        case MapKind::full: return i;
        case MapKind::scalar: return 0;
        case MapKind::suffix: return i % span;
        case MapKind::outer: return i / span;
        case MapKind::general: return table[i];
    }
    return i;
}

template <class Fwd, class Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    check_defined(a, "binary op lhs");
    check_defined(b, "binary op rhs");
    auto an = a.node();
    auto bn = b.node();
    auto plan = std::make_shared<BroadcastPlan>(make_plan(an->shape, bn->shape));
    const int64_t n = shape_numel(plan->out_shape);
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = an->data.data();
    const double* pb = bn->data.data();
    if (plan->a_kind == MapKind::full && plan->b_kind == MapKind::full) {
        for (int64_t i = 0; i < n; ++i) out[i] = fwd(pa[i], pb[i]);
    } else if (plan->a_kind == MapKind::full && plan->b_kind == MapKind::scalar) {
        const double s = pb[0];
        for (int64_t i = 0; i < n; ++i) out[i] = fwd(pa[i], s);
    } else if (plan->a_kind == MapKind::scalar && plan->b_kind == MapKind::full) {
        const double s = pa[0];
        for (int64_t i = 0; i < n; ++i) out[i] = fwd(s, pb[i]);
    } else if (plan->a_kind == MapKind::full && plan->b_kind == MapKind::suffix) {
        const int64_t span = plan->b_span;
        for (int64_t o = 0; o < n / span; ++o) {
            const double* ar = pa + o * span;
            double* or_ = out.data() + o * span;
            for (int64_t i = 0; i < span; ++i) or_[i] = fwd(ar[i], pb[i]);
        }
    } else if (plan->a_kind == MapKind::full && plan->b_kind == MapKind::outer) {
        const int64_t span = plan->b_span;
        for (int64_t o = 0; o < n / span; ++o) {
            const double s = pb[o];
            const double* ar = pa + o * span;
            double* or_ = out.data() + o * span;
            for (int64_t i = 0; i < span; ++i) or_[i] = fwd(ar[i], s);
        }
    } else {
        for (int64_t i = 0; i < n; ++i) {
            out[i] = fwd(pa[map_index(plan->a_kind, i, plan->a_span, plan->a_index)],
                         pb[map_index(plan->b_kind, i, plan->b_span, plan->b_index)]);
        }
    }
    return Tensor(autograd::make_node(
        plan->out_shape, std::move(out), {an, bn},
        [an, bn, plan, bwd](Node& self) {
            const int64_t n = self.numel();
            const double* g = self.grad.data();
            const double* pa = an->data.data();
            const double* pb = bn->data.data();
            double* ga = an->requires_grad ? an->ensure_grad().data() : nullptr;
            double* gb = bn->requires_grad ? bn->ensure_grad().data() : nullptr;
            if (plan->a_kind == MapKind::full && plan->b_kind == MapKind::full) {
                for (int64_t i = 0; i < n; ++i) {
                    double da, db;
                    bwd(pa[i], pb[i], g[i], da, db);
                    if (ga) ga[i] += da;
                    if (gb) gb[i] += db;
                }
            } else if (plan->a_kind == MapKind::full && plan->b_kind == MapKind::scalar) {
                const double s = pb[0];
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    double da, db;
                    bwd(pa[i], s, g[i], da, db);
                    if (ga) ga[i] += da;
                    acc += db;
                }
                if (gb) gb[0] += acc;
            } else if (plan->a_kind == MapKind::scalar && plan->b_kind == MapKind::full) {
                const double s = pa[0];
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    double da, db;
                    bwd(s, pb[i], g[i], da, db);
                    acc += da;
                    if (gb) gb[i] += db;
                }
                if (ga) ga[0] += acc;
            } else if (plan->a_kind == MapKind::full && plan->b_kind == MapKind::suffix) {
                const int64_t span = plan->b_span;
                for (int64_t o = 0; o < n / span; ++o) {
                    const double* ar = pa + o * span;
                    const double* gr = g + o * span;
                    double* gar = ga ? ga + o * span : nullptr;
                    for (int64_t i = 0; i < span; ++i) {
                        double da, db;
                        bwd(ar[i], pb[i], gr[i], da, db);
                        if (gar) gar[i] += da;
                        if (gb) gb[i] += db;
                    }
                }
            } else if (plan->a_kind == MapKind::full && plan->b_kind == MapKind::outer) {
                const int64_t span = plan->b_span;
                for (int64_t o = 0; o < n / span; ++o) {
                    const double s = pb[o];
                    const double* ar = pa + o * span;
                    const double* gr = g + o * span;
                    double* gar = ga ? ga + o * span : nullptr;
                    double acc = 0.0;
                    for (int64_t i = 0; i < span; ++i) {
                        double da, db;
                        bwd(ar[i], s, gr[i], da, db);
                        if (gar) gar[i] += da;
                        acc += db;
                    }
                    if (gb) gb[o] += acc;
                }
            } else {
                for (int64_t i = 0; i < n; ++i) {
                    const int64_t ai = map_index(plan->a_kind, i, plan->a_span, plan->a_index);
                    const int64_t bi = map_index(plan->b_kind, i, plan->b_span, plan->b_index);
                    double da, db;
                    bwd(pa[ai], pb[bi], g[i], da, db);
                    if (ga) ga[ai] += da;
                    if (gb) gb[bi] += db;
                }
            }
        }));
}

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    check_defined(a, "unary op");
    auto an = a.node();
    const int64_t n = an->numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = an->data.data();
    for (int64_t i = 0; i < n; ++i) out[i] = fwd(pa[i]);
    return Tensor(autograd::make_node(
        an->shape, std::move(out), {an},
        [an, bwd](Node& self) {
            if (!an->requires_grad) return;
            const int64_t n = self.numel();
            const double* g = self.grad.data();
            const double* pa = an->data.data();
            const double* py = self.data.data();
            double* ga = an->ensure_grad().data();
            for (int64_t i = 0; i < n; ++i) ga[i] += bwd(pa[i], py[i], g[i]);
        }));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = -g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g * y;
            db = g * x;
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b,
        [](double x, double y) {
            if (y == 0.0) throw std::domain_error("division by zero in tensor div");
            return x / y;
        },
        [](double x, double y, double g, double& da, double& db) {
            da = g / y;
            db = -g * x / (y * y);
        });
}

Tensor min_pair(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double g, double& da, double& db) {
            da = x <= y ? g : 0.0;
            db = x <= y ? 0.0 : g;
        });
}

Tensor max_pair(const Tensor& a, const Tensor& b) {
    return binary_op(
        a, b, [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y, double g, double& da, double& db) {
            da = x >= y ? g : 0.0;
            db = x >= y ? 0.0 : g;
        });
}

Tensor neg(const Tensor& a) {
    return unary_op(
        a, [](double x) { return -x; },
        [](double, double, double g) { return -g; });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::exp(x); },
        [](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a,
        [](double x) {
            if (x <= 0.0) {
                throw std::domain_error("log of non-positive value " + std::to_string(x));
            }
            return std::log(x);
        },
        [](double x, double, double g) { return g / x; });
}

Tensor sigmoid(const Tensor& a) {
    return unary_op(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y, double g) { return g * y * (1.0 - y); });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        a,
        [](double x) {
            if (x < 0.0) {
                throw std::domain_error("sqrt of negative value " + std::to_string(x));
            }
            return std::sqrt(x);
        },
        [](double, double y, double g) { return y > 0.0 ? g * 0.5 / y : 0.0; });
}

Tensor sin(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::sin(x); },
        [](double x, double, double g) { return g * std::cos(x); });
}

Tensor cos(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::cos(x); },
        [](double x, double, double g) { return -g * std::sin(x); });
}

Tensor abs(const Tensor& a) {
    return unary_op(
        a, [](double x) { return std::abs(x); },
        [](double x, double, double g) { return x > 0.0 ? g : (x < 0.0 ? -g : 0.0); });
}

Tensor pow(const Tensor& a, double exponent) {
    return unary_op(
        a, [exponent](double x) { return std::pow(x, exponent); },
        [exponent](double x, double, double g) {
            return g * exponent * std::pow(x, exponent - 1.0);
        });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
    return unary_op(
        a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](double x, double, double g) { return (x >= lo && x <= hi) ? g : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

namespace {

std::vector<int> normalize_axes(const std::vector<int>& axes, size_t rank) {
    std::vector<int> out;
    out.reserve(axes.size());
    for (int ax : axes) {
        int a = ax < 0 ? ax + static_cast<int>(rank) : ax;
        if (a < 0 || a >= static_cast<int>(rank)) {
            throw std::invalid_argument("reduction axis " + std::to_string(ax) +
                                        " out of range for rank " + std::to_string(rank));
        }
        out.push_back(a);
    }
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end()) {
        throw std::invalid_argument("duplicate reduction axis");
    }
    return out;
}

}  // namespace

Tensor sum(const Tensor& a) {
    check_defined(a, "sum");
    auto an = a.node();
    double s = 0.0;
    for (double v : an->data) s += v;
    return Tensor(autograd::make_node({1}, {s}, {an}, [an](Node& self) {
        if (!an->requires_grad) return;
        const double g = self.grad[0];
        double* ga = an->ensure_grad().data();
        const int64_t n = an->numel();
        for (int64_t i = 0; i < n; ++i) ga[i] += g;
    }));
}

Tensor mean(const Tensor& a) {
    check_defined(a, "mean");
    auto an = a.node();
    const int64_t n = an->numel();
    if (n == 0) throw std::invalid_argument("mean of empty tensor");
    double s = 0.0;
    for (double v : an->data) s += v;
    const double inv = 1.0 / static_cast<double>(n);
    return Tensor(autograd::make_node({1}, {s * inv}, {an}, [an, inv](Node& self) {
        if (!an->requires_grad) return;
        const double g = self.grad[0] * inv;
        double* ga = an->ensure_grad().data();
        const int64_t n = an->numel();
        for (int64_t i = 0; i < n; ++i) ga[i] += g;
    }));
}

namespace {

// Sum over `axes`; result shape keeps reduced axes as 1 when keepdims.
Tensor axis_sum(const Tensor& a, const std::vector<int>& axes_in, bool keepdims, bool take_mean) {
    check_defined(a, "axis reduction");
    auto an = a.node();
    const auto& shp = an->shape;
    const auto axes = normalize_axes(axes_in, shp.size());
    Shape kept = shp;
    int64_t reduce_count = 1;
    for (int ax : axes) {
        reduce_count *= shp[ax];
        kept[ax] = 1;
    }
    Shape out_shape;
    if (keepdims) {
        out_shape = kept;
    } else {
        for (size_t i = 0; i < shp.size(); ++i) {
            if (!std::binary_search(axes.begin(), axes.end(), static_cast<int>(i))) {
                out_shape.push_back(shp[i]);
            }
        }
        if (out_shape.empty()) out_shape = {1};
    }
    const int64_t out_n = shape_numel(out_shape);
    const int64_t in_n = an->numel();
    // trailing contiguous axes reduce to per-slice sums
    const bool trailing = !axes.empty() &&
                          axes.back() == static_cast<int>(shp.size()) - 1 &&
                          axes.front() == static_cast<int>(shp.size() - axes.size());
    const double scale = take_mean ? 1.0 / static_cast<double>(reduce_count) : 1.0;
    std::vector<double> out(static_cast<size_t>(out_n), 0.0);
    auto out_strides = std::make_shared<std::vector<int64_t>>();
    if (trailing) {
        const double* pa = an->data.data();
        const int64_t span = reduce_count;
        for (int64_t o = 0; o < out_n; ++o) {
            double acc = 0.0;
            const double* row = pa + o * span;
            for (int64_t i = 0; i < span; ++i) acc += row[i];
            out[o] = acc * scale;
        }
    } else {
        *out_strides = autograd::broadcast_strides(kept, shp);
        const double* pa = an->data.data();
        const size_t rank = shp.size();
        std::vector<int64_t> idx(rank, 0);
        int64_t oi = 0;
        const auto& os = *out_strides;
        for (int64_t i = 0; i < in_n; ++i) {
            out[oi] += pa[i];
            for (int64_t d = static_cast<int64_t>(rank) - 1; d >= 0; --d) {
                ++idx[d];
                oi += os[d];
                if (idx[d] < shp[d]) break;
                idx[d] = 0;
                oi -= os[d] * shp[d];
            }
        }
        if (take_mean) {
            for (auto& v : out) v *= scale;
        }
    }
    return Tensor(autograd::make_node(
        out_shape, std::move(out), {an}, [an, out_strides, scale, trailing, reduce_count](Node& self) {
            if (!an->requires_grad) return;
            const auto& shp = an->shape;
            const size_t rank = shp.size();
            const int64_t in_n = an->numel();
            double* ga = an->ensure_grad().data();
            const double* g = self.grad.data();
            if (trailing) {
                const int64_t span = reduce_count;
                for (int64_t o = 0; o < self.numel(); ++o) {
                    const double gv = g[o] * scale;
                    double* row = ga + o * span;
                    for (int64_t i = 0; i < span; ++i) row[i] += gv;
                }
                return;
            }
            std::vector<int64_t> idx(rank, 0);
            int64_t oi = 0;
            const auto& os = *out_strides;
            for (int64_t i = 0; i < in_n; ++i) {
                ga[i] += g[oi] * scale;
                for (int64_t d = static_cast<int64_t>(rank) - 1; d >= 0; --d) {
                    ++idx[d];
                    oi += os[d];
                    if (idx[d] < shp[d]) break;
                    idx[d] = 0;
                    oi -= os[d] * shp[d];
                }
            }
        }));
}

}  // namespace

Tensor sum(const Tensor& a, const std::vector<int>& axes, bool keepdims) {
    return axis_sum(a, axes, keepdims, false);
}

Tensor mean(const Tensor& a, const std::vector<int>& axes, bool keepdims) {
    return axis_sum(a, axes, keepdims, true);
}

// ---------------------------------------------------------------------------
// Layout ops

Tensor reshape(const Tensor& a, Shape new_shape) {
    check_defined(a, "reshape");
    auto an = a.node();
    // One extent may be -1 and is inferred.
    int64_t known = 1;
    int infer = -1;
    for (size_t i = 0; i < new_shape.size(); ++i) {
        if (new_shape[i] == -1) {
            if (infer >= 0) throw std::invalid_argument("reshape: multiple -1 extents");
            infer = static_cast<int>(i);
        } else {
            known *= new_shape[i];
        }
    }
    if (infer >= 0) {
        if (known == 0 || an->numel() % known != 0) {
            throw std::invalid_argument("reshape: cannot infer extent for " +
                                        shape_str(an->shape) + " -> " + shape_str(new_shape));
        }
        new_shape[infer] = an->numel() / known;
    }
    if (shape_numel(new_shape) != an->numel()) {
        throw std::invalid_argument("reshape element count mismatch: " + shape_str(an->shape) +
                                    " -> " + shape_str(new_shape));
    }
    return Tensor(autograd::make_node(new_shape, an->data, {an}, [an](Node& self) {
        if (!an->requires_grad) return;
        double* ga = an->ensure_grad().data();
        const double* g = self.grad.data();
        const int64_t n = self.numel();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
    }));
}

Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
    check_defined(a, "transpose");
    auto an = a.node();
    const auto& shp = an->shape;
    const size_t rank = shp.size();
    if (perm.size() != rank) {
        throw std::invalid_argument("transpose perm rank mismatch for " + shape_str(shp));
    }
    std::vector<bool> used(rank, false);
    Shape out_shape(rank);
    for (size_t i = 0; i < rank; ++i) {
        int p = perm[i];
        if (p < 0 || p >= static_cast<int>(rank) || used[p]) {
            throw std::invalid_argument("transpose: invalid permutation");
        }
        used[p] = true;
        out_shape[i] = shp[p];
    }
    // in strides, then per-out-axis source stride
    std::vector<int64_t> in_strides(rank, 1);
    for (int64_t d = static_cast<int64_t>(rank) - 2; d >= 0; --d) {
        in_strides[d] = in_strides[d + 1] * shp[d + 1];
    }
    auto src_strides = std::make_shared<std::vector<int64_t>>(rank);
    for (size_t i = 0; i < rank; ++i) (*src_strides)[i] = in_strides[perm[i]];
    const int64_t n = an->numel();
    std::vector<double> out(static_cast<size_t>(n));
    {
        const double* pa = an->data.data();
        std::vector<int64_t> idx(rank, 0);
        int64_t si = 0;
        const auto& ss = *src_strides;
        for (int64_t i = 0; i < n; ++i) {
            out[i] = pa[si];
            for (int64_t d = static_cast<int64_t>(rank) - 1; d >= 0; --d) {
                ++idx[d];
                si += ss[d];
                if (idx[d] < out_shape[d]) break;
                idx[d] = 0;
                si -= ss[d] * out_shape[d];
            }
        }
    }
    auto oshape = std::make_shared<Shape>(out_shape);
    return Tensor(autograd::make_node(
        out_shape, std::move(out), {an}, [an, src_strides, oshape](Node& self) {
            if (!an->requires_grad) return;
            double* ga = an->ensure_grad().data();
            const double* g = self.grad.data();
            const auto& osh = *oshape;
            const size_t rank = osh.size();
            std::vector<int64_t> idx(rank, 0);
            int64_t si = 0;
            const auto& ss = *src_strides;
            const int64_t n = self.numel();
            for (int64_t i = 0; i < n; ++i) {
                ga[si] += g[i];
                for (int64_t d = static_cast<int64_t>(rank) - 1; d >= 0; --d) {
                    ++idx[d];
                    si += ss[d];
                    if (idx[d] < osh[d]) break;
                    idx[d] = 0;
                    si -= ss[d] * osh[d];
                }
            }
        }));
}

namespace {

// Collapse shape around `axis` into [outer, extent, inner].
void axis_spans(const Shape& shp, int axis, int64_t& outer, int64_t& extent, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= shp[i];
    extent = shp[axis];
    for (size_t i = axis + 1; i < shp.size(); ++i) inner *= shp[i];
}

int normalize_axis(int axis, size_t rank, const char* what) {
    int a = axis < 0 ? axis + static_cast<int>(rank) : axis;
    if (a < 0 || a >= static_cast<int>(rank)) {
        throw std::invalid_argument(std::string(what) + ": axis " + std::to_string(axis) +
                                    " out of range for rank " + std::to_string(rank));
    }
    return a;
}

}  // namespace

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t stop) {
    check_defined(a, "slice");
    auto an = a.node();
    const auto& shp = an->shape;
    const int ax = normalize_axis(axis, shp.size(), "slice");
    if (start < 0 || stop > shp[ax] || start >= stop) {
        throw std::out_of_range("slice [" + std::to_string(start) + "," + std::to_string(stop) +
                                ") out of range for axis " + std::to_string(axis) + " of " +
                                shape_str(shp));
    }
    int64_t outer, extent, inner;
    axis_spans(shp, ax, outer, extent, inner);
    const int64_t len = stop - start;
    Shape out_shape = shp;
    out_shape[ax] = len;
    std::vector<double> out(static_cast<size_t>(outer * len * inner));
    const double* pa = an->data.data();
    for (int64_t o = 0; o < outer; ++o) {
        const double* src = pa + (o * extent + start) * inner;
        double* dst = out.data() + o * len * inner;
        std::copy(src, src + len * inner, dst);
    }
    return Tensor(autograd::make_node(
        out_shape, std::move(out), {an}, [an, ax, start, len](Node& self) {
            if (!an->requires_grad) return;
            int64_t outer, extent, inner;
            axis_spans(an->shape, ax, outer, extent, inner);
            double* ga = an->ensure_grad().data();
            const double* g = self.grad.data();
            for (int64_t o = 0; o < outer; ++o) {
                double* dst = ga + (o * extent + start) * inner;
                const double* src = g + o * len * inner;
                for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        }));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
    const auto& s0 = parts[0].shape();
    const int ax = normalize_axis(axis, s0.size(), "concat");
    Shape out_shape = s0;
    int64_t total = 0;
    for (const auto& p : parts) {
        check_defined(p, "concat");
        const auto& s = p.shape();
        if (s.size() != s0.size()) {
            throw std::invalid_argument("concat rank mismatch: " + shape_str(s0) + " vs " +
                                        shape_str(s));
        }
        for (size_t i = 0; i < s.size(); ++i) {
            if (static_cast<int>(i) != ax && s[i] != s0[i]) {
                throw std::invalid_argument("concat extent mismatch: " + shape_str(s0) +
                                            " vs " + shape_str(s));
            }
        }
        total += s[ax];
    }
    out_shape[ax] = total;
    int64_t outer, extent_out, inner;
    axis_spans(out_shape, ax, outer, extent_out, inner);
    std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
    std::vector<NodePtr> nodes;
    auto extents = std::make_shared<std::vector<int64_t>>();
    nodes.reserve(parts.size());
    int64_t off = 0;
    for (const auto& p : parts) {
        auto pn = p.node();
        nodes.push_back(pn);
        const int64_t ext = pn->shape[ax];
        extents->push_back(ext);
        const double* src = pn->data.data();
        for (int64_t o = 0; o < outer; ++o) {
            std::copy(src + o * ext * inner, src + (o + 1) * ext * inner,
                      out.data() + (o * extent_out + off) * inner);
        }
        off += ext;
    }
    auto nodes_copy = nodes;
    return Tensor(autograd::make_node(
        out_shape, std::move(out), std::move(nodes),
        [nodes_copy, extents, ax](Node& self) {
            int64_t outer, extent_out, inner;
            axis_spans(self.shape, ax, outer, extent_out, inner);
            const double* g = self.grad.data();
            int64_t off = 0;
            for (size_t k = 0; k < nodes_copy.size(); ++k) {
                const int64_t ext = (*extents)[k];
                auto& pn = nodes_copy[k];
                if (pn->requires_grad) {
                    double* gp = pn->ensure_grad().data();
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* src = g + (o * extent_out + off) * inner;
                        double* dst = gp + o * ext * inner;
                        for (int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
                    }
                }
                off += ext;
            }
        }));
}

Tensor pad(const Tensor& a, const std::vector<std::pair<int64_t, int64_t>>& pad_width,
           double value) {
    check_defined(a, "pad");
    auto an = a.node();
    const auto& shp = an->shape;
    if (pad_width.size() != shp.size()) {
        throw std::invalid_argument("pad spec rank mismatch for " + shape_str(shp));
    }
    Shape out_shape(shp.size());
    for (size_t i = 0; i < shp.size(); ++i) {
        if (pad_width[i].first < 0 || pad_width[i].second < 0) {
            throw std::invalid_argument("negative pad width");
        }
        out_shape[i] = shp[i] + pad_width[i].first + pad_width[i].second;
    }
    const size_t rank = shp.size();
    std::vector<int64_t> out_strides(rank, 1);
    for (int64_t d = static_cast<int64_t>(rank) - 2; d >= 0; --d) {
        out_strides[d] = out_strides[d + 1] * out_shape[d + 1];
    }
    std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)), value);
    auto offsets = std::make_shared<std::vector<int64_t>>(rank);
    for (size_t i = 0; i < rank; ++i) (*offsets)[i] = pad_width[i].first;
    // Copy interior.
    const double* pa = an->data.data();
    const int64_t n = an->numel();
    std::vector<int64_t> idx(rank, 0);
    for (int64_t i = 0; i < n; ++i) {
        int64_t oi = 0;
        for (size_t d = 0; d < rank; ++d) oi += (idx[d] + (*offsets)[d]) * out_strides[d];
        out[oi] = pa[i];
        for (int64_t d = static_cast<int64_t>(rank) - 1; d >= 0; --d) {
            ++idx[d];
            if (idx[d] < shp[d]) break;
            idx[d] = 0;
        }
    }
    auto ostr = std::make_shared<std::vector<int64_t>>(out_strides);
    return Tensor(autograd::make_node(
        out_shape, std::move(out), {an}, [an, offsets, ostr](Node& self) {
            if (!an->requires_grad) return;
            const auto& shp = an->shape;
            const size_t rank = shp.size();
            double* ga = an->ensure_grad().data();
            const double* g = self.grad.data();
            const int64_t n = an->numel();
            std::vector<int64_t> idx(rank, 0);
            for (int64_t i = 0; i < n; ++i) {
                int64_t oi = 0;
                for (size_t d = 0; d < rank; ++d) oi += (idx[d] + (*offsets)[d]) * (*ostr)[d];
                ga[i] += g[oi];
                for (int64_t d = static_cast<int64_t>(rank) - 1; d >= 0; --d) {
                    ++idx[d];
                    if (idx[d] < shp[d]) break;
                    idx[d] = 0;
                }
            }
        }));
}

Tensor shift(const Tensor& a, int axis, int64_t offset) {
    check_defined(a, "shift");
    auto an = a.node();
    const auto& shp = an->shape;
    const int ax = normalize_axis(axis, shp.size(), "shift");
    int64_t outer, extent, inner;
    axis_spans(shp, ax, outer, extent, inner);
    std::vector<double> out(static_cast<size_t>(an->numel()));
    const double* pa = an->data.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t c = 0; c < extent; ++c) {
            const int64_t src_c = std::min(std::max<int64_t>(c - offset, 0), extent - 1);
            const double* src = pa + (o * extent + src_c) * inner;
            double* dst = out.data() + (o * extent + c) * inner;
            std::copy(src, src + inner, dst);
        }
    }
    return Tensor(autograd::make_node(
        shp, std::move(out), {an}, [an, ax, offset](Node& self) {
            if (!an->requires_grad) return;
            int64_t outer, extent, inner;
            axis_spans(an->shape, ax, outer, extent, inner);
            double* ga = an->ensure_grad().data();
            const double* g = self.grad.data();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t c = 0; c < extent; ++c) {
                    const int64_t src_c = std::min(std::max<int64_t>(c - offset, 0), extent - 1);
                    double* dst = ga + (o * extent + src_c) * inner;
                    const double* src = g + (o * extent + c) * inner;
                    for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
            }
        }));
}

// ---------------------------------------------------------------------------
// Matmul

namespace {

// C[m,n] += A[m,k] * B[k,n]; 4-row blocks keep B rows hot in registers.
void mm_nn(const double* __restrict__ A, const double* __restrict__ B, double* __restrict__ C,
           int64_t m, int64_t k, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = A + i * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        double* c0 = C + i * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        for (int64_t l = 0; l < k; ++l) {
            const double v0 = a0[l], v1 = a1[l], v2 = a2[l], v3 = a3[l];
            const double* b = B + l * n;
            for (int64_t j = 0; j < n; ++j) {
                const double bv = b[j];
                c0[j] += v0 * bv;
                c1[j] += v1 * bv;
                c2[j] += v2 * bv;
                c3[j] += v3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        double* c = C + i * n;
        const double* a = A + i * k;
        for (int64_t l = 0; l < k; ++l) {
            const double av = a[l];
            const double* b = B + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// dot with four independent accumulators; fixed summation order, wide enough
// for the vector units
inline double dot4(const double* __restrict__ a, const double* __restrict__ b, int64_t k) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int64_t l = 0;
    for (; l + 4 <= k; l += 4) {
        s0 += a[l] * b[l];
        s1 += a[l + 1] * b[l + 1];
        s2 += a[l + 2] * b[l + 2];
        s3 += a[l + 3] * b[l + 3];
    }
    for (; l < k; ++l) s0 += a[l] * b[l];
    return (s0 + s1) + (s2 + s3);
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt(const double* __restrict__ A, const double* __restrict__ B, double* __restrict__ C,
           int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            c[j] += dot4(a, B + j * k, k);
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* __restrict__ A, const double* __restrict__ B, double* __restrict__ C,
           int64_t m, int64_t k, int64_t n) {
    int64_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = A + i * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        const double* b0 = B + i * n;
        const double* b1 = b0 + n;
        const double* b2 = b1 + n;
        const double* b3 = b2 + n;
        for (int64_t l = 0; l < k; ++l) {
            const double v0 = a0[l], v1 = a1[l], v2 = a2[l], v3 = a3[l];
            double* c = C + l * n;
            for (int64_t j = 0; j < n; ++j) {
                c[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
            }
        }
    }
    for (; i < m; ++i) {
        const double* a = A + i * k;
        const double* b = B + i * n;
        for (int64_t l = 0; l < k; ++l) {
            const double av = a[l];
            double* c = C + l * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

struct MatmulDims {
    int64_t batch;  // number of [m,k]x[k,n] products
    int64_t m, k, n;
    bool b_shared;  // rhs is rank-2 and shared across the batch
};

MatmulDims matmul_dims(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw std::invalid_argument("matmul requires rank >= 2, got " + shape_str(a) + " and " +
                                    shape_str(b));
    }
    MatmulDims d;
    d.m = a[a.size() - 2];
    d.k = a[a.size() - 1];
    const int64_t bk = b[b.size() - 2];
    d.n = b[b.size() - 1];
    if (d.k != bk) {
        throw std::invalid_argument("matmul inner dimension mismatch: " + shape_str(a) + " x " +
                                    shape_str(b));
    }
    const Shape a_batch(a.begin(), a.end() - 2);
    const Shape b_batch(b.begin(), b.end() - 2);
    if (b_batch.empty()) {
        d.batch = shape_numel(a_batch);
        d.b_shared = true;
    } else if (a_batch == b_batch) {
        d.batch = shape_numel(a_batch);
        d.b_shared = false;
    } else {
        throw std::invalid_argument("matmul batch dims mismatch: " + shape_str(a) + " x " +
                                    shape_str(b));
    }
    return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined(a, "matmul lhs");
    check_defined(b, "matmul rhs");
    auto an = a.node();
    auto bn = b.node();
    const MatmulDims d = matmul_dims(an->shape, bn->shape);
    Shape out_shape(an->shape.begin(), an->shape.end() - 1);
    out_shape.push_back(d.n);
    std::vector<double> out(static_cast<size_t>(d.batch * d.m * d.n), 0.0);
    for (int64_t t = 0; t < d.batch; ++t) {
        mm_nn(an->data.data() + t * d.m * d.k,
              bn->data.data() + (d.b_shared ? 0 : t * d.k * d.n), out.data() + t * d.m * d.n,
              d.m, d.k, d.n);
    }
    return Tensor(autograd::make_node(
        out_shape, std::move(out), {an, bn}, [an, bn, d](Node& self) {
            const double* g = self.grad.data();
            if (an->requires_grad) {
                double* ga = an->ensure_grad().data();
                for (int64_t t = 0; t < d.batch; ++t) {
                    // dA = dC * B^T
                    mm_nt(g + t * d.m * d.n, bn->data.data() + (d.b_shared ? 0 : t * d.k * d.n),
                          ga + t * d.m * d.k, d.m, d.n, d.k);
                }
            }
            if (bn->requires_grad) {
                double* gb = bn->ensure_grad().data();
                for (int64_t t = 0; t < d.batch; ++t) {
                    // dB = A^T * dC
                    mm_tn(an->data.data() + t * d.m * d.k, g + t * d.m * d.n,
                          gb + (d.b_shared ? 0 : t * d.k * d.n), d.m, d.k, d.n);
                }
            }
        }));
}

// ---------------------------------------------------------------------------
// Softmax / layer norm

Tensor softmax(const Tensor& a, int axis) {
    check_defined(a, "softmax");
    auto an = a.node();
    const int ax = normalize_axis(axis, an->shape.size(), "softmax");
    int64_t outer, extent, inner;
    axis_spans(an->shape, ax, outer, extent, inner);
    std::vector<double> out(static_cast<size_t>(an->numel()));
    const double* pa = an->data.data();
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * extent * inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t c = 0; c < extent; ++c) mx = std::max(mx, pa[base + c * inner]);
            double denom = 0.0;
            for (int64_t c = 0; c < extent; ++c) {
                const double e = std::exp(pa[base + c * inner] - mx);
                out[base + c * inner] = e;
                denom += e;
            }
            const double inv = 1.0 / denom;
            for (int64_t c = 0; c < extent; ++c) out[base + c * inner] *= inv;
        }
    }
    return Tensor(autograd::make_node(
        an->shape, std::move(out), {an}, [an, ax](Node& self) {
            if (!an->requires_grad) return;
            int64_t outer, extent, inner;
            axis_spans(an->shape, ax, outer, extent, inner);
            double* ga = an->ensure_grad().data();
            const double* g = self.grad.data();
            const double* y = self.data.data();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t base = o * extent * inner + i;
                    double dot = 0.0;
                    for (int64_t c = 0; c < extent; ++c) {
                        dot += g[base + c * inner] * y[base + c * inner];
                    }
                    for (int64_t c = 0; c < extent; ++c) {
                        const int64_t p = base + c * inner;
                        ga[p] += (g[p] - dot) * y[p];
                    }
                }
            }
        }));
}

namespace {

// Fused last-axis layer norm: one node instead of a chain, with the
// normalized values saved for the adjoint.
Tensor layer_norm_last_axis(const Tensor& a, const Tensor& gain, const Tensor& bias,
                            double eps) {
    auto an = a.node();
    auto gn = gain.node();
    auto bn = bias.node();
    const int64_t width = a.shape().back();
    const int64_t outer = a.numel() / width;
    auto normalized = std::make_shared<std::vector<double>>(static_cast<size_t>(a.numel()));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(outer));
    std::vector<double> out(static_cast<size_t>(a.numel()));
    const double* pa = an->data.data();
    const double* pg = gn->data.data();
    const double* pb = bn->data.data();
    for (int64_t o = 0; o < outer; ++o) {
        const double* row = pa + o * width;
        double mu = 0.0;
        for (int64_t i = 0; i < width; ++i) mu += row[i];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (int64_t i = 0; i < width; ++i) var += (row[i] - mu) * (row[i] - mu);
        var /= static_cast<double>(width);
        const double istd = 1.0 / std::sqrt(var + eps);
        (*inv_std)[o] = istd;
        double* nrow = normalized->data() + o * width;
        double* orow = out.data() + o * width;
        for (int64_t i = 0; i < width; ++i) {
            nrow[i] = (row[i] - mu) * istd;
            orow[i] = nrow[i] * pg[i] + pb[i];
        }
    }
    return Tensor(autograd::make_node(
        an->shape, std::move(out), {an, gn, bn},
        [an, gn, bn, normalized, inv_std, width, outer](Node& self) {
            const double* g = self.grad.data();
            const double* pg = gn->data.data();
            const double* nx = normalized->data();
            double* ga = an->requires_grad ? an->ensure_grad().data() : nullptr;
            double* gg = gn->requires_grad ? gn->ensure_grad().data() : nullptr;
            double* gb = bn->requires_grad ? bn->ensure_grad().data() : nullptr;
            for (int64_t o = 0; o < outer; ++o) {
                const double* grow = g + o * width;
                const double* nrow = nx + o * width;
                if (gg || gb) {
                    for (int64_t i = 0; i < width; ++i) {
                        if (gg) gg[i] += grow[i] * nrow[i];
                        if (gb) gb[i] += grow[i];
                    }
                }
                if (ga) {
                    double mean_dxhat = 0.0, mean_dxhat_x = 0.0;
                    for (int64_t i = 0; i < width; ++i) {
                        const double dxhat = grow[i] * pg[i];
                        mean_dxhat += dxhat;
                        mean_dxhat_x += dxhat * nrow[i];
                    }
                    mean_dxhat /= static_cast<double>(width);
                    mean_dxhat_x /= static_cast<double>(width);
                    const double istd = (*inv_std)[o];
                    double* garow = ga + o * width;
                    for (int64_t i = 0; i < width; ++i) {
                        const double dxhat = grow[i] * pg[i];
                        garow[i] += (dxhat - mean_dxhat - nrow[i] * mean_dxhat_x) * istd;
                    }
                }
            }
        }));
}

}  // namespace

Tensor layer_norm(const Tensor& a, int axis, const Tensor& gain, const Tensor& bias,
                  double eps) {
    check_defined(a, "layer_norm");
    if (eps <= 0.0) throw std::invalid_argument("layer_norm eps must be > 0");
    const auto& shp = a.shape();
    const int ax = normalize_axis(axis, shp.size(), "layer_norm");
    const int64_t extent = shp[ax];
    if (gain.numel() != extent || bias.numel() != extent) {
        throw std::invalid_argument("layer_norm gain/bias must have " + std::to_string(extent) +
                                    " elements");
    }
    if (ax == static_cast<int>(shp.size()) - 1) {
        return layer_norm_last_axis(a, gain, bias, eps);
    }
    // Shape gain/bias so they broadcast along `axis`.
    Shape affine_shape(shp.size() - ax, 1);
    affine_shape[0] = extent;
    Tensor g2 = reshape(gain, affine_shape);
    Tensor b2 = reshape(bias, affine_shape);
    Tensor mu = mean(a, {ax}, true);
    Tensor centered = sub(a, mu);
    Tensor var = mean(mul(centered, centered), {ax}, true);
    Tensor norm = div(centered, sqrt(add(var, Tensor::scalar(eps))));
    return add(mul(norm, g2), b2);
}

Tensor gelu(const Tensor& a) {
    check_defined(a, "gelu");
    auto an = a.node();
    const int64_t n = an->numel();
    auto sig = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = an->data.data();
    for (int64_t i = 0; i < n; ++i) {
        const double x = pa[i];
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-1.702 * x))
                                  : std::exp(1.702 * x) / (1.0 + std::exp(1.702 * x));
        (*sig)[i] = s;
        out[i] = x * s;
    }
    return Tensor(autograd::make_node(
        an->shape, std::move(out), {an}, [an, sig](Node& self) {
            if (!an->requires_grad) return;
            const int64_t n = self.numel();
            const double* g = self.grad.data();
            const double* pa = an->data.data();
            double* ga = an->ensure_grad().data();
            for (int64_t i = 0; i < n; ++i) {
                const double s = (*sig)[i];
                ga[i] += g[i] * (s + 1.702 * pa[i] * s * (1.0 - s));
            }
        }));
}

}  // namespace maskdepth
