#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace maskdepth {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
Shape broadcast_shape(const Shape& a, const Shape& b);

namespace autograd {

/// One node of the gradient graph. Forward values are immutable after
/// construction; grad buffers are filled by backward().
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    uint64_t id = 0;
    bool requires_grad = false;
    bool backward_root_used = false;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    std::vector<double>& ensure_grad();
};

using NodePtr = std::shared_ptr<Node>;

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad);

/// Registers a primitive op result. `parents` are the differentiable inputs;
/// `backward_fn` receives the node and must accumulate into each parent's
/// grad (skipping parents with requires_grad == false).
NodePtr make_node(Shape shape, std::vector<double> data,
                  std::vector<NodePtr> parents,
                  std::function<void(Node&)> backward_fn);

/// Row-major strides, with stride 0 on axes where `from` has extent 1 but
/// `to` does not (broadcast axes). `from` is right-aligned against `to`.
std::vector<int64_t> broadcast_strides(const Shape& from, const Shape& to);

}  // namespace autograd

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(autograd::NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    int64_t dim(int axis) const;
    bool requires_grad() const { return node_->requires_grad; }
    uint64_t node_id() const { return node_->id; }

    std::span<const double> data() const { return node_->data; }
    /// Mutable access to the raw buffer. Meant for parameter init and
    /// optimizer updates between steps, never for tensors inside a live graph.
    std::vector<double>& raw_data() { return node_->data; }

    double value() const;          // numel()==1 only
    double at(int64_t flat) const { return node_->data[static_cast<size_t>(flat)]; }

    std::span<const double> grad() const;
    std::vector<double>& grad_buffer() { return node_->ensure_grad(); }
    void zero_grad();

    /// Reverse-mode sweep from this scalar. Populates grad on every
    /// requires_grad leaf reachable from here; leaf grads accumulate across
    /// calls until zeroed. A second sweep from the same node is an error.
    void backward() const;

    autograd::NodePtr node() const { return node_; }

private:
    autograd::NodePtr node_;
};

// Elementwise binary (trailing-dimension broadcasting).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor min_pair(const Tensor& a, const Tensor& b);  // ties select a
Tensor max_pair(const Tensor& a, const Tensor& b);  // ties select a

// Elementwise unary.
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor clamp(const Tensor& a, double lo, double hi);

// Reductions.
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<int>& axes, bool keepdims = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<int>& axes, bool keepdims = false);

// Layout ops. All materialize a copy; adjoints scatter back.
Tensor reshape(const Tensor& a, Shape new_shape);
Tensor transpose(const Tensor& a, const std::vector<int>& perm);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t stop);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor pad(const Tensor& a, const std::vector<std::pair<int64_t, int64_t>>& pad_width,
           double value = 0.0);
/// Edge-replicating shift along one axis: out[c] = in[clamp(c - offset)].
Tensor shift(const Tensor& a, int axis, int64_t offset);

// [*, m, k] x [*, k, n]. Equal leading batch dims, or rank-2 rhs shared
// across a batched lhs.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& a, int axis, const Tensor& gain, const Tensor& bias,
                  double eps);
/// x * sigmoid(1.702 x)
Tensor gelu(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
inline Tensor operator-(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
inline Tensor operator/(const Tensor& a, double s) { return div(a, Tensor::scalar(s)); }
inline Tensor operator+(double s, const Tensor& a) { return add(Tensor::scalar(s), a); }
inline Tensor operator-(double s, const Tensor& a) { return sub(Tensor::scalar(s), a); }
inline Tensor operator*(double s, const Tensor& a) { return mul(Tensor::scalar(s), a); }
inline Tensor operator/(double s, const Tensor& a) { return div(Tensor::scalar(s), a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace maskdepth
