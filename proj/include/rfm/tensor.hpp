#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rfm/errors.hpp"

// Dense row-major tensors plus a reverse-mode tape. TensorT is a cheap
// handle (shared_ptr inside) so ops and backward closures can capture it by
// value. The tape replays closures in reverse recording order, which is a
// valid reverse-topological order because ops only consume already-recorded
// tensors. Everything is templated on the scalar type: the pipeline runs in
// float, gradient checks re-run the same graph code in double.
namespace rfm {

inline long numel_of(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << "]";
    return os.str();
}

template <typename T>
struct TensorImplT {
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated on demand, same length as value
    bool requires_grad = false;
};

template <typename T>
class TensorT {
  public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape, bool requires_grad = false)
        : impl_(std::make_shared<TensorImplT<T>>()) {
        for (int d : shape)
            if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape));
        impl_->shape = std::move(shape);
        impl_->value.assign(numel_of(impl_->shape), T(0));
        impl_->requires_grad = requires_grad;
    }

    static TensorT from_vector(std::vector<int> shape, std::vector<T> value,
                               bool requires_grad = false) {
        TensorT t(std::move(shape), requires_grad);
        if (static_cast<long>(value.size()) != t.size())
            throw ShapeError("value size " + std::to_string(value.size()) + " does not match shape " +
                             shape_str(t.shape()));
        t.impl_->value = std::move(value);
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape.at(static_cast<size_t>(i)); }
    long size() const { return static_cast<long>(impl_->value.size()); }

    T* data() { return impl_->value.data(); }
    const T* data() const { return impl_->value.data(); }
    std::vector<T>& value() { return impl_->value; }
    const std::vector<T>& value() const { return impl_->value; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

    void ensure_grad() {
        if (impl_->grad.size() != impl_->value.size()) impl_->grad.assign(impl_->value.size(), T(0));
    }
    bool has_grad() const { return impl_->grad.size() == impl_->value.size(); }
    T* grad() { return impl_->grad.data(); }
    const T* grad() const { return impl_->grad.data(); }
    std::vector<T>& grad_vector() { return impl_->grad; }
    void zero_grad() {
        ensure_grad();
        std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
    }

    void fill(T v) { std::fill(impl_->value.begin(), impl_->value.end(), v); }

    T item() const {
        if (size() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape()));
        return impl_->value[0];
    }

    // identity of the underlying buffer, used by tests and the tape
    const void* id() const { return impl_.get(); }

  private:
    std::shared_ptr<TensorImplT<T>> impl_;
};

template <typename T>
class GraphT {
  public:
    void record(const char* tag, std::function<void()> backward) {
        nodes_.push_back({tag, std::move(backward)});
    }

    // Seeds d(loss)/d(loss) = 1 and replays every node once, newest first.
    // Closures accumulate into input grads in their own fixed order, so the
    // whole pass is deterministic for a fixed forward pass.
    void backward(TensorT<T>& loss) {
        if (loss.size() != 1)
            throw ShapeError("backward expects a scalar loss, got " + shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw UsageError("backward called on a loss that does not require gradients");
        loss.ensure_grad();
        loss.grad()[0] = T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->backward();
    }

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

  private:
    struct Node {
        const char* tag;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
};

using Tensor = TensorT<float>;
using Graph = GraphT<float>;

}  // namespace rfm
