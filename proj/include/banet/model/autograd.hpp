#pragma once

// Minimal reverse-mode tape. Ops push one closure each; backward() replays
// them in reverse. Gradients accumulate additively, so values consumed by
// several ops (encoder skips, boundary probability maps) come out right
// without special casing. Passing a null tape runs ops forward-only with no
// activation retention.

#include <functional>
#include <memory>
#include <vector>

#include "banet/model/tensor.hpp"

namespace banet {

template <typename T>
struct VarState {
    Tensor<T> value;
    std::unique_ptr<Tensor<T>> grad;  // lazily allocated, zero-initialized
    bool requires_grad = true;
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> v, bool needs_grad = true)
        : s_(std::make_shared<VarState<T>>()) {
        s_->value = std::move(v);
        s_->requires_grad = needs_grad;
    }

    bool defined() const { return static_cast<bool>(s_); }
    Tensor<T>& value() { return s_->value; }
    const Tensor<T>& value() const { return s_->value; }
    bool requires_grad() const { return s_ && s_->requires_grad; }
    bool has_grad() const { return s_ && s_->grad != nullptr; }

    /// Gradient buffer, allocated (zeroed) on first use.
    Tensor<T>& grad() {
        if (!s_->grad)
            s_->grad = std::make_unique<Tensor<T>>(
                Tensor<T>::zeros_like(s_->value));
        return *s_->grad;
    }
    const Tensor<T>* grad_if_any() const {
        return s_ ? s_->grad.get() : nullptr;
    }
    void zero_grad() {
        if (s_ && s_->grad) s_->grad->fill(T(0));
    }
    void drop_grad() {
        if (s_) s_->grad.reset();
    }

    std::shared_ptr<VarState<T>> state() const { return s_; }

private:
    std::shared_ptr<VarState<T>> s_;
};

template <typename T>
class Tape {
public:
    void push(std::function<void()> fn) { fns_.push_back(std::move(fn)); }

    /// Runs recorded closures newest-first, then clears the tape.
    void backward() {
        for (auto it = fns_.rbegin(); it != fns_.rend(); ++it) (*it)();
        fns_.clear();
    }

    void clear() { fns_.clear(); }
    std::size_t size() const { return fns_.size(); }

private:
    std::vector<std::function<void()>> fns_;
};

/// Seeds d(loss)/d(loss) = 1 and unwinds the tape.
template <typename T>
void backward(Tape<T>& tape, Var<T>& loss) {
    if (loss.value().numel() != 1)
        throw Error("backward() expects a scalar loss");
    loss.grad().data[0] = T(1);
    tape.backward();
}

}  // namespace banet
