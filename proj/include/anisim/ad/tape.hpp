#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "anisim/ad/tensor.hpp"

namespace anisim::ad {

// Gradients keyed by tape node, produced by Tape::backward. Leaves that never
// influenced the root get zeros of their own shape.
class GradientMap {
public:
    GradientMap(std::vector<Tensor> by_node) : by_node_(std::move(by_node)) {}

    bool nonzero(const Tensor& t) const {
        return t.taped() && by_node_[static_cast<std::size_t>(t.node())].defined();
    }

    Tensor grad(const Tensor& t) const {
        check_contract(t.taped(), "gradient lookup requires a taped tensor");
        const Tensor& g = by_node_[static_cast<std::size_t>(t.node())];
        return g.defined() ? g : Tensor::zeros(t.shape());
    }

private:
    std::vector<Tensor> by_node_;
};

// Reverse-mode tape. Single-threaded: ops append nodes in evaluation order and
// backward() walks them exactly once in reverse creation order, so gradient
// accumulation order is deterministic.
class Tape {
public:
    // backward fn: given dL/d(output), return dL/d(input_k) aligned with inputs.
    using BackwardFn = std::function<std::vector<Tensor>(const Tensor&)>;

    struct Node {
        const char* op;
        std::vector<std::int64_t> inputs;  // -1 marks a constant (untaped) input
        BackwardFn backward;               // empty for leaves
    };

    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }
    std::size_t size() const { return nodes_.size(); }

    // Register a parameter/input as a leaf. Shares the value's buffer.
    Tensor watch(const Tensor& value) {
        if (!recording_) return value;
        nodes_.push_back({"leaf", {}, {}});
        return bind_node(value, this, static_cast<std::int64_t>(nodes_.size() - 1));
    }

    Tensor record(const char* op, Tensor result, const std::vector<const Tensor*>& inputs,
                  BackwardFn backward) {
        if (!recording_) return result;
        Node node{op, {}, std::move(backward)};
        node.inputs.reserve(inputs.size());
        for (const Tensor* in : inputs) {
            check_contract(!in->taped() || in->tape() == this,
                           std::string(op) + ": input recorded on a different tape");
            node.inputs.push_back(in->taped() ? in->node() : -1);
        }
        nodes_.push_back(std::move(node));
        return bind_node(std::move(result), this, static_cast<std::int64_t>(nodes_.size() - 1));
    }

    // Reverse accumulation from a scalar root.
    GradientMap backward(const Tensor& root) {
        check_contract(root.taped() && root.tape() == this,
                       "backward: root must be recorded on this tape");
        check_contract(root.numel() == 1, "backward: root must be a scalar");
        std::vector<Tensor> grads(nodes_.size());
        grads[static_cast<std::size_t>(root.node())] = Tensor::ones(root.shape());
        for (std::int64_t i = root.node(); i >= 0; --i) {
            const Tensor& g = grads[static_cast<std::size_t>(i)];
            if (!g.defined()) continue;
            const Node& node = nodes_[static_cast<std::size_t>(i)];
            if (!node.backward) continue;
            std::vector<Tensor> in_grads = node.backward(g);
            check_contract(in_grads.size() == node.inputs.size(),
                           std::string(node.op) + ": backward arity mismatch");
            for (std::size_t k = 0; k < in_grads.size(); ++k) {
                const std::int64_t id = node.inputs[k];
                if (id < 0 || !in_grads[k].defined()) continue;
                accumulate(grads[static_cast<std::size_t>(id)], in_grads[k], node.op);
            }
        }
        return GradientMap(std::move(grads));
    }

private:
    static void accumulate(Tensor& slot, const Tensor& add, const char* op) {
        if (!slot.defined()) {
            // Copy so later += cannot alias a value buffer still referenced by nodes.
            slot = Tensor(add.shape(), add.vec());
            return;
        }
        check_contract(slot.same_shape(add), std::string(op) + ": gradient shape mismatch");
        double* a = slot.data();
        const double* b = add.data();
        const std::int64_t n = slot.numel();
        for (std::int64_t i = 0; i < n; ++i) a[i] += b[i];
    }

    std::vector<Node> nodes_;
    bool recording_ = true;
};

}  // namespace anisim::ad
