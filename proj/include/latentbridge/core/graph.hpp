// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "latentbridge/core/tensor.hpp"

namespace lb {

// Named parameter container. Registration order is the canonical order for
// serialization, hashing and optimizer state, so it must be deterministic.
template <class S>
struct ParamStore {
    struct Entry {
        std::string name;
        Tensor<S> value;
    };
    std::vector<Entry> entries;
    std::map<std::string, int> index;

    int add(const std::string& name, Tensor<S> value) {
        check(index.find(name) == index.end(), ErrorKind::validation,
              "duplicate parameter name: " + name);
        const int id = static_cast<int>(entries.size());
        entries.push_back({name, std::move(value)});
        index[name] = id;
        return id;
    }

    Tensor<S>& value(int id) { return entries[static_cast<size_t>(id)].value; }
    const Tensor<S>& value(int id) const { return entries[static_cast<size_t>(id)].value; }
    int id_of(const std::string& name) const {
        auto it = index.find(name);
        check(it != index.end(), ErrorKind::validation, "unknown parameter: " + name);
        return it->second;
    }
    size_t size() const { return entries.size(); }

    size_t total_scalars() const {
        size_t n = 0;
        for (const auto& e : entries) n += e.value.numel();
        return n;
    }
};

// Gradient accumulator parallel to a ParamStore.
template <class S>
struct GradStore {
    std::vector<Tensor<S>> grads;

    void reset(const ParamStore<S>& ps) {
        grads.resize(ps.size());
        for (size_t i = 0; i < ps.size(); ++i) {
            grads[i].shape = ps.entries[i].value.shape;
            grads[i].data.assign(ps.entries[i].value.numel(), S(0));
        }
    }

    void add(int id, const Tensor<S>& g) {
        auto& dst = grads[static_cast<size_t>(id)];
        for (size_t i = 0; i < dst.numel(); ++i) dst.data[i] += g.data[i];
    }

    void scale(S factor) {
        for (auto& g : grads)
            for (auto& v : g.data) v *= factor;
    }
};

// Reverse-mode tape. Nodes are appended in evaluation order (which is a
// topological order), so backward is a single reverse sweep.
template <class S>
class Tape {
public:
    struct Node {
        Tensor<S> val;
        Tensor<S> grad;  // allocated lazily on first contribution
        std::function<void(Tape&)> back;
        bool needs_grad = false;
        int param_id = -1;
        const void* store = nullptr;  // owning ParamStore, for gradient routing
    };

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    // When any store is marked trainable, parameters of unmarked stores are
    // treated as frozen constants: no weight gradients are computed for them
    // (input gradients still flow through). With no marks, every parameter
    // trains.
    void mark_trainable(const void* store) { trainable_.push_back(store); }

    bool store_trainable(const void* store) const {
        if (trainable_.empty()) return true;
        for (const void* s : trainable_)
            if (s == store) return true;
        return false;
    }

    int new_node(Tensor<S> val, bool needs_grad) {
        Node n;
        n.val = std::move(val);
        n.needs_grad = grad_enabled_ && needs_grad;
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    Node& node(int i) { return nodes_[static_cast<size_t>(i)]; }
    const Node& node(int i) const { return nodes_[static_cast<size_t>(i)]; }
    size_t size() const { return nodes_.size(); }

    const Tensor<S>& val(int i) const { return nodes_[static_cast<size_t>(i)].val; }

    // Zero-initialized gradient tensor for node i, allocated on demand.
    Tensor<S>& grad_ref(int i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.grad.numel() == 0) {
            n.grad.shape = n.val.shape;
            n.grad.data.assign(n.val.numel(), S(0));
        }
        return n.grad;
    }

    bool grad_touched(int i) const { return nodes_[static_cast<size_t>(i)].grad.numel() != 0; }

    // Backward from a scalar node, routing parameter gradients per store.
    // Stores without a route simply drop their gradients.
    void backward(int loss,
                  const std::vector<std::pair<const void*, GradStore<S>*>>& routes) {
        check(node(loss).val.numel() == 1, ErrorKind::shape, "backward needs a scalar loss");
        check(grad_enabled_, ErrorKind::validation, "backward on a no-grad tape");
        grad_ref(loss).data[0] = S(1);
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.needs_grad || n.grad.numel() == 0) continue;
            if (n.back) n.back(*this);
            if (n.param_id >= 0) {
                for (const auto& [store, gs] : routes)
                    if (store == n.store && gs != nullptr) gs->add(n.param_id, n.grad);
            }
        }
    }

    // Single-store convenience.
    void backward(int loss, GradStore<S>* gs) {
        if (gs == nullptr) {
            backward(loss, std::vector<std::pair<const void*, GradStore<S>*>>{});
            return;
        }
        // route every parameter on the tape into gs (callers guarantee a
        // single trainable store)
        check(node(loss).val.numel() == 1, ErrorKind::shape, "backward needs a scalar loss");
        check(grad_enabled_, ErrorKind::validation, "backward on a no-grad tape");
        grad_ref(loss).data[0] = S(1);
        for (int i = loss; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.needs_grad || n.grad.numel() == 0) continue;
            if (n.back) n.back(*this);
            if (n.param_id >= 0) gs->add(n.param_id, n.grad);
        }
    }

private:
    std::vector<Node> nodes_;
    std::vector<const void*> trainable_;
    bool grad_enabled_;
};

// Lightweight handle into a tape.
template <class S>
struct Var {
    Tape<S>* tape = nullptr;
    int idx = -1;

    const Tensor<S>& val() const { return tape->val(idx); }
    const Tensor<S>& grad() const { return tape->node(idx).grad; }
    bool needs_grad() const { return tape->node(idx).needs_grad; }
};

template <class S>
Var<S> constant(Tape<S>& t, Tensor<S> v) {
    return {&t, t.new_node(std::move(v), false)};
}

template <class S>
Var<S> input(Tape<S>& t, Tensor<S> v, bool needs_grad = false) {
    return {&t, t.new_node(std::move(v), needs_grad)};
}

template <class S>
Var<S> param(Tape<S>& t, ParamStore<S>& ps, int id) {
    Var<S> v{&t, t.new_node(ps.value(id), t.store_trainable(&ps))};
    t.node(v.idx).param_id = id;
    t.node(v.idx).store = &ps;
    return v;
}

}  // namespace lb
