#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "survmamba/tensor.hpp"

namespace survmamba {

struct Parameter {
    std::string name;
    Tensor value;
};

/// Owns every learnable tensor of a model under a unique dotted name.
///
/// Parameters live behind stable addresses, so blocks may keep raw pointers
/// into the set for as long as the set itself is alive (moves included).
class ParameterSet {
public:
    ParameterSet() = default;
    ParameterSet(const ParameterSet&) = delete;
    ParameterSet& operator=(const ParameterSet&) = delete;
    ParameterSet(ParameterSet&&) = default;
    ParameterSet& operator=(ParameterSet&&) = default;

    Parameter& add(std::string name, Tensor value);
    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;
    Parameter& at(const std::string& name);

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.cbegin(); }
    auto end() const { return params_.cend(); }

    void zero_grad();

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::unordered_map<std::string, Parameter*> by_name_;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode recorder. Nodes are appended in evaluation order, so a
/// reverse sweep over the node list is a valid topological order.
///
/// A tape built with grad disabled stores values only and never touches
/// parameter gradients; such tapes are safe to use concurrently against a
/// shared model.
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    explicit Tape(bool grad_enabled = true);

    bool grad_enabled() const { return grad_enabled_; }

    Var constant(Tensor value);
    Var param(Parameter& p);

    // Appends an op result. `backward` is kept only when some parent needs a
    // gradient; it must add into parent grads through accum().
    Var push(Tensor value, std::span<const Var> parents, Backward backward);
    Var push(Tensor value, std::initializer_list<Var> parents, Backward backward) {
        return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
    }

    const Tensor& value(std::size_t id) const;
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    bool needs_grad(Var v) const { return needs_grad(v.id); }

    // Incoming gradient of a node (empty when nothing flowed into it).
    std::span<const double> grad(std::size_t id) const { return nodes_[id].grad; }
    // Gradient buffer of a parent, allocated as zeros on first use.
    std::span<double> accum(std::size_t id);

    // Seeds d(root)/d(root) = 1 and sweeps; parameter leaves add their
    // gradient into Parameter::value.grad().
    void backward(Var root);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        const Tensor* ref = nullptr;
        std::vector<double> grad;
        Backward backward;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };

    bool grad_enabled_;
    std::deque<Node> nodes_;  // stable references across push()
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace survmamba
