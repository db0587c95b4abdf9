#include "survmamba/autograd.hpp"

#include "survmamba/error.hpp"

namespace survmamba {

Parameter& ParameterSet::add(std::string name, Tensor value) {
    if (by_name_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    params_.push_back(std::make_unique<Parameter>(Parameter{std::move(name), std::move(value)}));
    Parameter* p = params_.back().get();
    by_name_.emplace(p->name, p);
    return *p;
}

Parameter* ParameterSet::find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

const Parameter* ParameterSet::find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
}

Parameter& ParameterSet::at(const std::string& name) {
    Parameter* p = find(name);
    if (!p) throw ConfigError("unknown parameter '" + name + "'");
    return *p;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p->value.zero_grad();
}

const Tensor& Var::value() const { return tape->value(id); }

Tape::Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}

Var Tape::constant(Tensor value) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
    Node& n = nodes_.emplace_back();
    n.ref = &p.value;
    n.param = grad_enabled_ ? &p : nullptr;
    n.needs_grad = grad_enabled_;
    const std::size_t id = nodes_.size() - 1;
    param_nodes_.emplace(&p, id);
    return Var{this, id};
}

Var Tape::push(Tensor value, std::span<const Var> parents, Backward backward) {
    bool needs = false;
    if (grad_enabled_) {
        for (const Var& v : parents) needs = needs || nodes_[v.id].needs_grad;
    }
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.needs_grad = needs;
    if (needs) n.backward = std::move(backward);
    return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.value;
}

std::span<double> Tape::accum(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape != this) throw Error("backward: variable belongs to another tape");
    if (!grad_enabled_) throw Error("backward: tape was built with gradients disabled");
    if (value(root.id).size() != 1) {
        throw DimensionError("backward: root must be a scalar, got shape " + shape_str(value(root.id).shape()));
    }
    accum(root.id)[0] += 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
        if (n.param) {
            auto g = n.param->value.grad();
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
        }
    }
}

}  // namespace survmamba
