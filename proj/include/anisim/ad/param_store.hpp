#pragma once

// Named trainable parameters. The map is ordered by name so every iteration
// over the store is deterministic, which the bit-reproducibility tests rely on.

#include <map>
#include <string>

#include "anisim/ad/tape.hpp"
#include "anisim/ad/tensor.hpp"

namespace anisim::ad {

class ParamStore {
public:
    void add(const std::string& name, Tensor value) {
        check_contract(params_.find(name) == params_.end(),
                       "ParamStore: duplicate parameter '" + name + "'");
        check_contract(value.defined(), "ParamStore: undefined parameter '" + name + "'");
        params_.emplace(name, std::move(value));
    }

    bool has(const std::string& name) const { return params_.find(name) != params_.end(); }

    const Tensor& get(const std::string& name) const {
        auto it = params_.find(name);
        check_contract(it != params_.end(), "ParamStore: unknown parameter '" + name + "'");
        return it->second;
    }

    void set(const std::string& name, Tensor value) {
        auto it = params_.find(name);
        check_contract(it != params_.end(), "ParamStore: unknown parameter '" + name + "'");
        check_contract(it->second.same_shape(value),
                       "ParamStore: shape change for parameter '" + name + "'");
        it->second = std::move(value);
    }

    const std::map<std::string, Tensor>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }

    // Registers every parameter as a leaf on the tape and returns the watched
    // handles; build the step's graph from these, not from get().
    std::map<std::string, Tensor> watch_all(Tape& tape) const {
        std::map<std::string, Tensor> watched;
        for (const auto& [name, value] : params_) watched.emplace(name, tape.watch(value));
        return watched;
    }

private:
    std::map<std::string, Tensor> params_;
};

}  // namespace anisim::ad
