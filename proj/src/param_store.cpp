#include "drbl/param_store.hpp"

namespace drbl {

namespace {

template <typename Map>
auto& lookup(Map& map, const std::string& path, const char* kind) {
    auto it = map.find(path);
    if (it == map.end()) throw ConfigError("params", std::string("unknown ") + kind + " '" + path + "'");
    return it->second;
}

} // namespace

void ParamStore::add(const std::string& path, Tensor value) {
    if (params_.count(path)) throw ConfigError("params", "duplicate parameter '" + path + "'");
    grads_[path] = Tensor(value.shape());
    params_[path] = std::move(value);
}

void ParamStore::add_buffer(const std::string& path, Tensor value) {
    if (buffers_.count(path)) throw ConfigError("params", "duplicate buffer '" + path + "'");
    buffers_[path] = std::move(value);
}

Tensor& ParamStore::param(const std::string& path) { return lookup(params_, path, "parameter"); }
const Tensor& ParamStore::param(const std::string& path) const { return lookup(params_, path, "parameter"); }
Tensor& ParamStore::grad(const std::string& path) { return lookup(grads_, path, "gradient"); }
const Tensor& ParamStore::grad(const std::string& path) const { return lookup(grads_, path, "gradient"); }
Tensor& ParamStore::buffer(const std::string& path) { return lookup(buffers_, path, "buffer"); }
const Tensor& ParamStore::buffer(const std::string& path) const { return lookup(buffers_, path, "buffer"); }

void ParamStore::accumulate_grad(const std::string& path, const Tensor::Vector& delta) {
    Tensor& g = grad(path);
    if (static_cast<std::size_t>(delta.size()) != g.size()) {
        throw DimensionError("gradient for '" + path + "' has " + std::to_string(delta.size()) +
                             " values, parameter has shape " + shape_string(g.shape()));
    }
    g.data() += delta;
}

void ParamStore::zero_grads() {
    for (auto& [path, g] : grads_) g.data().setZero();
}

std::vector<std::string> ParamStore::paths() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [path, value] : params_) out.push_back(path);
    return out;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [path, value] : params_) n += value.size();
    return n;
}

bool is_weight_matrix(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string leaf = dot == std::string::npos ? path : path.substr(dot + 1);
    return !leaf.empty() && leaf.front() == 'W';
}

} // namespace drbl
