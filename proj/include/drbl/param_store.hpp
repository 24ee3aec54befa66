#ifndef DRBL_PARAM_STORE_HPP
#define DRBL_PARAM_STORE_HPP

#include <map>
#include <string>
#include <vector>

#include "drbl/tensor.hpp"

namespace drbl {

/// Named trainable parameters with parallel gradients, plus non-trainable
/// buffers (batch-norm running statistics). Paths such as
/// "block1.layer2.forward.W_f" are stable; iteration is sorted by path.
class ParamStore {
public:
    /// Registers a parameter and a zero gradient of the same shape.
    void add(const std::string& path, Tensor value);
    void add_buffer(const std::string& path, Tensor value);

    bool contains(const std::string& path) const { return params_.count(path) != 0; }
    bool contains_buffer(const std::string& path) const { return buffers_.count(path) != 0; }

    Tensor& param(const std::string& path);
    const Tensor& param(const std::string& path) const;
    Tensor& grad(const std::string& path);
    const Tensor& grad(const std::string& path) const;
    Tensor& buffer(const std::string& path);
    const Tensor& buffer(const std::string& path) const;

    /// Adds `delta` into the gradient at `path`; shapes must agree.
    void accumulate_grad(const std::string& path, const Tensor::Vector& delta);

    void zero_grads();

    std::vector<std::string> paths() const;
    std::size_t parameter_count() const;

    const std::map<std::string, Tensor>& params() const { return params_; }
    const std::map<std::string, Tensor>& grads() const { return grads_; }
    std::map<std::string, Tensor>& grads() { return grads_; }
    const std::map<std::string, Tensor>& buffers() const { return buffers_; }

    /// True when both stores hold identical paths, shapes and values (bitwise).
    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        return a.params_ == b.params_ && a.buffers_ == b.buffers_;
    }

private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, Tensor> grads_;
    std::map<std::string, Tensor> buffers_;
};

/// Weight matrices are the leaves whose name starts with 'W'. Only these are
/// subject to L2 decay.
bool is_weight_matrix(const std::string& path);

} // namespace drbl

#endif // DRBL_PARAM_STORE_HPP
