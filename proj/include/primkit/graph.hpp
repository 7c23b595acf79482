#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "primkit/layers.hpp"

namespace primkit::nn {

template <typename Scalar>
class Sequential : public Layer<Scalar> {
public:
    Sequential() = default;

    Sequential& add(std::unique_ptr<Layer<Scalar>> layer) {
        children_.push_back(std::move(layer));
        return *this;
    }

    template <typename L, typename... Args>
    L* emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        children_.push_back(std::move(layer));
        return raw;
    }

    std::string kind() const override { return "sequential"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        Tensor<Scalar> cur = x;
        for (auto& child : children_) {
            cur = child->forward(cur);
        }
        return cur;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        Tensor<Scalar> cur = gy;
        for (auto it = children_.rbegin(); it != children_.rend(); ++it) {
            cur = (*it)->backward(cur);
        }
        return cur;
    }

    void set_mode(Mode m) override {
        this->mode_ = m;
        for (auto& child : children_) child->set_mode(m);
    }

    void init_params(rng::Stream& rs) override {
        for (auto& child : children_) child->init_params(rs);
    }

    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        for (size_t i = 0; i < children_.size(); ++i) {
            children_[i]->collect_params(child_name(prefix, i), out);
        }
    }

    void collect_state(const std::string& prefix,
                       std::vector<ArrayRef<Scalar>>& out) override {
        for (size_t i = 0; i < children_.size(); ++i) {
            children_[i]->collect_state(child_name(prefix, i), out);
        }
    }

    void disable_stochastic() override {
        for (auto& child : children_) child->disable_stochastic();
    }

    void reseed(uint64_t seed) override {
        for (size_t i = 0; i < children_.size(); ++i) {
            children_[i]->reseed(rng::derive(seed, "child", i));
        }
    }

    size_t size() const { return children_.size(); }
    Layer<Scalar>* at(size_t i) { return children_[i].get(); }

    void visit(const std::function<void(Layer<Scalar>*)>& fn) {
        for (auto& child : children_) {
            fn(child.get());
            if (auto* seq = dynamic_cast<Sequential<Scalar>*>(child.get())) {
                seq->visit(fn);
            } else {
                child->visit_children(fn);
            }
        }
    }

private:
    std::string child_name(const std::string& prefix, size_t i) const {
        return prefix + (prefix.empty() ? "" : ".") + std::to_string(i) + "." +
               children_[i]->kind();
    }

    std::vector<std::unique_ptr<Layer<Scalar>>> children_;
};

// y = body(x) + shortcut(x); empty shortcut means identity.
template <typename Scalar>
class Residual : public Layer<Scalar> {
public:
    Residual(std::unique_ptr<Sequential<Scalar>> body,
             std::unique_ptr<Sequential<Scalar>> shortcut = nullptr)
        : body_(std::move(body)), shortcut_(std::move(shortcut)) {}

    std::string kind() const override { return "residual_add"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        Tensor<Scalar> y = body_->forward(x);
        const Tensor<Scalar> s = shortcut_ ? shortcut_->forward(x) : x;
        if (!y.same_shape(s)) {
            throw ShapeError("residual_add: body output " + y.shape_string() +
                             " does not match shortcut " + s.shape_string());
        }
        y.array() += s.array();
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        Tensor<Scalar> gx = body_->backward(gy);
        if (shortcut_) {
            gx.array() += shortcut_->backward(gy).array();
        } else {
            gx.array() += gy.array();
        }
        return gx;
    }

    void set_mode(Mode m) override {
        this->mode_ = m;
        body_->set_mode(m);
        if (shortcut_) shortcut_->set_mode(m);
    }

    void init_params(rng::Stream& rs) override {
        body_->init_params(rs);
        if (shortcut_) shortcut_->init_params(rs);
    }

    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        body_->collect_params(prefix + ".body", out);
        if (shortcut_) shortcut_->collect_params(prefix + ".shortcut", out);
    }

    void collect_state(const std::string& prefix,
                       std::vector<ArrayRef<Scalar>>& out) override {
        body_->collect_state(prefix + ".body", out);
        if (shortcut_) shortcut_->collect_state(prefix + ".shortcut", out);
    }

    void disable_stochastic() override {
        body_->disable_stochastic();
        if (shortcut_) shortcut_->disable_stochastic();
    }

    void reseed(uint64_t seed) override {
        body_->reseed(rng::derive(seed, "body"));
        if (shortcut_) shortcut_->reseed(rng::derive(seed, "shortcut"));
    }

    void visit_children(const std::function<void(Layer<Scalar>*)>& fn) override {
        body_->visit(fn);
        if (shortcut_) shortcut_->visit(fn);
    }

private:
    std::unique_ptr<Sequential<Scalar>> body_;
    std::unique_ptr<Sequential<Scalar>> shortcut_;
};

// y = concat(x, branch(x)) along the channel axis (DenseNet-style growth).
template <typename Scalar>
class ConcatBlock : public Layer<Scalar> {
public:
    explicit ConcatBlock(std::unique_ptr<Sequential<Scalar>> branch)
        : branch_(std::move(branch)) {}

    std::string kind() const override { return "concat"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        if (x.ndim() != 3) {
            throw ShapeError("concat: expected BxCxT, got " + x.shape_string());
        }
        Tensor<Scalar> grown = branch_->forward(x);
        if (grown.ndim() != 3 || grown.dim(0) != x.dim(0) ||
            grown.dim(2) != x.dim(2)) {
            throw ShapeError("concat: branch output " + grown.shape_string() +
                             " incompatible with input " + x.shape_string());
        }
        cin_ = x.dim(1);
        growth_ = grown.dim(1);
        Tensor<Scalar> y({x.dim(0), cin_ + growth_, x.dim(2)});
        for (Index b = 0; b < x.dim(0); ++b) {
            y.slice(b).topRows(cin_) = x.slice(b);
            y.slice(b).bottomRows(growth_) = grown.slice(b);
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        const Index B = gy.dim(0);
        const Index T = gy.dim(2);
        Tensor<Scalar> g_branch({B, growth_, T});
        Tensor<Scalar> gx({B, cin_, T});
        for (Index b = 0; b < B; ++b) {
            gx.slice(b) = gy.slice(b).topRows(cin_);
            g_branch.slice(b) = gy.slice(b).bottomRows(growth_);
        }
        gx.array() += branch_->backward(g_branch).array();
        return gx;
    }

    void set_mode(Mode m) override {
        this->mode_ = m;
        branch_->set_mode(m);
    }
    void init_params(rng::Stream& rs) override { branch_->init_params(rs); }
    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        branch_->collect_params(prefix + ".branch", out);
    }
    void collect_state(const std::string& prefix,
                       std::vector<ArrayRef<Scalar>>& out) override {
        branch_->collect_state(prefix + ".branch", out);
    }
    void disable_stochastic() override { branch_->disable_stochastic(); }
    void reseed(uint64_t seed) override {
        branch_->reseed(rng::derive(seed, "branch"));
    }
    void visit_children(const std::function<void(Layer<Scalar>*)>& fn) override {
        branch_->visit(fn);
    }

private:
    std::unique_ptr<Sequential<Scalar>> branch_;
    Index cin_ = 0, growth_ = 0;
};

// One unshared module per input channel: channel c of BxCxT is processed by
// modules[c] on its own Bx1xT slice and the module outputs are concatenated
// channel-wise, in channel order.
template <typename Scalar>
class ChannelEmbedding : public Layer<Scalar> {
public:
    explicit ChannelEmbedding(
        std::vector<std::unique_ptr<Sequential<Scalar>>> modules)
        : modules_(std::move(modules)) {}

    std::string kind() const override { return "channel_embedding"; }

    Tensor<Scalar> forward(const Tensor<Scalar>& x) override {
        if (x.ndim() != 3 || size_t(x.dim(1)) != modules_.size()) {
            throw ShapeError("channel_embedding: input " + x.shape_string() +
                             " needs one channel per module (" +
                             std::to_string(modules_.size()) + ")");
        }
        B_ = x.dim(0);
        T_ = x.dim(2);
        std::vector<Tensor<Scalar>> outs(modules_.size());
        Index out_channels = 0;
        for (size_t c = 0; c < modules_.size(); ++c) {
            Tensor<Scalar> one({B_, 1, T_});
            for (Index b = 0; b < B_; ++b) {
                one.slice(b).row(0) = x.slice(b).row(Index(c));
            }
            outs[c] = modules_[c]->forward(one);
            out_channels += outs[c].dim(1);
        }
        dims_.resize(modules_.size());
        Tensor<Scalar> y({B_, out_channels, T_});
        Index at = 0;
        for (size_t c = 0; c < modules_.size(); ++c) {
            const Index e = outs[c].dim(1);
            dims_[c] = e;
            for (Index b = 0; b < B_; ++b) {
                y.slice(b).middleRows(at, e) = outs[c].slice(b);
            }
            at += e;
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) override {
        Tensor<Scalar> gx({B_, Index(modules_.size()), T_});
        Index at = 0;
        for (size_t c = 0; c < modules_.size(); ++c) {
            const Index e = dims_[c];
            Tensor<Scalar> g_slice({B_, e, T_});
            for (Index b = 0; b < B_; ++b) {
                g_slice.slice(b) = gy.slice(b).middleRows(at, e);
            }
            Tensor<Scalar> g_one = modules_[c]->backward(g_slice);
            for (Index b = 0; b < B_; ++b) {
                gx.slice(b).row(Index(c)) = g_one.slice(b).row(0);
            }
            at += e;
        }
        return gx;
    }

    void set_mode(Mode m) override {
        this->mode_ = m;
        for (auto& mod : modules_) mod->set_mode(m);
    }
    void init_params(rng::Stream& rs) override {
        for (auto& mod : modules_) mod->init_params(rs);
    }
    void collect_params(const std::string& prefix,
                        std::vector<ArrayRef<Scalar>>& out) override {
        for (size_t c = 0; c < modules_.size(); ++c) {
            modules_[c]->collect_params(prefix + ".ch" + std::to_string(c), out);
        }
    }
    void collect_state(const std::string& prefix,
                       std::vector<ArrayRef<Scalar>>& out) override {
        for (size_t c = 0; c < modules_.size(); ++c) {
            modules_[c]->collect_state(prefix + ".ch" + std::to_string(c), out);
        }
    }
    void disable_stochastic() override {
        for (auto& mod : modules_) mod->disable_stochastic();
    }
    void reseed(uint64_t seed) override {
        for (size_t c = 0; c < modules_.size(); ++c) {
            modules_[c]->reseed(rng::derive(seed, "module", c));
        }
    }
    void visit_children(const std::function<void(Layer<Scalar>*)>& fn) override {
        for (auto& mod : modules_) mod->visit(fn);
    }

    size_t module_count() const { return modules_.size(); }

private:
    std::vector<std::unique_ptr<Sequential<Scalar>>> modules_;
    Index B_ = 0, T_ = 0;
    std::vector<Index> dims_;
};

// Owns a layer stack and exposes whole-graph operations. Forward verifies
// the no-NaN invariant on its output.
template <typename Scalar>
class LayerGraph {
public:
    LayerGraph() = default;
    explicit LayerGraph(std::unique_ptr<Sequential<Scalar>> root)
        : root_(std::move(root)) {}

    LayerGraph(LayerGraph&&) noexcept = default;
    LayerGraph& operator=(LayerGraph&&) noexcept = default;

    Tensor<Scalar> forward(const Tensor<Scalar>& x) {
        Tensor<Scalar> y = root_->forward(x);
        if (!y.all_finite()) {
            throw NumericError("layer graph: non-finite values in forward output");
        }
        return y;
    }

    Tensor<Scalar> backward(const Tensor<Scalar>& gy) {
        return root_->backward(gy);
    }

    void set_mode(Mode m) { root_->set_mode(m); }
    Mode mode() const { return root_->mode(); }

    std::vector<ArrayRef<Scalar>>& params() {
        if (params_.empty()) root_->collect_params("", params_);
        return params_;
    }

    // All persistent arrays: parameters plus normalization state.
    std::vector<ArrayRef<Scalar>> arrays() {
        std::vector<ArrayRef<Scalar>> out = params();
        root_->collect_state("", out);
        return out;
    }

    void zero_grads() {
        for (auto& p : params()) p.grad->set_zero();
    }

    void init_params(uint64_t seed) {
        rng::Stream rs(rng::derive(seed, "init"));
        root_->init_params(rs);
    }

    void reseed_stochastic(uint64_t seed) { root_->reseed(seed); }
    void disable_stochastic() { root_->disable_stochastic(); }

    Index parameter_count() {
        Index n = 0;
        for (auto& p : params()) n += p.value->numel();
        return n;
    }

    Sequential<Scalar>* root() { return root_.get(); }

    void visit(const std::function<void(Layer<Scalar>*)>& fn) {
        root_->visit(fn);
    }

    // snapshot/restore of every persistent array, used for best-epoch
    // checkpointing inside the training loop
    std::vector<Tensor<Scalar>> snapshot_arrays() {
        std::vector<Tensor<Scalar>> out;
        for (auto& a : arrays()) out.push_back(*a.value);
        return out;
    }

    void restore_arrays(const std::vector<Tensor<Scalar>>& snap) {
        auto refs = arrays();
        if (snap.size() != refs.size()) {
            throw ContractError("layer graph: snapshot arity mismatch");
        }
        for (size_t i = 0; i < refs.size(); ++i) *refs[i].value = snap[i];
    }

private:
    std::unique_ptr<Sequential<Scalar>> root_;
    std::vector<ArrayRef<Scalar>> params_;
};

}  // namespace primkit::nn
