#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/layers.hpp"
#include "core/tensor.hpp"

namespace dsam {

// Spatial reduction applied to the previous-node input when its scale is
// larger than the tap's; mirrors the reduction the backbone itself uses.
enum class DownsampleKind { max_pool, stride_subsample };

DownsampleKind downsample_from_string(const std::string& s);
std::string to_string(DownsampleKind k);

struct AggregationNodeSpec {
    std::int64_t in_channels_prev = 0;
    std::int64_t in_channels_tap = 0;
    std::int64_t out_channels = 0;
    std::int64_t downsample_factor = 1;  // 1 = none
    real dropout_rate = 0.0;             // applied to the prev path, training only
    Nonlinearity nonlinearity = Nonlinearity::relu;
    DownsampleKind downsample = DownsampleKind::max_pool;

    void validate() const;
};

struct AggregationModuleSpec {
    std::vector<AggregationNodeSpec> node_specs;  // node k consumes node k-1 and tap k+1
    std::int64_t num_classes = 0;
    std::string classifier = "global-pool-then-linear";

    void validate() const;
    std::int64_t expected_taps() const { return static_cast<std::int64_t>(node_specs.size()) + 1; }
};

struct NodeCache {
    Tensor input_prev;
    Tensor downsampled;
    Tensor drop_mask;  // empty when dropout was inactive
    Tensor concat_in;
    Tensor pre_act;
    PoolCache pool;
};

// Fusion unit: downsample prev to the tap's scale, optionally drop out the
// prev path, concatenate channels, 1x1 convolution, nonlinearity. There is
// no normalization anywhere in the node.
class AggregationNode {
public:
    AggregationNode(const AggregationNodeSpec& spec, const std::string& name);

    Tensor forward(const Tensor& prev, const Tensor& tap, bool training, Rng* rng,
                   NodeCache* cache = nullptr) const;
    // Accumulates conv gradients; returns gradients for (prev, tap).
    std::pair<Tensor, Tensor> backward(const NodeCache& cache, const Tensor& grad_out);

    void init_uniform(Rng& rng);
    std::vector<Param*> params() { return conv_.params(); }
    const AggregationNodeSpec& spec() const { return spec_; }
    Conv2d& conv() { return conv_; }

    // Op kinds in execution order, for structural checks.
    std::vector<std::string> op_kinds() const;

private:
    AggregationNodeSpec spec_;
    Conv2d conv_;
};

struct ModuleCache {
    std::vector<NodeCache> nodes;
    Tensor last_out;  // final node activation
    Tensor pooled;    // pre-classifier pooled activation
};

// Domain-specialist branch: stacked aggregation nodes over the backbone taps
// followed by a global-pool + linear classifier head emitting logits.
class AggregationModule {
public:
    AggregationModule(const AggregationModuleSpec& spec, const std::string& name);

    // taps ordered shallowest to deepest; node 1 consumes taps 1-2, node k
    // consumes the previous output and tap k+1. Returns logits
    // (batch, num_classes, 1, 1); softmax is applied by the caller.
    Tensor forward(const std::vector<Tensor>& taps, bool training, Rng* rng,
                   ModuleCache* cache = nullptr) const;
    // Returns per-tap gradients; accumulates node/classifier gradients.
    std::vector<Tensor> backward(const ModuleCache& cache, const Tensor& grad_logits);

    // Pre-classifier pooled activation (batch, feature_dim, 1, 1).
    Tensor features(const std::vector<Tensor>& taps) const;
    std::int64_t feature_dim() const { return spec_.node_specs.back().out_channels; }

    void init_uniform(Rng& rng);
    std::vector<Param*> params();
    const AggregationModuleSpec& spec() const { return spec_; }
    std::vector<AggregationNode>& nodes() { return nodes_; }
    Linear& classifier() { return classifier_; }

    std::vector<std::string> op_kinds() const;

private:
    void check_taps(const std::vector<Tensor>& taps) const;

    AggregationModuleSpec spec_;
    std::vector<AggregationNode> nodes_;
    Linear classifier_;
    std::string name_;
};

// Reinterprets a rank-2 activation (batch, features) as a collapsed feature
// map (batch, features, 1, 1); values are preserved bit-identically.
Tensor collapse_fc_output(const Matrix& vector_output);

// Per-sample flatten of a feature map back to (batch, features).
Matrix flatten_features(const Tensor& map);

}  // namespace dsam
