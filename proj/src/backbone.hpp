#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "aggregation.hpp"
#include "core/layers.hpp"

namespace dsam {

struct TapInfo {
    std::string name;
    std::int64_t channels = 0;
    std::int64_t stride = 1;  // cumulative spatial reduction w.r.t. the input
    bool collapsed = false;   // fully connected tap (h = w = 1)
};

struct StageSpec {
    std::string name;
    std::string kind = "conv";       // "conv" | "fc"
    std::int64_t out_channels = 0;   // conv: channels, fc: units
    std::int64_t ksize = 3;
    std::int64_t stride = 1;
    std::int64_t pad = 1;
    std::int64_t pool = 1;           // max-pool factor after the nonlinearity, 1 = none
    Nonlinearity nonlinearity = Nonlinearity::relu;
    bool tap = true;
};

struct BackboneSpec {
    std::string id = "custom";
    std::int64_t input_channels = 3;
    std::int64_t input_size = 32;
    DownsampleKind downsample = DownsampleKind::max_pool;
    std::vector<StageSpec> stages;

    void validate() const;
};

// Builtin specs: "toy4" (4 conv stages) and "toy4fc" (toy4 plus a collapsed
// fully connected tap). Throws ConfigError for unknown names.
BackboneSpec backbone_spec_by_name(const std::string& name);

struct StageCache {
    Tensor input;
    Tensor pre_act;
    Tensor act_out;  // pool input
    PoolCache pool;
};

struct BackboneCache {
    std::vector<StageCache> stages;
    std::vector<Tensor> outputs;  // per-stage outputs (not only taps)
};

// Layered feed-forward classifier trunk exposing one feature map per tap
// point, ordered shallow to deep.
class Backbone {
public:
    explicit Backbone(const BackboneSpec& spec);

    Backbone(const Backbone&) = delete;
    Backbone& operator=(const Backbone&) = delete;
    Backbone(Backbone&&) = default;
    Backbone& operator=(Backbone&&) = default;

    const std::vector<TapInfo>& taps() const { return taps_; }
    const BackboneSpec& spec() const { return spec_; }

    // One FeatureMap per tap point; fc taps come out collapsed (h = w = 1).
    std::vector<Tensor> forward(const Tensor& x, BackboneCache* cache = nullptr) const;
    // Accumulates parameter gradients from per-tap output gradients.
    void backward(const BackboneCache& cache, const std::vector<Tensor>& tap_grads);

    void init_uniform(Rng& rng);
    std::vector<Param*> params();

    // Diagnostic only (not synchronized): number of forward invocations.
    std::uint64_t forward_count() const { return forward_count_; }

private:
    struct Stage {
        StageSpec spec;
        std::unique_ptr<Conv2d> conv;
        std::unique_ptr<Linear> fc;
    };

    BackboneSpec spec_;
    std::vector<Stage> stages_;
    std::vector<TapInfo> taps_;
    std::vector<std::size_t> tap_stage_;  // stage index per tap
    mutable std::uint64_t forward_count_ = 0;
};

}  // namespace dsam
