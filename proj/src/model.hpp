#pragma once

#include <cstdint>
#include <vector>

#include "backbone.hpp"

namespace dsam {

// Source-domain identifier: 0-based index into the module list Λ. Target
// domains carry the distinct marker kTargetDomain.
constexpr int kTargetDomain = -1;

struct FeatureResult {
    Matrix features;                 // one l2-normalized row per sample
    std::vector<bool> zero_guarded;  // rows whose activation norm fell below epsilon
};

struct RoutedCache {
    BackboneCache backbone;
    ModuleCache module;
};

// Options for deriving a module spec from a backbone's tap list. Node k's
// output width defaults to the channel count of the tap it consumes.
struct ModuleOptions {
    std::vector<std::int64_t> node_out_channels;  // empty = per-tap default
    real dropout_rate = 0.0;
    Nonlinearity nonlinearity = Nonlinearity::relu;
};

AggregationModuleSpec derive_module_spec(const Backbone& backbone, std::int64_t num_classes,
                                         const ModuleOptions& options = {});

// Shared trunk Θ plus one aggregation module per source domain.
class DsamModel {
public:
    // S independently initialized modules drawn from one seed stream; the
    // backbone's parameters are left untouched.
    DsamModel(Backbone backbone, const AggregationModuleSpec& module_spec,
              std::int64_t num_sources, std::uint64_t init_seed);

    std::int64_t num_sources() const { return static_cast<std::int64_t>(modules_.size()); }
    std::int64_t num_classes() const { return module_spec_.num_classes; }

    // Routed pass: only the domain's own module is evaluated.
    Tensor forward_routed(const Tensor& batch, int domain, bool training = false,
                          Rng* rng = nullptr, RoutedCache* cache = nullptr) const;
    // Broadcast pass: the backbone runs once, its taps are shared by all S
    // modules; result[i] matches forward_routed(batch, i).
    std::vector<Tensor> forward_all(const Tensor& batch) const;

    FeatureResult extract_backbone_features(const Tensor& batch) const;
    std::vector<FeatureResult> extract_module_features(const Tensor& batch) const;

    Backbone& backbone() { return backbone_; }
    const Backbone& backbone() const { return backbone_; }
    std::vector<AggregationModule>& modules() { return modules_; }
    const std::vector<AggregationModule>& modules() const { return modules_; }
    const AggregationModuleSpec& module_spec() const { return module_spec_; }

    std::vector<Param*> params();

private:
    void check_domain(int domain) const;

    Backbone backbone_;
    AggregationModuleSpec module_spec_;
    std::vector<AggregationModule> modules_;
};

struct PlainCache {
    BackboneCache backbone;
    Tensor last_out;
    Tensor pooled;
};

// Pooled-source baseline: the same trunk with a single global-pool + linear
// classifier and no aggregation modules.
class DeepAllModel {
public:
    DeepAllModel(Backbone backbone, std::int64_t num_classes, std::uint64_t init_seed);

    std::int64_t num_classes() const { return head_.out_features; }

    Tensor forward(const Tensor& batch, PlainCache* cache = nullptr) const;
    void backward(const PlainCache& cache, const Tensor& grad_logits);

    FeatureResult extract_backbone_features(const Tensor& batch) const;

    Backbone& backbone() { return backbone_; }
    const Backbone& backbone() const { return backbone_; }
    Linear& head() { return head_; }

    std::vector<Param*> params();

private:
    Backbone backbone_;
    Linear head_;
};

// Flatten + l2-normalize per sample with the zero-norm epsilon guard.
FeatureResult l2_normalized_features(const Tensor& activation);

}  // namespace dsam
