#include "aggregation.hpp"

#include <sstream>

namespace dsam {

DownsampleKind downsample_from_string(const std::string& s) {
    if (s == "max_pool") return DownsampleKind::max_pool;
    if (s == "stride_subsample") return DownsampleKind::stride_subsample;
    throw ConfigError("unknown downsample kind '" + s +
                      "' (expected max_pool or stride_subsample)");
}

std::string to_string(DownsampleKind k) {
    return k == DownsampleKind::max_pool ? "max_pool" : "stride_subsample";
}

void AggregationNodeSpec::validate() const {
    if (in_channels_prev < 1) throw ConfigError("aggregation node: in_channels_prev must be >= 1");
    if (in_channels_tap < 1) throw ConfigError("aggregation node: in_channels_tap must be >= 1");
    if (out_channels < 1) throw ConfigError("aggregation node: out_channels must be >= 1");
    if (downsample_factor < 1) throw ConfigError("aggregation node: downsample_factor must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ConfigError("aggregation node: dropout_rate must be in [0, 1)");
    }
}

void AggregationModuleSpec::validate() const {
    if (node_specs.empty()) throw ConfigError("aggregation module: needs at least one node");
    if (num_classes < 1) throw ConfigError("aggregation module: num_classes must be >= 1");
    if (classifier != "global-pool-then-linear") {
        throw ConfigError("aggregation module: unknown classifier '" + classifier + "'");
    }
    for (const auto& ns : node_specs) ns.validate();
    for (std::size_t k = 1; k < node_specs.size(); ++k) {
        if (node_specs[k].in_channels_prev != node_specs[k - 1].out_channels) {
            std::ostringstream os;
            os << "aggregation module: node " << k << " in_channels_prev ("
               << node_specs[k].in_channels_prev << ") must equal node " << k - 1
               << " out_channels (" << node_specs[k - 1].out_channels << ")";
            throw ConfigError(os.str());
        }
    }
}

AggregationNode::AggregationNode(const AggregationNodeSpec& spec, const std::string& name)
    : spec_(spec),
      conv_(spec.in_channels_prev + spec.in_channels_tap, spec.out_channels, 1, 1, 0, name) {
    spec_.validate();
}

void AggregationNode::init_uniform(Rng& rng) { conv_.init_uniform(rng); }

Tensor AggregationNode::forward(const Tensor& prev, const Tensor& tap, bool training, Rng* rng,
                                NodeCache* cache) const {
    check_dim("aggregation node", "batch", tap.n(), prev.n());
    check_dim("aggregation node", "channels (prev)", prev.c(), spec_.in_channels_prev);
    check_dim("aggregation node", "channels (tap)", tap.c(), spec_.in_channels_tap);
    const std::int64_t f = spec_.downsample_factor;
    if (prev.h() % f != 0 || prev.w() % f != 0 || prev.h() / f != tap.h() ||
        prev.w() / f != tap.w()) {
        std::ostringstream os;
        os << "aggregation node: height/width " << prev.h() << "x" << prev.w()
           << " cannot be downsampled by factor " << f << " to match tap " << tap.h() << "x"
           << tap.w();
        throw ShapeError(os.str());
    }

    NodeCache local;
    NodeCache& cc = cache ? *cache : local;
    cc.input_prev = prev;

    Tensor ds;
    if (f == 1) {
        ds = prev;
    } else if (spec_.downsample == DownsampleKind::max_pool) {
        ds = max_pool(prev, f, &cc.pool);
    } else {
        ds = subsample(prev, f);
    }

    const bool drop = training && spec_.dropout_rate > 0.0;
    if (drop) {
        if (!rng) throw ConfigError("aggregation node: dropout requires an rng in training mode");
        ds = dropout(ds, spec_.dropout_rate, *rng, cc.drop_mask);
    } else {
        cc.drop_mask = Tensor();
    }
    cc.downsampled = ds;

    cc.concat_in = concat_channels(ds, tap);
    cc.pre_act = conv_.forward(cc.concat_in);
    return activate(spec_.nonlinearity, cc.pre_act);
}

std::pair<Tensor, Tensor> AggregationNode::backward(const NodeCache& cache,
                                                    const Tensor& grad_out) {
    Tensor dz = activate_backward(spec_.nonlinearity, cache.pre_act, grad_out);
    Tensor dconcat = conv_.backward(cache.concat_in, dz);

    Tensor d_ds(cache.downsampled.n(), cache.downsampled.c(), cache.downsampled.h(),
                cache.downsampled.w());
    Tensor d_tap(grad_out.n(), spec_.in_channels_tap, cache.downsampled.h(),
                 cache.downsampled.w());
    split_channels(dconcat, d_ds, d_tap);

    if (!cache.drop_mask.empty()) d_ds = dropout_backward(cache.drop_mask, d_ds);

    Tensor d_prev;
    const std::int64_t f = spec_.downsample_factor;
    if (f == 1) {
        d_prev = std::move(d_ds);
    } else if (spec_.downsample == DownsampleKind::max_pool) {
        d_prev = max_pool_backward(cache.pool, d_ds);
    } else {
        d_prev = subsample_backward(cache.input_prev.h(), cache.input_prev.w(), f, d_ds);
    }
    return {std::move(d_prev), std::move(d_tap)};
}

std::vector<std::string> AggregationNode::op_kinds() const {
    std::vector<std::string> ops;
    if (spec_.downsample_factor > 1) ops.push_back(to_string(spec_.downsample));
    if (spec_.dropout_rate > 0.0) ops.push_back("dropout");
    ops.push_back("concat");
    ops.push_back("conv1x1");
    ops.push_back(to_string(spec_.nonlinearity));
    return ops;
}

AggregationModule::AggregationModule(const AggregationModuleSpec& spec, const std::string& name)
    : spec_(spec),
      classifier_(spec.node_specs.empty() ? 1 : spec.node_specs.back().out_channels,
                  spec.num_classes, name + ".classifier"),
      name_(name) {
    spec_.validate();
    nodes_.reserve(spec_.node_specs.size());
    for (std::size_t k = 0; k < spec_.node_specs.size(); ++k) {
        nodes_.emplace_back(spec_.node_specs[k], name + ".node" + std::to_string(k));
    }
}

void AggregationModule::init_uniform(Rng& rng) {
    for (auto& node : nodes_) node.init_uniform(rng);
    classifier_.init_uniform(rng);
}

void AggregationModule::check_taps(const std::vector<Tensor>& taps) const {
    if (static_cast<std::int64_t>(taps.size()) != spec_.expected_taps()) {
        std::ostringstream os;
        os << name_ << ": expected " << spec_.expected_taps() << " taps, got " << taps.size();
        throw ShapeError(os.str());
    }
}

Tensor AggregationModule::forward(const std::vector<Tensor>& taps, bool training, Rng* rng,
                                  ModuleCache* cache) const {
    check_taps(taps);
    ModuleCache local;
    ModuleCache& cc = cache ? *cache : local;
    cc.nodes.resize(nodes_.size());

    Tensor out;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
        const Tensor& prev = (k == 0) ? taps[0] : out;
        try {
            out = nodes_[k].forward(prev, taps[k + 1], training, rng, &cc.nodes[k]);
        } catch (const ShapeError& e) {
            throw ShapeError(name_ + " node " + std::to_string(k) + ": " + e.what());
        }
    }
    cc.last_out = out;
    cc.pooled = global_avg_pool(out);
    return classifier_.forward(cc.pooled);
}

std::vector<Tensor> AggregationModule::backward(const ModuleCache& cache,
                                                const Tensor& grad_logits) {
    Tensor dpooled = classifier_.backward(cache.pooled, grad_logits);
    Tensor dout = global_avg_pool_backward(cache.last_out.h(), cache.last_out.w(), dpooled);

    std::vector<Tensor> tap_grads(nodes_.size() + 1);
    for (std::size_t k = nodes_.size(); k-- > 0;) {
        auto [d_prev, d_tap] = nodes_[k].backward(cache.nodes[k], dout);
        tap_grads[k + 1] = std::move(d_tap);
        dout = std::move(d_prev);
    }
    tap_grads[0] = std::move(dout);
    return tap_grads;
}

Tensor AggregationModule::features(const std::vector<Tensor>& taps) const {
    ModuleCache cache;
    forward(taps, /*training=*/false, nullptr, &cache);
    return cache.pooled;
}

std::vector<Param*> AggregationModule::params() {
    std::vector<Param*> out;
    for (auto& node : nodes_) {
        for (Param* p : node.params()) out.push_back(p);
    }
    for (Param* p : classifier_.params()) out.push_back(p);
    return out;
}

std::vector<std::string> AggregationModule::op_kinds() const {
    std::vector<std::string> ops;
    for (const auto& node : nodes_) {
        for (auto& op : node.op_kinds()) ops.push_back(op);
    }
    ops.push_back("global_avg_pool");
    ops.push_back("linear");
    return ops;
}

Tensor collapse_fc_output(const Matrix& vector_output) {
    if (!vector_output.valid()) {
        throw ShapeError("collapse_fc_output: input is not a valid rank-2 activation");
    }
    Tensor out(vector_output.rows, vector_output.cols, 1, 1);
    out.vec() = vector_output.data;
    return out;
}

Matrix flatten_features(const Tensor& map) {
    Matrix out(map.n(), map.sample_size());
    out.data = map.vec();
    return out;
}

}  // namespace dsam
