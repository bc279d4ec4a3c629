#include "backbone.hpp"

#include <sstream>

namespace dsam {

void BackboneSpec::validate() const {
    if (input_channels < 1) throw ConfigError("backbone: input_channels must be >= 1");
    if (input_size < 1) throw ConfigError("backbone: input_size must be >= 1");
    if (stages.empty()) throw ConfigError("backbone: needs at least one stage");
    bool any_tap = false;
    bool seen_fc = false;
    for (const auto& st : stages) {
        if (st.kind != "conv" && st.kind != "fc") {
            throw ConfigError("backbone stage '" + st.name + "': unknown kind '" + st.kind + "'");
        }
        if (st.out_channels < 1) {
            throw ConfigError("backbone stage '" + st.name + "': out_channels must be >= 1");
        }
        if (st.kind == "conv" && seen_fc) {
            throw ConfigError("backbone stage '" + st.name + "': conv stage after fc stage");
        }
        if (st.kind == "fc") seen_fc = true;
        any_tap = any_tap || st.tap;
    }
    if (!any_tap) throw ConfigError("backbone: at least one stage must be a tap");
    if (!stages.back().tap) throw ConfigError("backbone: the last stage must be a tap");
}

BackboneSpec backbone_spec_by_name(const std::string& name) {
    if (name == "toy4") {
        BackboneSpec spec;
        spec.id = "toy4";
        spec.input_channels = 3;
        spec.input_size = 32;
        spec.downsample = DownsampleKind::max_pool;
        const std::int64_t channels[4] = {8, 16, 24, 32};
        for (int k = 0; k < 4; ++k) {
            StageSpec st;
            st.name = "stage" + std::to_string(k + 1);
            st.out_channels = channels[k];
            st.pool = 2;
            spec.stages.push_back(st);
        }
        return spec;
    }
    if (name == "toy4fc") {
        BackboneSpec spec = backbone_spec_by_name("toy4");
        spec.id = "toy4fc";
        StageSpec st;
        st.name = "fc5";
        st.kind = "fc";
        st.out_channels = 64;
        spec.stages.push_back(st);
        return spec;
    }
    throw ConfigError("unknown backbone '" + name + "' (builtin: toy4, toy4fc)");
}

Backbone::Backbone(const BackboneSpec& spec) : spec_(spec) {
    spec_.validate();
    std::int64_t channels = spec_.input_channels;
    std::int64_t size = spec_.input_size;
    std::int64_t stride = 1;
    bool collapsed = false;
    for (std::size_t k = 0; k < spec_.stages.size(); ++k) {
        const StageSpec& st = spec_.stages[k];
        Stage stage;
        stage.spec = st;
        if (st.kind == "conv") {
            stage.conv = std::make_unique<Conv2d>(channels, st.out_channels, st.ksize, st.stride,
                                                  st.pad, spec_.id + "." + st.name);
            size = (size + 2 * st.pad - st.ksize) / st.stride + 1;
            stride *= st.stride;
            if (st.pool > 1) {
                if (size % st.pool != 0) {
                    throw ConfigError("backbone stage '" + st.name + "': spatial size " +
                                      std::to_string(size) + " not divisible by pool " +
                                      std::to_string(st.pool));
                }
                size /= st.pool;
                stride *= st.pool;
            }
        } else {
            stage.fc = std::make_unique<Linear>(channels * size * size, st.out_channels,
                                                spec_.id + "." + st.name);
            size = 1;
            collapsed = true;
        }
        channels = st.out_channels;
        if (st.tap) {
            TapInfo tap;
            tap.name = st.name;
            tap.channels = channels;
            tap.stride = collapsed ? spec_.input_size : stride;
            tap.collapsed = collapsed;
            taps_.push_back(tap);
            tap_stage_.push_back(k);
        }
        stages_.push_back(std::move(stage));
    }
    for (std::size_t t = 1; t < taps_.size(); ++t) {
        if (taps_[t].stride < taps_[t - 1].stride) {
            throw ConfigError("backbone: tap strides must be non-decreasing");
        }
    }
}

void Backbone::init_uniform(Rng& rng) {
    for (auto& stage : stages_) {
        if (stage.conv) stage.conv->init_uniform(rng);
        if (stage.fc) stage.fc->init_uniform(rng);
    }
}

std::vector<Tensor> Backbone::forward(const Tensor& x, BackboneCache* cache) const {
    check_dim("backbone", "channels", x.c(), spec_.input_channels);
    ++forward_count_;
    BackboneCache local;
    BackboneCache& cc = cache ? *cache : local;
    cc.stages.resize(stages_.size());
    cc.outputs.resize(stages_.size());

    Tensor cur = x;
    for (std::size_t k = 0; k < stages_.size(); ++k) {
        const Stage& stage = stages_[k];
        StageCache& sc = cc.stages[k];
        sc.input = cur;
        if (stage.conv) {
            sc.pre_act = stage.conv->forward(cur);
            sc.act_out = activate(stage.spec.nonlinearity, sc.pre_act);
            cur = stage.spec.pool > 1 ? max_pool(sc.act_out, stage.spec.pool, &sc.pool)
                                      : sc.act_out;
        } else {
            sc.pre_act = stage.fc->forward(cur);
            sc.act_out = activate(stage.spec.nonlinearity, sc.pre_act);
            cur = sc.act_out;  // already collapsed to (n, units, 1, 1)
        }
        cc.outputs[k] = cur;
    }

    std::vector<Tensor> out;
    out.reserve(taps_.size());
    for (std::size_t t = 0; t < taps_.size(); ++t) out.push_back(cc.outputs[tap_stage_[t]]);
    return out;
}

void Backbone::backward(const BackboneCache& cache, const std::vector<Tensor>& tap_grads) {
    check_dim("backbone backward", "taps", static_cast<std::int64_t>(tap_grads.size()),
              static_cast<std::int64_t>(taps_.size()));

    Tensor chain;  // gradient w.r.t. the current stage output
    for (std::size_t k = stages_.size(); k-- > 0;) {
        const Stage& stage = stages_[k];
        const StageCache& sc = cache.stages[k];

        Tensor d_out;
        if (!chain.empty()) d_out = std::move(chain);
        for (std::size_t t = 0; t < tap_stage_.size(); ++t) {
            if (tap_stage_[t] != k) continue;
            if (d_out.empty()) {
                d_out = tap_grads[t];
            } else {
                for (std::int64_t j = 0; j < d_out.size(); ++j) {
                    d_out.vec()[j] += tap_grads[t].vec()[j];
                }
            }
        }
        if (d_out.empty()) {
            d_out = Tensor::zeros(cache.outputs[k].n(), cache.outputs[k].c(),
                                  cache.outputs[k].h(), cache.outputs[k].w());
        }

        if (stage.conv) {
            Tensor d_act = stage.spec.pool > 1 ? max_pool_backward(sc.pool, d_out)
                                               : std::move(d_out);
            Tensor d_pre = activate_backward(stage.spec.nonlinearity, sc.pre_act, d_act);
            chain = stage.conv->backward(sc.input, d_pre);
        } else {
            Tensor d_pre = activate_backward(stage.spec.nonlinearity, sc.pre_act, d_out);
            chain = stage.fc->backward(sc.input, d_pre);  // keeps the fc input's shape
        }
    }
}

std::vector<Param*> Backbone::params() {
    std::vector<Param*> out;
    for (auto& stage : stages_) {
        if (stage.conv) {
            for (Param* p : stage.conv->params()) out.push_back(p);
        }
        if (stage.fc) {
            for (Param* p : stage.fc->params()) out.push_back(p);
        }
    }
    return out;
}

}  // namespace dsam
