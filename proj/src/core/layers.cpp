#include "core/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/parallel.hpp"

namespace dsam {

namespace {
constexpr std::int64_t kBatchChunk = 8;
}

void Param::init_uniform(Rng& rng, std::int64_t fan_in) {
    const real bound = 1.0 / std::sqrt(static_cast<real>(fan_in));
    for (real& v : value.vec()) v = rng.uniform(-bound, bound);
}

Nonlinearity nonlinearity_from_string(const std::string& s) {
    if (s == "relu") return Nonlinearity::relu;
    if (s == "tanh") return Nonlinearity::tanh_fn;
    if (s == "identity") return Nonlinearity::identity;
    throw ConfigError("unknown nonlinearity '" + s + "' (expected relu, tanh or identity)");
}

std::string to_string(Nonlinearity f) {
    switch (f) {
        case Nonlinearity::relu: return "relu";
        case Nonlinearity::tanh_fn: return "tanh";
        case Nonlinearity::identity: return "identity";
    }
    return "relu";
}

Tensor activate(Nonlinearity f, const Tensor& z) {
    Tensor y = z;
    switch (f) {
        case Nonlinearity::relu:
            for (real& v : y.vec()) v = v > 0.0 ? v : 0.0;
            break;
        case Nonlinearity::tanh_fn:
            for (real& v : y.vec()) v = std::tanh(v);
            break;
        case Nonlinearity::identity:
            break;
    }
    return y;
}

Tensor activate_backward(Nonlinearity f, const Tensor& z, const Tensor& dy) {
    Tensor dz = dy;
    switch (f) {
        case Nonlinearity::relu:
            for (std::int64_t i = 0; i < dz.size(); ++i) {
                if (z.vec()[i] <= 0.0) dz.vec()[i] = 0.0;
            }
            break;
        case Nonlinearity::tanh_fn:
            for (std::int64_t i = 0; i < dz.size(); ++i) {
                const real t = std::tanh(z.vec()[i]);
                dz.vec()[i] *= 1.0 - t * t;
            }
            break;
        case Nonlinearity::identity:
            break;
    }
    return dz;
}

Conv2d::Conv2d(std::int64_t in_c, std::int64_t out_c, std::int64_t k, std::int64_t s,
               std::int64_t p, const std::string& name)
    : in_channels(in_c),
      out_channels(out_c),
      ksize(k),
      stride(s),
      pad(p),
      weight(name + ".weight", Tensor::zeros(out_c, in_c, k, k)),
      bias(name + ".bias", Tensor::zeros(1, out_c, 1, 1)) {}

void Conv2d::init_uniform(Rng& rng) {
    const std::int64_t fan_in = in_channels * ksize * ksize;
    weight.init_uniform(rng, fan_in);
    bias.init_uniform(rng, fan_in);
}

Tensor Conv2d::forward(const Tensor& x) const {
    check_dim("Conv2d::forward", "channels", x.c(), in_channels);
    const std::int64_t oh = (x.h() + 2 * pad - ksize) / stride + 1;
    const std::int64_t ow = (x.w() + 2 * pad - ksize) / stride + 1;
    if (oh < 1 || ow < 1) {
        throw ShapeError("Conv2d::forward: height/width " + x.shape_str() +
                         " too small for kernel " + std::to_string(ksize));
    }
    Tensor y(x.n(), out_channels, oh, ow);

    parallel_chunks(x.n(), kBatchChunk, [&](std::int64_t begin, std::int64_t end, int) {
        for (std::int64_t i = begin; i < end; ++i) {
            for (std::int64_t oc = 0; oc < out_channels; ++oc) {
                const real b = bias.value.at(0, oc, 0, 0);
                for (std::int64_t y0 = 0; y0 < oh; ++y0)
                    for (std::int64_t x0 = 0; x0 < ow; ++x0) y.at(i, oc, y0, x0) = b;
                for (std::int64_t ic = 0; ic < in_channels; ++ic) {
                    for (std::int64_t kh = 0; kh < ksize; ++kh) {
                        for (std::int64_t kw = 0; kw < ksize; ++kw) {
                            const real wv = weight.value.at(oc, ic, kh, kw);
                            if (wv == 0.0) continue;
                            for (std::int64_t y0 = 0; y0 < oh; ++y0) {
                                const std::int64_t ih = y0 * stride - pad + kh;
                                if (ih < 0 || ih >= x.h()) continue;
                                for (std::int64_t x0 = 0; x0 < ow; ++x0) {
                                    const std::int64_t iw = x0 * stride - pad + kw;
                                    if (iw < 0 || iw >= x.w()) continue;
                                    y.at(i, oc, y0, x0) += wv * x.at(i, ic, ih, iw);
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& grad_out) {
    check_dim("Conv2d::backward", "channels", grad_out.c(), out_channels);
    check_dim("Conv2d::backward", "batch", grad_out.n(), x.n());
    const std::int64_t oh = grad_out.h();
    const std::int64_t ow = grad_out.w();
    Tensor dx(x.n(), x.c(), x.h(), x.w());

    const std::int64_t chunks = chunk_count(x.n(), kBatchChunk);
    std::vector<Tensor> dw_parts(static_cast<std::size_t>(chunks),
                                 Tensor::zeros(out_channels, in_channels, ksize, ksize));
    std::vector<Tensor> db_parts(static_cast<std::size_t>(chunks),
                                 Tensor::zeros(1, out_channels, 1, 1));

    parallel_chunks(x.n(), kBatchChunk, [&](std::int64_t begin, std::int64_t end, int chunk) {
        Tensor& dw = dw_parts[static_cast<std::size_t>(chunk)];
        Tensor& db = db_parts[static_cast<std::size_t>(chunk)];
        for (std::int64_t i = begin; i < end; ++i) {
            for (std::int64_t oc = 0; oc < out_channels; ++oc) {
                real bsum = 0.0;
                for (std::int64_t y0 = 0; y0 < oh; ++y0) {
                    for (std::int64_t x0 = 0; x0 < ow; ++x0) {
                        const real g = grad_out.at(i, oc, y0, x0);
                        if (g == 0.0) continue;
                        bsum += g;
                        for (std::int64_t ic = 0; ic < in_channels; ++ic) {
                            for (std::int64_t kh = 0; kh < ksize; ++kh) {
                                const std::int64_t ih = y0 * stride - pad + kh;
                                if (ih < 0 || ih >= x.h()) continue;
                                for (std::int64_t kw = 0; kw < ksize; ++kw) {
                                    const std::int64_t iw = x0 * stride - pad + kw;
                                    if (iw < 0 || iw >= x.w()) continue;
                                    dw.at(oc, ic, kh, kw) += g * x.at(i, ic, ih, iw);
                                    dx.at(i, ic, ih, iw) += g * weight.value.at(oc, ic, kh, kw);
                                }
                            }
                        }
                    }
                }
                db.at(0, oc, 0, 0) += bsum;
            }
        }
    });

    for (std::int64_t k = 0; k < chunks; ++k) {
        const auto& dw = dw_parts[static_cast<std::size_t>(k)].vec();
        const auto& db = db_parts[static_cast<std::size_t>(k)].vec();
        for (std::size_t j = 0; j < dw.size(); ++j) weight.grad.vec()[j] += dw[j];
        for (std::size_t j = 0; j < db.size(); ++j) bias.grad.vec()[j] += db[j];
    }
    return dx;
}

Linear::Linear(std::int64_t in_f, std::int64_t out_f, const std::string& name)
    : in_features(in_f),
      out_features(out_f),
      weight(name + ".weight", Tensor::zeros(out_f, in_f, 1, 1)),
      bias(name + ".bias", Tensor::zeros(1, out_f, 1, 1)) {}

void Linear::init_uniform(Rng& rng) {
    weight.init_uniform(rng, in_features);
    bias.init_uniform(rng, in_features);
}

Tensor Linear::forward(const Tensor& x) const {
    check_dim("Linear::forward", "features", x.sample_size(), in_features);
    Tensor y(x.n(), out_features, 1, 1);
    for (std::int64_t i = 0; i < x.n(); ++i) {
        for (std::int64_t o = 0; o < out_features; ++o) {
            real acc = bias.value.at2(0, o);
            for (std::int64_t f = 0; f < in_features; ++f) {
                acc += weight.value.at2(o, f) * x.at2(i, f);
            }
            y.at2(i, o) = acc;
        }
    }
    return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& grad_out) {
    check_dim("Linear::backward", "features", grad_out.sample_size(), out_features);
    Tensor dx(x.n(), x.c(), x.h(), x.w());
    for (std::int64_t i = 0; i < x.n(); ++i) {
        for (std::int64_t o = 0; o < out_features; ++o) {
            const real g = grad_out.at2(i, o);
            if (g == 0.0) continue;
            bias.grad.at2(0, o) += g;
            for (std::int64_t f = 0; f < in_features; ++f) {
                weight.grad.at2(o, f) += g * x.at2(i, f);
                dx.vec()[i * in_features + f] += g * weight.value.at2(o, f);
            }
        }
    }
    return dx;
}

Tensor max_pool(const Tensor& x, std::int64_t factor, PoolCache* cache) {
    if (factor < 1) throw ShapeError("max_pool: factor must be >= 1");
    if (x.h() % factor != 0 || x.w() % factor != 0) {
        throw ShapeError("max_pool: height/width " + x.shape_str() +
                         " not divisible by factor " + std::to_string(factor));
    }
    const std::int64_t oh = x.h() / factor;
    const std::int64_t ow = x.w() / factor;
    Tensor y(x.n(), x.c(), oh, ow);
    if (cache) {
        cache->argmax.assign(static_cast<std::size_t>(y.size()), 0);
        cache->n = x.n();
        cache->c = x.c();
        cache->h = x.h();
        cache->w = x.w();
    }
    std::int64_t out_idx = 0;
    for (std::int64_t i = 0; i < x.n(); ++i) {
        for (std::int64_t c = 0; c < x.c(); ++c) {
            for (std::int64_t y0 = 0; y0 < oh; ++y0) {
                for (std::int64_t x0 = 0; x0 < ow; ++x0, ++out_idx) {
                    real best = -std::numeric_limits<real>::infinity();
                    std::int64_t best_idx = 0;
                    for (std::int64_t dy = 0; dy < factor; ++dy) {
                        for (std::int64_t dx = 0; dx < factor; ++dx) {
                            const std::int64_t ih = y0 * factor + dy;
                            const std::int64_t iw = x0 * factor + dx;
                            const real v = x.at(i, c, ih, iw);
                            if (v > best) {
                                best = v;
                                best_idx = ((i * x.c() + c) * x.h() + ih) * x.w() + iw;
                            }
                        }
                    }
                    y.vec()[out_idx] = best;
                    if (cache) cache->argmax[static_cast<std::size_t>(out_idx)] = best_idx;
                }
            }
        }
    }
    return y;
}

Tensor max_pool_backward(const PoolCache& cache, const Tensor& grad_out) {
    Tensor dx(cache.n, cache.c, cache.h, cache.w);
    for (std::int64_t j = 0; j < grad_out.size(); ++j) {
        dx.vec()[cache.argmax[static_cast<std::size_t>(j)]] += grad_out.vec()[j];
    }
    return dx;
}

Tensor subsample(const Tensor& x, std::int64_t factor) {
    if (factor < 1) throw ShapeError("subsample: factor must be >= 1");
    if (factor == 1) return x;
    if (x.h() % factor != 0 || x.w() % factor != 0) {
        throw ShapeError("subsample: height/width " + x.shape_str() +
                         " not divisible by factor " + std::to_string(factor));
    }
    Tensor y(x.n(), x.c(), x.h() / factor, x.w() / factor);
    for (std::int64_t i = 0; i < x.n(); ++i)
        for (std::int64_t c = 0; c < x.c(); ++c)
            for (std::int64_t y0 = 0; y0 < y.h(); ++y0)
                for (std::int64_t x0 = 0; x0 < y.w(); ++x0)
                    y.at(i, c, y0, x0) = x.at(i, c, y0 * factor, x0 * factor);
    return y;
}

Tensor subsample_backward(std::int64_t in_h, std::int64_t in_w, std::int64_t factor,
                          const Tensor& grad_out) {
    if (factor == 1) return grad_out;
    Tensor dx(grad_out.n(), grad_out.c(), in_h, in_w);
    for (std::int64_t i = 0; i < grad_out.n(); ++i)
        for (std::int64_t c = 0; c < grad_out.c(); ++c)
            for (std::int64_t y0 = 0; y0 < grad_out.h(); ++y0)
                for (std::int64_t x0 = 0; x0 < grad_out.w(); ++x0)
                    dx.at(i, c, y0 * factor, x0 * factor) = grad_out.at(i, c, y0, x0);
    return dx;
}

Tensor global_avg_pool(const Tensor& x) {
    Tensor y(x.n(), x.c(), 1, 1);
    const real scale = 1.0 / static_cast<real>(x.h() * x.w());
    for (std::int64_t i = 0; i < x.n(); ++i) {
        for (std::int64_t c = 0; c < x.c(); ++c) {
            real acc = 0.0;
            for (std::int64_t y0 = 0; y0 < x.h(); ++y0)
                for (std::int64_t x0 = 0; x0 < x.w(); ++x0) acc += x.at(i, c, y0, x0);
            y.at2(i, c) = acc * scale;
        }
    }
    return y;
}

Tensor global_avg_pool_backward(std::int64_t in_h, std::int64_t in_w, const Tensor& grad_out) {
    Tensor dx(grad_out.n(), grad_out.c(), in_h, in_w);
    const real scale = 1.0 / static_cast<real>(in_h * in_w);
    for (std::int64_t i = 0; i < grad_out.n(); ++i)
        for (std::int64_t c = 0; c < grad_out.c(); ++c) {
            const real g = grad_out.at2(i, c) * scale;
            for (std::int64_t y0 = 0; y0 < in_h; ++y0)
                for (std::int64_t x0 = 0; x0 < in_w; ++x0) dx.at(i, c, y0, x0) = g;
        }
    return dx;
}

Tensor dropout(const Tensor& x, real rate, Rng& rng, Tensor& mask_out) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
    mask_out = Tensor(x.n(), x.c(), x.h(), x.w());
    const real keep_scale = 1.0 / (1.0 - rate);
    Tensor y = x;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const real m = rng.uniform() < rate ? 0.0 : keep_scale;
        mask_out.vec()[i] = m;
        y.vec()[i] *= m;
    }
    return y;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (std::int64_t i = 0; i < dx.size(); ++i) dx.vec()[i] *= mask.vec()[i];
    return dx;
}

real softmax_cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels,
                                Tensor* grad) {
    check_dim("softmax_cross_entropy", "batch", logits.n(),
              static_cast<std::int64_t>(labels.size()));
    const std::int64_t n = logits.n();
    const std::int64_t classes = logits.sample_size();
    if (grad) *grad = Tensor(logits.n(), logits.c(), logits.h(), logits.w());
    real total = 0.0;
    std::vector<real> p(static_cast<std::size_t>(classes));
    for (std::int64_t i = 0; i < n; ++i) {
        real zmax = -std::numeric_limits<real>::infinity();
        for (std::int64_t c = 0; c < classes; ++c) zmax = std::max(zmax, logits.at2(i, c));
        real sum = 0.0;
        for (std::int64_t c = 0; c < classes; ++c) {
            p[static_cast<std::size_t>(c)] = std::exp(logits.at2(i, c) - zmax);
            sum += p[static_cast<std::size_t>(c)];
        }
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= classes) {
            throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) +
                             " out of range for " + std::to_string(classes) + " classes");
        }
        total += std::log(sum) - (logits.at2(i, y) - zmax);
        if (grad) {
            for (std::int64_t c = 0; c < classes; ++c) {
                const real q = p[static_cast<std::size_t>(c)] / sum;
                grad->at2(i, c) = (q - (c == y ? 1.0 : 0.0)) / static_cast<real>(n);
            }
        }
    }
    return total / static_cast<real>(n);
}

}  // namespace dsam
