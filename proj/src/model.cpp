#include "xlf/model.hpp"

#include <algorithm>
#include <cmath>

#include "xlf/error.hpp"
#include "xlf/rng.hpp"

namespace xlf {

std::string to_string(TuningMode mode) {
    return mode == TuningMode::full_tune ? "full_tune" : "adapter";
}

TuningMode tuning_mode_from_string(const std::string& s) {
    if (s == "full_tune" || s == "full") return TuningMode::full_tune;
    if (s == "adapter") return TuningMode::adapter;
    throw ValidationError("unknown tuning mode '" + s + "' (expected full|full_tune|adapter)");
}

void ModelConfig::validate() const {
    if (input_dim == 0) throw ValidationError("model.input_dim must be positive");
    if (encoder_dims.empty()) throw ValidationError("model.encoder_dims must be non-empty");
    for (uint32_t d : encoder_dims)
        if (d == 0) throw ValidationError("model.encoder_dims entries must be positive");
    if (n_classes < 2) throw ValidationError("model.n_classes must be >= 2");
    if (adapter_bottleneck == 0) throw ValidationError("model.adapter_bottleneck must be positive");
    if (adapter_bottleneck >= encoder_dims.back())
        throw ValidationError("model.adapter_bottleneck must be < last encoder width");
    if (!(init_scale > 0.0)) throw ValidationError("model.init_scale must be positive");
}

nlohmann::json ModelConfig::to_json() const {
    return {{"input_dim", input_dim},
            {"encoder_dims", encoder_dims},
            {"adapter_bottleneck", adapter_bottleneck},
            {"n_classes", n_classes},
            {"tuning_mode", to_string(tuning_mode)},
            {"init_scale", init_scale}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.input_dim = j.at("input_dim").get<uint32_t>();
    c.encoder_dims = j.at("encoder_dims").get<std::vector<uint32_t>>();
    c.adapter_bottleneck = j.at("adapter_bottleneck").get<uint32_t>();
    c.n_classes = j.at("n_classes").get<uint32_t>();
    c.tuning_mode = tuning_mode_from_string(j.at("tuning_mode").get<std::string>());
    c.init_scale = j.at("init_scale").get<double>();
    return c;
}

uint64_t ModelConfig::hash() const {
    return fnv1a64(to_json().dump());
}

namespace {

void fill_uniform(std::vector<double>& v, double scale, Rng& rng) {
    for (double& x : v) x = rng.uniform(-scale, scale);
}

// y = W x + b for dense input.
void affine(const Linear& l, std::span<const double> x, std::vector<double>& y) {
    y.assign(l.out_dim(), 0.0);
    for (size_t o = 0; o < l.out_dim(); ++o) {
        double acc = l.b[o];
        const double* row = &l.w.a[o * l.in_dim()];
        for (size_t i = 0; i < l.in_dim(); ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// y = W x + b for sparse input.
void affine_sparse(const Linear& l, const FeatureVector& x, std::vector<double>& y) {
    y = l.b;
    for (const auto& [idx, count] : x.entries) {
        for (size_t o = 0; o < l.out_dim(); ++o)
            y[o] += l.w.a[o * l.in_dim() + idx] * count;
    }
}

void relu_inplace(std::vector<double>& v) {
    for (double& x : v)
        if (x < 0.0) x = 0.0;
}

struct ForwardCache {
    std::vector<std::vector<double>> enc_pre;    // pre-activation per encoder layer
    std::vector<std::vector<double>> enc_post;   // post-ReLU per encoder layer
    std::vector<double> adapter_pre;             // bottleneck pre-activation
    std::vector<double> adapter_post;            // bottleneck post-ReLU
    std::vector<double> z;                       // encoder output + adapter residual
    std::vector<double> probs;
};

ForwardCache run_forward(const ModelState& s, const FeatureVector& x) {
    if (x.dim != s.cfg.input_dim)
        throw ValidationError("forward: feature dim " + std::to_string(x.dim) +
                              " does not match model input_dim " + std::to_string(s.cfg.input_dim));
    ForwardCache c;
    c.enc_pre.resize(s.base.size());
    c.enc_post.resize(s.base.size());

    affine_sparse(s.base[0], x, c.enc_pre[0]);
    c.enc_post[0] = c.enc_pre[0];
    relu_inplace(c.enc_post[0]);
    for (size_t l = 1; l < s.base.size(); ++l) {
        affine(s.base[l], c.enc_post[l - 1], c.enc_pre[l]);
        c.enc_post[l] = c.enc_pre[l];
        relu_inplace(c.enc_post[l]);
    }

    const auto& e = c.enc_post.back();
    affine(s.adapter_down, e, c.adapter_pre);
    c.adapter_post = c.adapter_pre;
    relu_inplace(c.adapter_post);
    std::vector<double> up;
    affine(s.adapter_up, c.adapter_post, up);
    c.z = e;
    for (size_t i = 0; i < c.z.size(); ++i) c.z[i] += up[i];

    std::vector<double> logits;
    affine(s.head, c.z, logits);
    c.probs = softmax(std::move(logits));
    return c;
}

struct GradBuffers {
    std::vector<Linear> base;
    Linear adapter_down, adapter_up, head;
    bool with_base = false;

    explicit GradBuffers(const ModelState& s) {
        with_base = s.cfg.tuning_mode == TuningMode::full_tune;
        if (with_base) {
            base.reserve(s.base.size());
            for (const auto& l : s.base) base.emplace_back(l.out_dim(), l.in_dim());
        }
        adapter_down = Linear(s.adapter_down.out_dim(), s.adapter_down.in_dim());
        adapter_up = Linear(s.adapter_up.out_dim(), s.adapter_up.in_dim());
        head = Linear(s.head.out_dim(), s.head.in_dim());
    }
};

// delta_in = W^T delta_out, and accumulate dW += delta_out x^T, db += delta_out.
void backprop_affine(const Linear& l, std::span<const double> input,
                     const std::vector<double>& delta_out, Linear* grad,
                     std::vector<double>* delta_in) {
    if (grad) {
        for (size_t o = 0; o < l.out_dim(); ++o) {
            const double d = delta_out[o];
            grad->b[o] += d;
            double* grow = &grad->w.a[o * l.in_dim()];
            for (size_t i = 0; i < l.in_dim(); ++i) grow[i] += d * input[i];
        }
    }
    if (delta_in) {
        delta_in->assign(l.in_dim(), 0.0);
        for (size_t o = 0; o < l.out_dim(); ++o) {
            const double d = delta_out[o];
            const double* row = &l.w.a[o * l.in_dim()];
            for (size_t i = 0; i < l.in_dim(); ++i) (*delta_in)[i] += row[i] * d;
        }
    }
}

void relu_backward(const std::vector<double>& pre, std::vector<double>& delta) {
    for (size_t i = 0; i < delta.size(); ++i)
        if (pre[i] <= 0.0) delta[i] = 0.0;
}

void collect_linear(std::vector<std::span<double>>& out, Linear& l) {
    out.emplace_back(l.w.a);
    out.emplace_back(l.b);
}

void collect_linear_const(std::vector<std::span<const double>>& out, const Linear& l) {
    out.emplace_back(l.w.a);
    out.emplace_back(l.b);
}

} // namespace

std::vector<double> softmax(std::vector<double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& x : logits) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (double& x : logits) x /= sum;
    return logits;
}

ModelState init_model(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    ModelState s;
    s.cfg = cfg;
    Rng rng(seed);

    size_t in = cfg.input_dim;
    for (uint32_t width : cfg.encoder_dims) {
        Linear l(width, in);
        fill_uniform(l.w.a, cfg.init_scale, rng);
        s.base.push_back(std::move(l));
        in = width;
    }
    const size_t enc_out = cfg.encoder_dims.back();
    s.adapter_down = Linear(cfg.adapter_bottleneck, enc_out);
    fill_uniform(s.adapter_down.w.a, cfg.init_scale, rng);
    s.adapter_up = Linear(enc_out, cfg.adapter_bottleneck);   // stays zero
    s.head = Linear(cfg.n_classes, enc_out);
    fill_uniform(s.head.w.a, cfg.init_scale, rng);

    s.meta.seed = seed;
    s.meta.config_hash = cfg.hash();
    return s;
}

std::vector<std::span<double>> all_views(ModelState& s) {
    std::vector<std::span<double>> out;
    for (auto& l : s.base) collect_linear(out, l);
    collect_linear(out, s.adapter_down);
    collect_linear(out, s.adapter_up);
    collect_linear(out, s.head);
    return out;
}

std::vector<std::span<const double>> all_views(const ModelState& s) {
    std::vector<std::span<const double>> out;
    for (const auto& l : s.base) collect_linear_const(out, l);
    collect_linear_const(out, s.adapter_down);
    collect_linear_const(out, s.adapter_up);
    collect_linear_const(out, s.head);
    return out;
}

std::vector<std::span<double>> trainable_views(ModelState& s) {
    std::vector<std::span<double>> out;
    if (s.cfg.tuning_mode == TuningMode::full_tune)
        for (auto& l : s.base) collect_linear(out, l);
    collect_linear(out, s.adapter_down);
    collect_linear(out, s.adapter_up);
    collect_linear(out, s.head);
    return out;
}

std::vector<double> forward(const ModelState& state, const FeatureVector& x) {
    return run_forward(state, x).probs;
}

std::pair<double, GradientSet> loss_and_grad(
    const ModelState& s, const std::vector<std::pair<FeatureVector, uint32_t>>& batch) {
    if (batch.empty()) throw ValidationError("loss_and_grad: empty batch");

    GradBuffers g(s);
    double loss_sum = 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    std::vector<double> delta, tmp;
    for (const auto& [x, label] : batch) {
        if (label >= s.cfg.n_classes)
            throw ValidationError("loss_and_grad: label out of range");
        ForwardCache c = run_forward(s, x);
        loss_sum += -std::log(std::max(c.probs[label], 1e-300));

        // d loss / d logits, already scaled by 1/N for the batch mean.
        delta = c.probs;
        delta[label] -= 1.0;
        for (double& d : delta) d *= inv_n;

        backprop_affine(s.head, c.z, delta, &g.head, &tmp);
        std::vector<double> dz = std::move(tmp);

        // Residual: z = e + up(relu(down(e))).
        std::vector<double> dup = dz;
        backprop_affine(s.adapter_up, c.adapter_post, dup, &g.adapter_up, &tmp);
        std::vector<double> dd = std::move(tmp);
        relu_backward(c.adapter_pre, dd);
        std::vector<double> de_through;
        backprop_affine(s.adapter_down, c.enc_post.back(), dd, &g.adapter_down,
                        g.with_base ? &de_through : nullptr);

        if (g.with_base) {
            std::vector<double> de = dz;
            for (size_t i = 0; i < de.size(); ++i) de[i] += de_through[i];
            for (size_t l = s.base.size(); l-- > 0;) {
                relu_backward(c.enc_pre[l], de);
                if (l > 0) {
                    backprop_affine(s.base[l], c.enc_post[l - 1], de, &g.base[l], &tmp);
                    de = std::move(tmp);
                } else {
                    // Sparse input layer: only touched feature columns get gradient.
                    Linear& gl = g.base[0];
                    for (size_t o = 0; o < gl.out_dim(); ++o) gl.b[o] += de[o];
                    for (const auto& [idx, count] : x.entries)
                        for (size_t o = 0; o < gl.out_dim(); ++o)
                            gl.w.a[o * gl.in_dim() + idx] += de[o] * count;
                }
            }
        }
    }

    GradientSet gs;
    auto take = [&gs](Linear& l) {
        gs.slices.push_back(std::move(l.w.a));
        gs.slices.push_back(std::move(l.b));
    };
    if (g.with_base)
        for (auto& l : g.base) take(l);
    take(g.adapter_down);
    take(g.adapter_up);
    take(g.head);
    return {loss_sum * inv_n, std::move(gs)};
}

double mean_loss(const ModelState& s,
                 const std::vector<std::pair<FeatureVector, uint32_t>>& batch) {
    if (batch.empty()) throw ValidationError("mean_loss: empty batch");
    double loss_sum = 0.0;
    for (const auto& [x, label] : batch) {
        auto probs = forward(s, x);
        loss_sum += -std::log(std::max(probs[label], 1e-300));
    }
    return loss_sum / static_cast<double>(batch.size());
}

ParamCounts param_counts(const ModelState& s) {
    ParamCounts pc;
    for (const auto& l : s.base) pc.base += l.w.a.size() + l.b.size();
    pc.adapter = s.adapter_down.w.a.size() + s.adapter_down.b.size() +
                 s.adapter_up.w.a.size() + s.adapter_up.b.size();
    pc.head = s.head.w.a.size() + s.head.b.size();
    pc.total = pc.base + pc.adapter + pc.head;
    pc.trainable = s.cfg.tuning_mode == TuningMode::full_tune ? pc.total : pc.adapter + pc.head;
    return pc;
}

} // namespace xlf
