#include "phenoclass/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "phenoclass/rng.hpp"
#include "phenoclass/threading.hpp"

namespace pheno {

void NormalizationSpec::validate() const {
    for (const Affine* a : {&s1, &s2, &temperature, &precipitation, &elevation, &slope}) {
        require(a->scale > 0.0, "normalization rules must be strictly increasing");
    }
}

PixelTimeSeries normalize(const PixelTimeSeries& series, const NormalizationSpec& spec) {
    spec.validate();
    PixelTimeSeries out = series;
    for (int m = 0; m < kMonthsPerYear; ++m) {
        for (int gi = 0; gi < kDynamicGroupCount; ++gi) {
            auto g = static_cast<ChannelGroup>(gi);
            if (!out.has(g, m)) continue;
            auto& vals = out.mutable_values(g, m);
            switch (g) {
                case ChannelGroup::S1:
                    for (auto& v : vals) v = spec.s1.apply(v);
                    break;
                case ChannelGroup::S2Rgb:
                case ChannelGroup::S2RedEdge:
                case ChannelGroup::S2Nir10:
                case ChannelGroup::S2Nir20:
                case ChannelGroup::S2Swir:
                    for (auto& v : vals) v = spec.s2.apply(v);
                    break;
                case ChannelGroup::Era5:
                    vals[0] = spec.precipitation.apply(vals[0]);
                    vals[1] = spec.temperature.apply(vals[1]);
                    break;
                default:  // NDVI and DW pass through
                    break;
            }
        }
    }
    if (out.has_terrain()) {
        out.set_terrain_raw(spec.elevation.apply(series.elevation_m()),
                            spec.slope.apply(series.slope_deg()));
    }
    return out;
}

void EncoderConfig::validate() const {
    require(d_e > 0 && depth > 0 && heads > 0 && ff_width > 0 && out_dim > 0,
            "encoder config values must be positive");
    require(d_e % heads == 0, "d_e (", d_e, ") must be divisible by heads (", heads, ")");
    require(dw_vocab > kDynamicWorldTreeClass, "dw_vocab must cover the tree class");
}

Eigen::VectorXd month_encoding(int month, int width) {
    require(month >= 0 && month < kMonthsPerYear, "month out of range: ", month);
    const double angle = 2.0 * M_PI * month / 12.0;
    Eigen::VectorXd enc(width);
    for (int i = 0; i < width; ++i) {
        enc(i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
    return enc;
}

Eigen::VectorXd positional_encoding(int pos, int width) {
    Eigen::VectorXd enc(width);
    for (int i = 0; i < width; ++i) {
        const double exponent = static_cast<double>(2 * (i / 2)) / width;
        const double rate = std::pow(10000.0, exponent);
        enc(i) = (i % 2 == 0) ? std::sin(pos / rate) : std::cos(pos / rate);
    }
    return enc;
}

GroupMask GroupMask::all() {
    GroupMask m;
    m.enabled.fill(true);
    return m;
}

GroupMask GroupMask::s1s2_only() {
    GroupMask m = all();
    m.without(ChannelGroup::Era5).without(ChannelGroup::Terrain);
    return m;
}

bool group_has_projection(ChannelGroup g) { return g != ChannelGroup::DynamicWorld; }

bool group_has_channel_encoding(ChannelGroup g) { return g != ChannelGroup::Location; }

namespace {

int projection_input_width(ChannelGroup g) {
    if (g == ChannelGroup::Terrain) return 2;
    if (g == ChannelGroup::Location) return 3;
    return group_width(g);
}

}  // namespace

std::vector<TensorRef> EncoderParams::tensors() {
    std::vector<TensorRef> refs;
    for (int gi = 0; gi < kGroupCount; ++gi) {
        auto g = static_cast<ChannelGroup>(gi);
        if (!group_has_projection(g)) continue;
        std::string base(group_name(g));
        refs.push_back({"proj_w." + base, &proj_w[gi]});
        refs.push_back({"proj_b." + base, &proj_b[gi]});
    }
    refs.push_back({"dw_embedding", &dw_embedding});
    for (int gi = 0; gi < kGroupCount; ++gi) {
        auto g = static_cast<ChannelGroup>(gi);
        if (!group_has_channel_encoding(g)) continue;
        refs.push_back({"channel_enc." + std::string(group_name(g)), &channel_enc[gi]});
    }
    for (size_t d = 0; d < blocks.size(); ++d) {
        auto& blk = blocks[d];
        std::string p = "block" + std::to_string(d) + ".";
        refs.push_back({p + "wq", &blk.wq});
        refs.push_back({p + "bq", &blk.bq});
        refs.push_back({p + "wk", &blk.wk});
        refs.push_back({p + "bk", &blk.bk});
        refs.push_back({p + "wv", &blk.wv});
        refs.push_back({p + "bv", &blk.bv});
        refs.push_back({p + "wo", &blk.wo});
        refs.push_back({p + "bo", &blk.bo});
        refs.push_back({p + "ln1_gamma", &blk.ln1_gamma});
        refs.push_back({p + "ln1_beta", &blk.ln1_beta});
        refs.push_back({p + "ln2_gamma", &blk.ln2_gamma});
        refs.push_back({p + "ln2_beta", &blk.ln2_beta});
        refs.push_back({p + "ff_w1", &blk.ff_w1});
        refs.push_back({p + "ff_b1", &blk.ff_b1});
        refs.push_back({p + "ff_w2", &blk.ff_w2});
        refs.push_back({p + "ff_b2", &blk.ff_b2});
    }
    refs.push_back({"final_ln_gamma", &final_ln_gamma});
    refs.push_back({"final_ln_beta", &final_ln_beta});
    refs.push_back({"out_w", &out_w});
    refs.push_back({"out_b", &out_b});
    return refs;
}

namespace {

void fill_uniform(Eigen::MatrixXd& m, double bound, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-bound, bound);
    }
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, uint64_t seed) {
    config.validate();
    EncoderParams p;
    p.config = config;
    const int d = config.d_e;

    for (int gi = 0; gi < kGroupCount; ++gi) {
        auto g = static_cast<ChannelGroup>(gi);
        if (group_has_projection(g)) {
            p.proj_w[gi].resize(d, projection_input_width(g));
            p.proj_b[gi] = Eigen::MatrixXd::Zero(d, 1);
        }
        if (group_has_channel_encoding(g)) {
            p.channel_enc[gi].resize(config.channel_width(), 1);
        }
    }
    p.dw_embedding.resize(config.dw_vocab, d);
    p.blocks.resize(config.depth);
    for (auto& blk : p.blocks) {
        blk.wq.resize(d, d);
        blk.bq = Eigen::MatrixXd::Zero(d, 1);
        blk.wk.resize(d, d);
        blk.bk = Eigen::MatrixXd::Zero(d, 1);
        blk.wv.resize(d, d);
        blk.bv = Eigen::MatrixXd::Zero(d, 1);
        blk.wo.resize(d, d);
        blk.bo = Eigen::MatrixXd::Zero(d, 1);
        blk.ln1_gamma = Eigen::MatrixXd::Ones(d, 1);
        blk.ln1_beta = Eigen::MatrixXd::Zero(d, 1);
        blk.ln2_gamma = Eigen::MatrixXd::Ones(d, 1);
        blk.ln2_beta = Eigen::MatrixXd::Zero(d, 1);
        blk.ff_w1.resize(config.ff_width, d);
        blk.ff_b1 = Eigen::MatrixXd::Zero(config.ff_width, 1);
        blk.ff_w2.resize(d, config.ff_width);
        blk.ff_b2 = Eigen::MatrixXd::Zero(d, 1);
    }
    p.final_ln_gamma = Eigen::MatrixXd::Ones(d, 1);
    p.final_ln_beta = Eigen::MatrixXd::Zero(d, 1);
    p.out_w.resize(config.out_dim, d);
    p.out_b = Eigen::MatrixXd::Zero(config.out_dim, 1);

    // Symmetric uniform scaled by fan-in, one derived seed per tensor so
    // the draw for a given tensor does not depend on the others. Biases and
    // layer-norm affines keep their 0/1 construction values.
    auto wants_random = [](const std::string& name) {
        if (name.rfind("proj_w.", 0) == 0) return true;
        if (name.rfind("channel_enc.", 0) == 0) return true;
        if (name == "dw_embedding" || name == "out_w") return true;
        auto dot = name.rfind('.');
        if (dot == std::string::npos) return false;
        const std::string leaf = name.substr(dot + 1);
        return leaf == "wq" || leaf == "wk" || leaf == "wv" || leaf == "wo" ||
               leaf == "ff_w1" || leaf == "ff_w2";
    };
    auto refs = p.tensors();
    for (size_t i = 0; i < refs.size(); ++i) {
        if (!wants_random(refs[i].name)) continue;
        Eigen::MatrixXd& t = *refs[i].tensor;
        Rng rng(derive_seed(seed, i));
        double fan_in = static_cast<double>(t.cols());
        if (refs[i].name.rfind("channel_enc.", 0) == 0) {
            fan_in = static_cast<double>(t.rows());
        }
        fill_uniform(t, 1.0 / std::sqrt(std::max(1.0, fan_in)), rng);
    }
    return p;
}

EncoderParams EncoderParams::zeros_like(const EncoderParams& other) {
    EncoderParams z = other;
    for (auto& ref : z.tensors()) ref.tensor->setZero();
    return z;
}

Eigen::VectorXd encoding_concat(const EncoderParams& params, ChannelGroup g, int month) {
    const auto& cfg = params.config;
    Eigen::VectorXd enc = Eigen::VectorXd::Zero(cfg.d_e);
    if (group_has_channel_encoding(g)) {
        enc.head(cfg.channel_width()) = params.channel_enc[group_index(g)].col(0);
    }
    if (month >= 0) {
        enc.segment(cfg.channel_width(), cfg.sin_width()) =
            positional_encoding(month, cfg.sin_width());
        enc.tail(cfg.month_width()) = month_encoding(month, cfg.month_width());
    }
    return enc;
}

TokenSequence tokenize(const PixelTimeSeries& series, const EncoderParams& params,
                       const GroupMask& mask) {
    const auto& cfg = params.config;
    TokenSequence seq;
    std::vector<Eigen::VectorXd> embeddings;

    auto add_token = [&](TokenInfo info, Eigen::VectorXd input) {
        const int gi = group_index(info.group);
        Eigen::VectorXd emb;
        if (info.group == ChannelGroup::DynamicWorld) {
            require(info.dw_class >= 0 && info.dw_class < cfg.dw_vocab,
                    "dw class out of vocab: ", info.dw_class);
            emb = params.dw_embedding.row(info.dw_class).transpose() +
                  encoding_concat(params, info.group, info.month);
        } else {
            require(static_cast<int>(input.size()) == params.proj_w[gi].cols(),
                    "group ", group_name(info.group), ": projection expects ",
                    params.proj_w[gi].cols(), " inputs, got ", input.size());
            emb = params.proj_w[gi] * input + params.proj_b[gi].col(0);
            if (info.group != ChannelGroup::Location) {
                emb += encoding_concat(params, info.group, info.month);
            }
        }
        seq.info.push_back(info);
        seq.inputs.push_back(std::move(input));
        embeddings.push_back(std::move(emb));
    };

    for (int m = 0; m < kMonthsPerYear; ++m) {
        for (int gi = 0; gi < kDynamicGroupCount; ++gi) {
            auto g = static_cast<ChannelGroup>(gi);
            if (!mask.on(g) || !series.has(g, m)) continue;
            TokenInfo info;
            info.group = g;
            info.month = m;
            if (g == ChannelGroup::DynamicWorld) {
                info.dw_class = series.dw_class(m);
                add_token(info, Eigen::VectorXd());
            } else {
                const auto& vals = series.values(g, m);
                add_token(info, Eigen::Map<const Eigen::VectorXd>(
                                    vals.data(), static_cast<Eigen::Index>(vals.size())));
            }
        }
    }
    if (mask.on(ChannelGroup::Terrain) && series.has_terrain()) {
        Eigen::VectorXd tg(2);
        tg << series.elevation_m(), series.slope_deg();
        add_token({ChannelGroup::Terrain, -1, -1, false}, std::move(tg));
    }
    if (mask.on(ChannelGroup::Location) && series.has_location()) {
        Eigen::VectorXd loc(3);
        loc << series.loc()[0], series.loc()[1], series.loc()[2];
        add_token({ChannelGroup::Location, -1, -1, false}, std::move(loc));
    }

    seq.embeddings.resize(static_cast<Eigen::Index>(embeddings.size()), cfg.d_e);
    for (size_t i = 0; i < embeddings.size(); ++i) {
        seq.embeddings.row(static_cast<Eigen::Index>(i)) = embeddings[i].transpose();
    }
    return seq;
}

namespace {

constexpr double kLnEps = 1e-5;

struct LnForward {
    Eigen::MatrixXd y, xhat;
    Eigen::VectorXd inv_std;
};

LnForward layer_norm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& gamma,
                     const Eigen::MatrixXd& beta) {
    const Eigen::Index n = x.rows(), d = x.cols();
    LnForward out;
    out.xhat.resize(n, d);
    out.y.resize(n, d);
    out.inv_std.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mu = x.row(r).mean();
        const double var = (x.row(r).array() - mu).square().mean();
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        out.inv_std(r) = inv;
        out.xhat.row(r) = (x.row(r).array() - mu) * inv;
        out.y.row(r) = out.xhat.row(r).array() * gamma.col(0).transpose().array() +
                       beta.col(0).transpose().array();
    }
    return out;
}

Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy,
                                    const Eigen::MatrixXd& xhat,
                                    const Eigen::VectorXd& inv_std,
                                    const Eigen::MatrixXd& gamma,
                                    Eigen::MatrixXd& dgamma, Eigen::MatrixXd& dbeta) {
    dgamma.col(0) += dy.cwiseProduct(xhat).colwise().sum().transpose();
    dbeta.col(0) += dy.colwise().sum().transpose();
    Eigen::MatrixXd dxhat =
        dy.array().rowwise() * gamma.col(0).transpose().array();
    Eigen::MatrixXd dx(dy.rows(), dy.cols());
    for (Eigen::Index r = 0; r < dy.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        dx.row(r) =
            inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
    }
    return dx;
}

double gelu(double z) { return 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0))); }

double gelu_grad(double z) {
    const double phi_cdf = 0.5 * (1.0 + std::erf(z / std::sqrt(2.0)));
    const double phi_pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    return phi_cdf + z * phi_pdf;
}

Eigen::MatrixXd linear(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                       const Eigen::MatrixXd& b) {
    Eigen::MatrixXd y = x * w.transpose();
    y.rowwise() += b.col(0).transpose();
    return y;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& s) {
    Eigen::MatrixXd p(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
        const double m = s.row(r).maxCoeff();
        Eigen::ArrayXd e = (s.row(r).array() - m).exp();
        p.row(r) = e / e.sum();
    }
    return p;
}

}  // namespace

Eigen::VectorXd encode_tokens(const TokenSequence& tokens, const EncoderParams& params,
                              EncoderTrace* trace) {
    require(tokens.count() > 0, "encode: empty token sequence");
    const auto& cfg = params.config;
    const int heads = cfg.heads;
    const int dh = cfg.d_e / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    EncoderTrace local;
    EncoderTrace& tr = trace ? *trace : local;
    tr.tokens = tokens;
    tr.blocks.clear();
    tr.blocks.reserve(params.blocks.size());

    Eigen::MatrixXd x = tokens.embeddings;
    for (const auto& blk : params.blocks) {
        EncoderTrace::BlockTrace bt;
        bt.x_in = x;
        auto ln1 = layer_norm(x, blk.ln1_gamma, blk.ln1_beta);
        bt.ln1_xhat = ln1.xhat;
        bt.ln1_inv_std = ln1.inv_std;
        bt.a = ln1.y;
        bt.q = linear(bt.a, blk.wq, blk.bq);
        bt.k = linear(bt.a, blk.wk, blk.bk);
        bt.v = linear(bt.a, blk.wv, blk.bv);

        const Eigen::Index n = x.rows();
        bt.o_concat.resize(n, cfg.d_e);
        bt.attn.resize(heads);
        for (int h = 0; h < heads; ++h) {
            auto qh = bt.q.middleCols(h * dh, dh);
            auto kh = bt.k.middleCols(h * dh, dh);
            auto vh = bt.v.middleCols(h * dh, dh);
            Eigen::MatrixXd scores = qh * kh.transpose() * inv_sqrt_dh;
            bt.attn[h] = softmax_rows(scores);
            bt.o_concat.middleCols(h * dh, dh) = bt.attn[h] * vh;
        }
        bt.x_mid = x + linear(bt.o_concat, blk.wo, blk.bo);

        auto ln2 = layer_norm(bt.x_mid, blk.ln2_gamma, blk.ln2_beta);
        bt.ln2_xhat = ln2.xhat;
        bt.ln2_inv_std = ln2.inv_std;
        bt.b = ln2.y;
        bt.ff_pre = linear(bt.b, blk.ff_w1, blk.ff_b1);
        bt.ff_act = bt.ff_pre.unaryExpr([](double z) { return gelu(z); });
        x = bt.x_mid + linear(bt.ff_act, blk.ff_w2, blk.ff_b2);
        tr.blocks.push_back(std::move(bt));
    }

    auto fin = layer_norm(x, params.final_ln_gamma, params.final_ln_beta);
    tr.final_xhat = fin.xhat;
    tr.final_inv_std = fin.inv_std;
    tr.token_out = fin.y;
    tr.pooled = tr.token_out.colwise().mean().transpose();

    Eigen::VectorXd feature = params.out_w * tr.pooled + params.out_b.col(0);
    return feature;
}

Eigen::VectorXd encode(const PixelTimeSeries& normalized_series,
                       const EncoderParams& params, const GroupMask& mask) {
    return encode_tokens(tokenize(normalized_series, params, mask), params);
}

namespace {

void tokenize_backward(const TokenSequence& tokens, const EncoderParams& params,
                       const Eigen::MatrixXd& d_embeddings, EncoderParams& grads) {
    const int cw = params.config.channel_width();
    for (int i = 0; i < tokens.count(); ++i) {
        const TokenInfo& info = tokens.info[i];
        const int gi = group_index(info.group);
        const Eigen::VectorXd d = d_embeddings.row(i).transpose();
        if (!info.masked) {
            if (info.group == ChannelGroup::DynamicWorld) {
                grads.dw_embedding.row(info.dw_class) += d.transpose();
            } else {
                grads.proj_w[gi] += d * tokens.inputs[i].transpose();
                grads.proj_b[gi].col(0) += d;
            }
        }
        if (group_has_channel_encoding(info.group)) {
            grads.channel_enc[gi].col(0) += d.head(cw);
        }
    }
}

// Shared reverse pass from gradients at the final per-token outputs down
// to the token embeddings and all parameters.
void backward_from_token_out(const EncoderTrace& tr, const EncoderParams& params,
                             const Eigen::MatrixXd& d_token_out, EncoderParams& grads,
                             Eigen::MatrixXd* d_embeddings_out) {
    const auto& cfg = params.config;
    const int heads = cfg.heads;
    const int dh = cfg.d_e / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Eigen::MatrixXd dx =
        layer_norm_backward(d_token_out, tr.final_xhat, tr.final_inv_std,
                            params.final_ln_gamma, grads.final_ln_gamma,
                            grads.final_ln_beta);

    for (int bi = static_cast<int>(params.blocks.size()) - 1; bi >= 0; --bi) {
        const auto& blk = params.blocks[bi];
        auto& gblk = grads.blocks[bi];
        const auto& bt = tr.blocks[bi];

        // x_out = x_mid + ff_act * W2^T + b2
        Eigen::MatrixXd d_ff_out = dx;
        Eigen::MatrixXd d_x_mid = dx;
        gblk.ff_w2 += d_ff_out.transpose() * bt.ff_act;
        gblk.ff_b2.col(0) += d_ff_out.colwise().sum().transpose();
        Eigen::MatrixXd d_ff_act = d_ff_out * blk.ff_w2;
        Eigen::MatrixXd d_ff_pre =
            d_ff_act.cwiseProduct(bt.ff_pre.unaryExpr([](double z) { return gelu_grad(z); }));
        gblk.ff_w1 += d_ff_pre.transpose() * bt.b;
        gblk.ff_b1.col(0) += d_ff_pre.colwise().sum().transpose();
        Eigen::MatrixXd d_b = d_ff_pre * blk.ff_w1;
        d_x_mid += layer_norm_backward(d_b, bt.ln2_xhat, bt.ln2_inv_std, blk.ln2_gamma,
                                       gblk.ln2_gamma, gblk.ln2_beta);

        // x_mid = x_in + o_concat * Wo^T + bo
        Eigen::MatrixXd d_attn_out = d_x_mid;
        Eigen::MatrixXd d_x_in = d_x_mid;
        gblk.wo += d_attn_out.transpose() * bt.o_concat;
        gblk.bo.col(0) += d_attn_out.colwise().sum().transpose();
        Eigen::MatrixXd d_o_concat = d_attn_out * blk.wo;

        Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(dx.rows(), cfg.d_e);
        Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(dx.rows(), cfg.d_e);
        Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(dx.rows(), cfg.d_e);
        for (int h = 0; h < heads; ++h) {
            auto qh = bt.q.middleCols(h * dh, dh);
            auto kh = bt.k.middleCols(h * dh, dh);
            auto vh = bt.v.middleCols(h * dh, dh);
            const Eigen::MatrixXd& p = bt.attn[h];
            Eigen::MatrixXd d_oh = d_o_concat.middleCols(h * dh, dh);
            Eigen::MatrixXd dp = d_oh * vh.transpose();
            dv.middleCols(h * dh, dh) = p.transpose() * d_oh;
            // softmax backward per row
            Eigen::MatrixXd ds(p.rows(), p.cols());
            for (Eigen::Index r = 0; r < p.rows(); ++r) {
                const double dot = dp.row(r).dot(p.row(r));
                ds.row(r) = p.row(r).cwiseProduct(dp.row(r).array() - dot).matrix();
            }
            ds *= inv_sqrt_dh;
            dq.middleCols(h * dh, dh) = ds * kh;
            dk.middleCols(h * dh, dh) = ds.transpose() * qh;
        }

        gblk.wq += dq.transpose() * bt.a;
        gblk.bq.col(0) += dq.colwise().sum().transpose();
        gblk.wk += dk.transpose() * bt.a;
        gblk.bk.col(0) += dk.colwise().sum().transpose();
        gblk.wv += dv.transpose() * bt.a;
        gblk.bv.col(0) += dv.colwise().sum().transpose();

        Eigen::MatrixXd d_a = dq * blk.wq + dk * blk.wk + dv * blk.wv;
        d_x_in += layer_norm_backward(d_a, bt.ln1_xhat, bt.ln1_inv_std, blk.ln1_gamma,
                                      gblk.ln1_gamma, gblk.ln1_beta);
        dx = std::move(d_x_in);
    }

    tokenize_backward(tr.tokens, params, dx, grads);
    if (d_embeddings_out) *d_embeddings_out = std::move(dx);
}

}  // namespace

void encoder_backward(const EncoderTrace& trace, const EncoderParams& params,
                      const Eigen::VectorXd& d_feature, EncoderParams& grads) {
    grads.out_w += d_feature * trace.pooled.transpose();
    grads.out_b.col(0) += d_feature;
    Eigen::VectorXd d_pooled = params.out_w.transpose() * d_feature;
    const Eigen::Index n = trace.token_out.rows();
    Eigen::MatrixXd d_token_out =
        Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)) *
        d_pooled.transpose();
    backward_from_token_out(trace, params, d_token_out, grads, nullptr);
}

void encoder_backward_tokens(const EncoderTrace& trace, const EncoderParams& params,
                             const Eigen::MatrixXd& d_token_out, EncoderParams& grads,
                             Eigen::MatrixXd* d_embeddings_out) {
    backward_from_token_out(trace, params, d_token_out, grads, d_embeddings_out);
}

// ---------------------------------------------------------------------------
// Masked-autoencoder pre-training
// ---------------------------------------------------------------------------

namespace {

bool group_maskable(ChannelGroup g) {
    // Real-valued dynamic groups only; the categorical DW token has no
    // normalized values to reconstruct.
    return group_is_dynamic(g) && g != ChannelGroup::DynamicWorld;
}

struct MaePack {
    Eigen::MatrixXd mask_token;  // d_e x 1
    std::array<Eigen::MatrixXd, kGroupCount> dec_w, dec_b;

    static MaePack init(const EncoderConfig& cfg, uint64_t seed) {
        MaePack p;
        Rng rng(derive_seed(seed, 7001));
        p.mask_token.resize(cfg.d_e, 1);
        fill_uniform(p.mask_token, 1.0 / std::sqrt(static_cast<double>(cfg.d_e)), rng);
        int stream = 0;
        for (int gi = 0; gi < kGroupCount; ++gi) {
            auto g = static_cast<ChannelGroup>(gi);
            if (!group_maskable(g)) continue;
            Rng wrng(derive_seed(seed, 7100 + stream++));
            p.dec_w[gi].resize(group_width(g), cfg.d_e);
            fill_uniform(p.dec_w[gi], 1.0 / std::sqrt(static_cast<double>(cfg.d_e)), wrng);
            p.dec_b[gi] = Eigen::MatrixXd::Zero(group_width(g), 1);
        }
        return p;
    }

    static MaePack zeros_like(const MaePack& other) {
        MaePack z = other;
        for (auto& ref : z.tensors()) ref.tensor->setZero();
        return z;
    }

    std::vector<TensorRef> tensors() {
        std::vector<TensorRef> refs;
        refs.push_back({"mae.mask_token", &mask_token});
        for (int gi = 0; gi < kGroupCount; ++gi) {
            auto g = static_cast<ChannelGroup>(gi);
            if (!group_maskable(g)) continue;
            std::string base(group_name(g));
            refs.push_back({"mae.dec_w." + base, &dec_w[gi]});
            refs.push_back({"mae.dec_b." + base, &dec_b[gi]});
        }
        return refs;
    }
};

}  // namespace

MaeResult mae_pretrain_from(EncoderParams params,
                            std::span<const PixelTimeSeries> normalized_series,
                            const MaeConfig& mae) {
    require(!normalized_series.empty(), "mae_pretrain: empty dataset");
    require(mae.mask_ratio > 0.0 && mae.mask_ratio < 1.0,
            "mask ratio must be in (0, 1), got ", mae.mask_ratio);
    require(mae.epochs > 0, "epochs must be positive");

    const int n = static_cast<int>(normalized_series.size());
    const int batch_size = std::max(1, std::min(mae.batch_size, n));

    MaePack mae_pack = MaePack::init(params.config, mae.seed);

    AdamW optimizer(mae.lr, mae.weight_decay);
    MaeResult result;

    const int threads = std::min(mae.threads > 0 ? mae.threads : worker_count(),
                                 batch_size);

    for (int epoch = 0; epoch < mae.epochs; ++epoch) {
        std::vector<int> order(n);
        for (int i = 0; i < n; ++i) order[i] = i;
        Rng order_rng(derive_seed(mae.seed, 0x0D0E + epoch));
        order_rng.shuffle(order);

        double epoch_loss_sum = 0.0;

        for (int start = 0; start < n; start += batch_size) {
            const int bsz = std::min(batch_size, n - start);
            std::vector<EncoderParams> tgrads(threads, EncoderParams::zeros_like(params));
            std::vector<MaePack> tmae_grads(threads, MaePack::zeros_like(mae_pack));
            std::vector<double> sample_loss(bsz, 0.0);

            parallel_for(
                bsz,
                [&](int bi) {
                    const int slot = bi % threads;
                    const int idx = order[start + bi];
                    TokenSequence seq =
                        tokenize(normalized_series[idx], params, mae.groups);

                    std::vector<int> candidates;
                    for (int t = 0; t < seq.count(); ++t) {
                        if (group_maskable(seq.info[t].group)) candidates.push_back(t);
                    }
                    if (candidates.empty()) return;
                    int k = std::max(
                        1, static_cast<int>(std::floor(
                               mae.mask_ratio * candidates.size() + 0.5)));
                    k = std::min(k, static_cast<int>(candidates.size()));
                    Rng mask_rng(derive_seed(
                        mae.seed, 0xA5000000ULL +
                                      static_cast<uint64_t>(epoch) * (n + 1) + idx));
                    auto picks = mask_rng.sample_without_replacement(
                        static_cast<int>(candidates.size()), k);
                    std::vector<int> masked;
                    masked.reserve(picks.size());
                    for (int p : picks) masked.push_back(candidates[p]);
                    std::sort(masked.begin(), masked.end());

                    for (int t : masked) {
                        seq.info[t].masked = true;
                        seq.embeddings.row(t) =
                            (mae_pack.mask_token.col(0) +
                             encoding_concat(params, seq.info[t].group,
                                             seq.info[t].month))
                                .transpose();
                    }

                    EncoderTrace trace;
                    encode_tokens(seq, params, &trace);

                    // Per-sample masked MSE; gradients through the decoder
                    // heads land only on masked rows.
                    int scalar_count = 0;
                    for (int t : masked) scalar_count += group_width(seq.info[t].group);
                    Eigen::MatrixXd d_token_out =
                        Eigen::MatrixXd::Zero(seq.count(), params.config.d_e);
                    double sse = 0.0;
                    for (int t : masked) {
                        const int gi = group_index(seq.info[t].group);
                        Eigen::VectorXd pred =
                            mae_pack.dec_w[gi] * trace.token_out.row(t).transpose() +
                            mae_pack.dec_b[gi].col(0);
                        Eigen::VectorXd err = pred - seq.inputs[t];
                        sse += err.squaredNorm();
                        const double scale = 2.0 / scalar_count;
                        tmae_grads[slot].dec_w[gi] +=
                            scale * err * trace.token_out.row(t);
                        tmae_grads[slot].dec_b[gi].col(0) += scale * err;
                        d_token_out.row(t) =
                            scale * err.transpose() * mae_pack.dec_w[gi];
                    }
                    sample_loss[bi] = sse / scalar_count;

                    Eigen::MatrixXd d_embeddings;
                    encoder_backward_tokens(trace, params, d_token_out, tgrads[slot],
                                            &d_embeddings);
                    for (int t : masked) {
                        tmae_grads[slot].mask_token.col(0) +=
                            d_embeddings.row(t).transpose();
                    }
                },
                threads);

            EncoderParams grads = EncoderParams::zeros_like(params);
            MaePack mae_grads = MaePack::zeros_like(mae_pack);
            for (int t = 0; t < threads; ++t) {
                add_tensors(grads.tensors(), tgrads[t].tensors());
                add_tensors(mae_grads.tensors(), tmae_grads[t].tensors());
            }
            double batch_loss = 0.0;
            for (int bi = 0; bi < bsz; ++bi) batch_loss += sample_loss[bi];
            batch_loss /= bsz;
            // Mean-over-samples loss: scale the summed gradients.
            for (auto& ref : grads.tensors()) *ref.tensor /= bsz;
            for (auto& ref : mae_grads.tensors()) *ref.tensor /= bsz;

            auto p_refs = params.tensors();
            auto m_refs = mae_pack.tensors();
            std::vector<TensorRef> all_params(p_refs);
            all_params.insert(all_params.end(), m_refs.begin(), m_refs.end());
            auto g_refs = grads.tensors();
            auto mg_refs = mae_grads.tensors();
            std::vector<TensorRef> all_grads(g_refs);
            all_grads.insert(all_grads.end(), mg_refs.begin(), mg_refs.end());
            optimizer.step(all_params, all_grads);

            epoch_loss_sum += batch_loss * bsz;
        }
        result.epoch_loss.push_back(epoch_loss_sum / n);
    }

    result.params = std::move(params);
    return result;
}

MaeResult mae_pretrain(std::span<const PixelTimeSeries> normalized_series,
                       const EncoderConfig& config, const MaeConfig& mae) {
    return mae_pretrain_from(EncoderParams::init(config, derive_seed(mae.seed, 0xE0C)),
                             normalized_series, mae);
}

}  // namespace pheno
