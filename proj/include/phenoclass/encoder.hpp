#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>
#include <vector>

#include "phenoclass/checkpoint.hpp"
#include "phenoclass/data_model.hpp"

namespace pheno {

// Per-source affine rules (normalized = (x + shift) * scale). NDVI,
// location, and the DW class id pass through unchanged.
struct NormalizationSpec {
    struct Affine {
        double shift = 0.0;
        double scale = 1.0;
        double apply(double x) const { return (x + shift) * scale; }
        double invert(double v) const { return v / scale - shift; }
    };

    Affine s1{25.0, 1.0 / 25.0};
    Affine s2{0.0, 1.0 / 10000.0};
    Affine temperature{-272.15, 1.0 / 35.0};
    Affine precipitation{0.0, 1.0 / 0.03};
    Affine elevation{0.0, 1.0 / 2000.0};
    Affine slope{0.0, 1.0 / 50.0};
    std::string version = "v1";

    void validate() const;
};

PixelTimeSeries normalize(const PixelTimeSeries& series, const NormalizationSpec& spec);

struct EncoderConfig {
    int d_e = 128;
    int depth = 2;
    int heads = 8;
    int ff_width = 256;
    int out_dim = 128;
    int dw_vocab = 9;  // Dynamic World classes; the tree class is id 1

    // Concatenated encoding layout [channel; positional; month]: equal
    // thirds of d_e with the remainder assigned to the channel part.
    int sin_width() const { return d_e / 3; }
    int month_width() const { return d_e / 3; }
    int channel_width() const { return d_e - 2 * (d_e / 3); }

    void validate() const;
    bool operator==(const EncoderConfig&) const = default;
};

// Alternating sin/cos of 2*pi*month/12, tiled to the requested width.
Eigen::VectorXd month_encoding(int month, int width);
// Sinusoidal positional encoding over the month position.
Eigen::VectorXd positional_encoding(int pos, int width);

struct GroupMask {
    std::array<bool, kGroupCount> enabled{};

    static GroupMask all();
    static GroupMask s1s2_only();  // drops ERA5 and terrain
    bool on(ChannelGroup g) const { return enabled[group_index(g)]; }
    GroupMask& without(ChannelGroup g) {
        enabled[group_index(g)] = false;
        return *this;
    }
};

struct TokenInfo {
    ChannelGroup group;
    int month = -1;  // -1 for static tokens
    int dw_class = -1;
    bool masked = false;
};

struct TokenSequence {
    std::vector<TokenInfo> info;
    Eigen::MatrixXd embeddings;           // n_tokens x d_e
    std::vector<Eigen::VectorXd> inputs;  // raw group inputs (empty for DW)

    int count() const { return static_cast<int>(info.size()); }
};

struct EncoderParams {
    EncoderConfig config;

    // One projection per value-carrying group; the DW slot stays empty and
    // the categorical table below is used instead.
    std::array<Eigen::MatrixXd, kGroupCount> proj_w;  // d_e x group width
    std::array<Eigen::MatrixXd, kGroupCount> proj_b;  // d_e x 1
    Eigen::MatrixXd dw_embedding;                     // vocab x d_e
    // Learnable channel encodings for every group except Location (whose
    // token is the bare projection).
    std::array<Eigen::MatrixXd, kGroupCount> channel_enc;  // channel_width x 1

    struct Block {
        Eigen::MatrixXd wq, bq, wk, bk, wv, bv, wo, bo;
        Eigen::MatrixXd ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
        Eigen::MatrixXd ff_w1, ff_b1, ff_w2, ff_b2;
    };
    std::vector<Block> blocks;
    Eigen::MatrixXd final_ln_gamma, final_ln_beta;
    Eigen::MatrixXd out_w, out_b;  // out_dim x d_e, out_dim x 1

    static EncoderParams init(const EncoderConfig& config, uint64_t seed);
    static EncoderParams zeros_like(const EncoderParams& other);
    std::vector<TensorRef> tensors();  // fixed manifest order
};

bool group_has_projection(ChannelGroup g);
bool group_has_channel_encoding(ChannelGroup g);

// The concatenated [channel; positional; month] encoding added to a
// token's projection. Static tokens use zeroed positional/month parts.
Eigen::VectorXd encoding_concat(const EncoderParams& params, ChannelGroup g, int month);

// One token per present (month, dynamic group) pair plus present statics.
TokenSequence tokenize(const PixelTimeSeries& normalized_series,
                       const EncoderParams& params,
                       const GroupMask& mask = GroupMask::all());

struct EncoderTrace {
    TokenSequence tokens;
    struct BlockTrace {
        Eigen::MatrixXd x_in, ln1_xhat, a, q, k, v, o_concat, x_mid, ln2_xhat, b,
            ff_pre, ff_act;
        Eigen::VectorXd ln1_inv_std, ln2_inv_std;
        std::vector<Eigen::MatrixXd> attn;  // per-head softmax rows
    };
    std::vector<BlockTrace> blocks;
    Eigen::MatrixXd final_xhat;
    Eigen::VectorXd final_inv_std;
    Eigen::MatrixXd token_out;  // n x d_e, post final layer norm
    Eigen::VectorXd pooled;     // d_e
};

// Transformer over the token sequence; token outputs are mean-pooled and
// projected to out_dim. Deterministic given params and input.
Eigen::VectorXd encode_tokens(const TokenSequence& tokens, const EncoderParams& params,
                              EncoderTrace* trace = nullptr);

// Convenience: tokenize + encode.
Eigen::VectorXd encode(const PixelTimeSeries& normalized_series,
                       const EncoderParams& params,
                       const GroupMask& mask = GroupMask::all());

// Reverse mode. Gradients accumulate into `grads` (zeros_like first).
void encoder_backward(const EncoderTrace& trace, const EncoderParams& params,
                      const Eigen::VectorXd& d_feature, EncoderParams& grads);

// MAE path: gradients arriving at the per-token outputs instead of the
// pooled feature. Fills d_embeddings (n x d_e) for the caller and
// accumulates parameter gradients for blocks + tokenization.
void encoder_backward_tokens(const EncoderTrace& trace, const EncoderParams& params,
                             const Eigen::MatrixXd& d_token_out, EncoderParams& grads,
                             Eigen::MatrixXd* d_embeddings_out = nullptr);

// Masked-autoencoder pre-training at desk scale: randomly masks
// (month, group) tokens of the real-valued dynamic groups and reconstructs
// their normalized values through per-group linear decoders, minimizing
// MSE on masked positions only.
struct MaeConfig {
    double mask_ratio = 0.75;
    int epochs = 20;
    int batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 0.0;
    uint64_t seed = 0;
    GroupMask groups = GroupMask::all();
    int threads = 0;
};

struct MaeResult {
    EncoderParams params;
    std::vector<double> epoch_loss;
};

MaeResult mae_pretrain(std::span<const PixelTimeSeries> normalized_series,
                       const EncoderConfig& config, const MaeConfig& mae);

// Continues from existing parameters (warm starts inside experiments).
MaeResult mae_pretrain_from(EncoderParams params,
                            std::span<const PixelTimeSeries> normalized_series,
                            const MaeConfig& mae);

}  // namespace pheno
