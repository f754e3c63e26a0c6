#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "phenoclass/checkpoint.hpp"
#include "phenoclass/encoder.hpp"

namespace pheno {

// Three hidden layers (1024, 512, 256 unless overridden), each
// linear -> batch norm -> ReLU, then a linear layer to class logits.
// No dropout.
struct MlpConfig {
    std::vector<int> hidden{1024, 512, 256};
    int in_dim = 128;
    int n_classes = 7;
    double bn_momentum = 0.1;
    double bn_eps = 1e-5;
};

enum class MlpMode { Train, Eval };

struct MlpParams {
    MlpConfig config;
    struct Layer {
        Eigen::MatrixXd w, b;                        // linear
        Eigen::MatrixXd gamma, beta;                 // batch-norm affine
        Eigen::MatrixXd running_mean, running_var;   // buffers
    };
    std::vector<Layer> layers;
    Eigen::MatrixXd out_w, out_b;

    static MlpParams init(const MlpConfig& config, uint64_t seed);
    static MlpParams zeros_like(const MlpParams& other);
    std::vector<TensorRef> tensors();      // trainables only
    std::vector<TensorRef> all_tensors();  // + running statistics
    std::vector<int> hidden_widths() const;
};

struct MlpTrace {
    Eigen::MatrixXd input;
    struct Layer {
        Eigen::MatrixXd lin_out, xhat, bn_out, relu_out;
        Eigen::VectorXd inv_std;  // per feature
        bool used_batch_stats = false;
    };
    std::vector<Layer> layers;
    Eigen::MatrixXd logits;
};

// Forward over a batch (rows are samples). Train mode normalizes with the
// batch statistics and updates the running buffers; a train batch of one
// sample falls back to running statistics and leaves them untouched.
Eigen::MatrixXd mlp_logits(const Eigen::MatrixXd& x, MlpParams& params, MlpMode mode,
                           MlpTrace* trace = nullptr);

Eigen::MatrixXd softmax_probabilities(const Eigen::MatrixXd& logits);

// Convenience wrapper returning normalized class probabilities.
Eigen::MatrixXd mlp_forward(const Eigen::MatrixXd& x, MlpParams& params, MlpMode mode);

// Mean cross-entropy; optionally also the logits gradient of the mean loss.
double cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels,
                     Eigen::MatrixXd* d_logits = nullptr);

void mlp_backward(const MlpTrace& trace, const MlpParams& params,
                  const Eigen::MatrixXd& d_logits, MlpParams& grads,
                  Eigen::MatrixXd* d_input = nullptr);

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.00746;
    int max_epochs = 100;
    int batch_size = 64;
    double val_fraction = 0.15;  // stratified carve from the training split
    uint64_t seed = 0;
    int threads = 0;
};

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    MlpParams params;  // best-validation-loss epoch
    std::vector<EpochRow> trace;
    int best_epoch = -1;
};

TrainResult train_mlp(const Eigen::MatrixXd& features, std::span<const int> labels,
                      const MlpConfig& mlp_config, const TrainConfig& config);

struct FinetuneConfig {
    TrainConfig train;
    NormalizationSpec norm;
    GroupMask groups = GroupMask::all();
    bool freeze_encoder = false;
};

struct FinetuneResult {
    EncoderParams encoder;  // best-validation-loss epoch
    MlpParams mlp;
    std::vector<EpochRow> trace;
    int best_epoch = -1;
    double first_batch_encoder_grad_norm = 0.0;
};

// Joint training of encoder + head on native-unit series; normalization is
// applied internally. The MLP input width must equal the encoder output.
FinetuneResult finetune(const EncoderParams& initial_encoder,
                        const MlpConfig& mlp_config,
                        std::span<const PixelTimeSeries> series,
                        std::span<const int> labels, const FinetuneConfig& config);

// Half-up rounded stratified carve used for validation splits.
struct ValSplit {
    std::vector<int> fit;  // indices used for gradient updates
    std::vector<int> val;
};
ValSplit carve_validation(std::span<const int> labels, int n_classes,
                          double val_fraction, uint64_t seed);

}  // namespace pheno
