#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pheno {

// A named view into a parameter pack. Packs enumerate their tensors in a
// fixed order; that order is the checkpoint manifest order.
struct TensorRef {
    std::string name;
    Eigen::MatrixXd* tensor;
};

struct CheckpointMeta {
    std::vector<std::pair<std::string, std::string>> entries;

    void set(const std::string& key, std::string value);
    const std::string* find(const std::string& key) const;
};

// Checkpoint file: a plain-text manifest (meta lines, then one line per
// parameter with name/shape/offset) followed by a blob of little-endian
// 32-bit reals in column-major order. Written atomically.
void save_checkpoint(const std::filesystem::path& path,
                     std::span<const TensorRef> tensors,
                     const CheckpointMeta& meta);

// Loads into pre-shaped tensors; names and shapes must match the manifest.
CheckpointMeta load_checkpoint(const std::filesystem::path& path,
                               std::span<const TensorRef> tensors);

CheckpointMeta peek_checkpoint_meta(const std::filesystem::path& path);

// Adaptive-moment optimizer with decoupled weight decay: after the moment
// update, every parameter shrinks by exactly (1 - lr*wd).
class AdamW {
public:
    AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<const TensorRef> params, std::span<const TensorRef> grads);

    double learning_rate() const { return lr_; }

private:
    double lr_, wd_, beta1_, beta2_, eps_;
    long step_count_ = 0;
    std::map<std::string, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> moments_;
};

// Gradient-pack helpers.
void zero_tensors(std::span<const TensorRef> tensors);
void add_tensors(std::span<const TensorRef> dst, std::span<const TensorRef> src);
double tensors_norm(std::span<const TensorRef> tensors);

}  // namespace pheno
