#include "phenoclass/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "phenoclass/rng.hpp"
#include "phenoclass/threading.hpp"

namespace pheno {

std::vector<TensorRef> MlpParams::tensors() {
    std::vector<TensorRef> refs;
    for (size_t i = 0; i < layers.size(); ++i) {
        std::string p = "layer" + std::to_string(i) + ".";
        refs.push_back({p + "w", &layers[i].w});
        refs.push_back({p + "b", &layers[i].b});
        refs.push_back({p + "gamma", &layers[i].gamma});
        refs.push_back({p + "beta", &layers[i].beta});
    }
    refs.push_back({"out_w", &out_w});
    refs.push_back({"out_b", &out_b});
    return refs;
}

std::vector<TensorRef> MlpParams::all_tensors() {
    auto refs = tensors();
    for (size_t i = 0; i < layers.size(); ++i) {
        std::string p = "layer" + std::to_string(i) + ".";
        refs.push_back({p + "running_mean", &layers[i].running_mean});
        refs.push_back({p + "running_var", &layers[i].running_var});
    }
    return refs;
}

std::vector<int> MlpParams::hidden_widths() const {
    std::vector<int> widths;
    for (const auto& layer : layers) widths.push_back(static_cast<int>(layer.w.rows()));
    return widths;
}

MlpParams MlpParams::init(const MlpConfig& config, uint64_t seed) {
    require(config.in_dim > 0 && config.n_classes >= 2, "mlp config: in_dim ",
            config.in_dim, ", n_classes ", config.n_classes);
    MlpParams p;
    p.config = config;
    int in = config.in_dim;
    int stream = 0;
    for (int width : config.hidden) {
        Layer layer;
        layer.w.resize(width, in);
        Rng rng(derive_seed(seed, stream++));
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index i = 0; i < layer.w.size(); ++i) {
            layer.w.data()[i] = rng.uniform(-bound, bound);
        }
        layer.b = Eigen::MatrixXd::Zero(width, 1);
        layer.gamma = Eigen::MatrixXd::Ones(width, 1);
        layer.beta = Eigen::MatrixXd::Zero(width, 1);
        layer.running_mean = Eigen::MatrixXd::Zero(width, 1);
        layer.running_var = Eigen::MatrixXd::Ones(width, 1);
        p.layers.push_back(std::move(layer));
        in = width;
    }
    p.out_w.resize(config.n_classes, in);
    Rng rng(derive_seed(seed, stream));
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index i = 0; i < p.out_w.size(); ++i) {
        p.out_w.data()[i] = rng.uniform(-bound, bound);
    }
    p.out_b = Eigen::MatrixXd::Zero(config.n_classes, 1);
    return p;
}

MlpParams MlpParams::zeros_like(const MlpParams& other) {
    MlpParams z = other;
    for (auto& ref : z.all_tensors()) ref.tensor->setZero();
    return z;
}

Eigen::MatrixXd mlp_logits(const Eigen::MatrixXd& x, MlpParams& params, MlpMode mode,
                           MlpTrace* trace) {
    require(x.cols() == params.config.in_dim, "mlp expects width ",
            params.config.in_dim, ", got ", x.cols());
    const Eigen::Index n = x.rows();
    if (trace) {
        trace->input = x;
        trace->layers.clear();
        trace->layers.resize(params.layers.size());
    }

    Eigen::MatrixXd h = x;
    for (size_t li = 0; li < params.layers.size(); ++li) {
        auto& layer = params.layers[li];
        Eigen::MatrixXd lin = h * layer.w.transpose();
        lin.rowwise() += layer.b.col(0).transpose();

        const bool batch_stats = (mode == MlpMode::Train) && n > 1;
        Eigen::VectorXd mean, var;
        if (batch_stats) {
            mean = lin.colwise().mean().transpose();
            var = (lin.rowwise() - mean.transpose()).array().square().colwise().mean()
                      .transpose();
            // Running buffers track the unbiased variance.
            const double mom = params.config.bn_momentum;
            layer.running_mean.col(0) =
                (1.0 - mom) * layer.running_mean.col(0) + mom * mean;
            const double unbias = static_cast<double>(n) / (n - 1);
            layer.running_var.col(0) =
                (1.0 - mom) * layer.running_var.col(0) + mom * (var * unbias);
        } else {
            mean = layer.running_mean.col(0);
            var = layer.running_var.col(0);
        }

        Eigen::ArrayXd inv_std = (var.array() + params.config.bn_eps).sqrt().inverse();
        Eigen::MatrixXd xhat =
            (lin.rowwise() - mean.transpose()).array().rowwise() *
            inv_std.transpose();
        Eigen::MatrixXd bn =
            (xhat.array().rowwise() * layer.gamma.col(0).transpose().array())
                .rowwise() +
            layer.beta.col(0).transpose().array();
        Eigen::MatrixXd relu = bn.cwiseMax(0.0);

        if (trace) {
            auto& lt = trace->layers[li];
            lt.lin_out = std::move(lin);
            lt.xhat = std::move(xhat);
            lt.inv_std = inv_std.matrix();
            lt.bn_out = std::move(bn);
            lt.relu_out = relu;
            lt.used_batch_stats = batch_stats;
        }
        h = std::move(relu);
    }

    Eigen::MatrixXd logits = h * params.out_w.transpose();
    logits.rowwise() += params.out_b.col(0).transpose();
    if (trace) trace->logits = logits;
    return logits;
}

Eigen::MatrixXd softmax_probabilities(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd probs(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        Eigen::ArrayXd e = (logits.row(r).array() - m).exp();
        probs.row(r) = e / e.sum();
    }
    return probs;
}

Eigen::MatrixXd mlp_forward(const Eigen::MatrixXd& x, MlpParams& params, MlpMode mode) {
    return softmax_probabilities(mlp_logits(x, params, mode));
}

double cross_entropy(const Eigen::MatrixXd& logits, std::span<const int> labels,
                     Eigen::MatrixXd* d_logits) {
    require(static_cast<size_t>(logits.rows()) == labels.size(),
            "cross_entropy: ", logits.rows(), " rows vs ", labels.size(), " labels");
    const Eigen::Index n = logits.rows();
    double loss = 0.0;
    Eigen::MatrixXd probs = softmax_probabilities(logits);
    for (Eigen::Index r = 0; r < n; ++r) {
        const int y = labels[r];
        require(y >= 0 && y < logits.cols(), "label out of range: ", y);
        const double m = logits.row(r).maxCoeff();
        const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
        loss += lse - logits(r, y);
    }
    loss /= static_cast<double>(n);
    if (d_logits) {
        *d_logits = probs;
        for (Eigen::Index r = 0; r < n; ++r) (*d_logits)(r, labels[r]) -= 1.0;
        *d_logits /= static_cast<double>(n);
    }
    return loss;
}

void mlp_backward(const MlpTrace& trace, const MlpParams& params,
                  const Eigen::MatrixXd& d_logits, MlpParams& grads,
                  Eigen::MatrixXd* d_input) {
    const Eigen::Index n = d_logits.rows();
    const Eigen::MatrixXd& last_h = params.layers.empty()
                                        ? trace.input
                                        : trace.layers.back().relu_out;
    grads.out_w += d_logits.transpose() * last_h;
    grads.out_b.col(0) += d_logits.colwise().sum().transpose();
    Eigen::MatrixXd dh = d_logits * params.out_w;

    for (int li = static_cast<int>(params.layers.size()) - 1; li >= 0; --li) {
        const auto& layer = params.layers[li];
        auto& glayer = grads.layers[li];
        const auto& lt = trace.layers[li];

        // ReLU
        Eigen::MatrixXd d_bn =
            dh.cwiseProduct((lt.bn_out.array() > 0.0).cast<double>().matrix());

        // Batch-norm affine
        glayer.gamma.col(0) += d_bn.cwiseProduct(lt.xhat).colwise().sum().transpose();
        glayer.beta.col(0) += d_bn.colwise().sum().transpose();
        Eigen::MatrixXd d_xhat =
            d_bn.array().rowwise() * layer.gamma.col(0).transpose().array();

        Eigen::MatrixXd d_lin(n, d_xhat.cols());
        if (lt.used_batch_stats) {
            // Full batch-statistics backward, per feature column.
            for (Eigen::Index c = 0; c < d_xhat.cols(); ++c) {
                const double inv = lt.inv_std(c);
                const auto dxh = d_xhat.col(c).array();
                const auto xh = lt.xhat.col(c).array();
                const double m1 = dxh.mean();
                const double m2 = (dxh * xh).mean();
                d_lin.col(c) = (inv * (dxh - m1 - xh * m2)).matrix();
            }
        } else {
            d_lin = d_xhat.array().rowwise() * lt.inv_std.transpose().array();
        }

        const Eigen::MatrixXd& prev =
            li == 0 ? trace.input : trace.layers[li - 1].relu_out;
        glayer.w += d_lin.transpose() * prev;
        glayer.b.col(0) += d_lin.colwise().sum().transpose();
        dh = d_lin * layer.w;
    }
    if (d_input) *d_input = std::move(dh);
}

ValSplit carve_validation(std::span<const int> labels, int n_classes,
                          double val_fraction, uint64_t seed) {
    std::vector<std::vector<int>> per_class(n_classes);
    for (size_t i = 0; i < labels.size(); ++i) {
        per_class[labels[i]].push_back(static_cast<int>(i));
    }
    ValSplit split;
    for (int c = 0; c < n_classes; ++c) {
        auto& idx = per_class[c];
        if (idx.empty()) continue;
        Rng rng(derive_seed(seed, 0xCA11 + c));
        rng.shuffle(idx);
        int n_val = static_cast<int>(std::floor(val_fraction * idx.size() + 0.5));
        n_val = std::min(n_val, static_cast<int>(idx.size()) - 1);  // keep >=1 for fit
        n_val = std::max(n_val, 0);
        for (size_t i = 0; i < idx.size(); ++i) {
            (i < static_cast<size_t>(n_val) ? split.val : split.fit).push_back(idx[i]);
        }
    }
    std::sort(split.fit.begin(), split.fit.end());
    std::sort(split.val.begin(), split.val.end());
    return split;
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, std::span<const int> rows) {
    Eigen::MatrixXd out(rows.size(), m.cols());
    for (size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
    return out;
}

std::vector<int> gather_labels(std::span<const int> labels, std::span<const int> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(labels[r]);
    return out;
}

int count_classes(std::span<const int> labels) {
    int k = 0;
    for (int y : labels) k = std::max(k, y + 1);
    return k;
}

}  // namespace

TrainResult train_mlp(const Eigen::MatrixXd& features, std::span<const int> labels,
                      const MlpConfig& mlp_config, const TrainConfig& config) {
    require(features.rows() == static_cast<Eigen::Index>(labels.size()),
            "train_mlp: feature rows vs labels mismatch");
    const int n_classes = count_classes(labels);
    require(n_classes >= 2, "train_mlp: need at least 2 classes, got ", n_classes);
    require(!std::isnan(features.sum()), "train_mlp: NaN in input features");

    MlpConfig cfg = mlp_config;
    cfg.in_dim = static_cast<int>(features.cols());
    cfg.n_classes = std::max(cfg.n_classes, n_classes);

    MlpParams params = MlpParams::init(cfg, derive_seed(config.seed, 0x1417));
    AdamW optimizer(config.lr, config.weight_decay);

    ValSplit split = carve_validation(labels, cfg.n_classes, config.val_fraction,
                                      config.seed);
    Eigen::MatrixXd val_x;
    std::vector<int> val_y;
    if (!split.val.empty()) {
        val_x = gather_rows(features, split.val);
        val_y = gather_labels(labels, split.val);
    }

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();

    std::vector<int> order = split.fit;
    Rng shuffle_rng(derive_seed(config.seed, 0x50F1));
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        long seen = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(),
                                        start + static_cast<size_t>(config.batch_size));
            std::span<const int> batch(order.data() + start, end - start);
            Eigen::MatrixXd x = gather_rows(features, batch);
            std::vector<int> y = gather_labels(labels, batch);

            MlpTrace trace;
            Eigen::MatrixXd logits = mlp_logits(x, params, MlpMode::Train, &trace);
            Eigen::MatrixXd d_logits;
            const double loss = cross_entropy(logits, y, &d_logits);
            require(!std::isnan(loss), "train_mlp: NaN loss at epoch ", epoch);

            MlpParams grads = MlpParams::zeros_like(params);
            mlp_backward(trace, params, d_logits, grads);
            optimizer.step(params.tensors(), grads.tensors());

            loss_sum += loss * static_cast<double>(batch.size());
            seen += static_cast<long>(batch.size());
        }

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(seen);
        if (!split.val.empty()) {
            Eigen::MatrixXd logits = mlp_logits(val_x, params, MlpMode::Eval);
            row.val_loss = cross_entropy(logits, val_y);
            long correct = 0;
            for (Eigen::Index r = 0; r < logits.rows(); ++r) {
                Eigen::Index argmax = 0;
                logits.row(r).maxCoeff(&argmax);
                if (static_cast<int>(argmax) == val_y[r]) ++correct;
            }
            row.val_acc = static_cast<double>(correct) / logits.rows();
        } else {
            row.val_loss = row.train_loss;
            row.val_acc = 0.0;
        }
        result.trace.push_back(row);

        if (row.val_loss < best_val) {
            best_val = row.val_loss;
            result.params = params;
            result.best_epoch = epoch;
        }
    }
    if (result.best_epoch < 0) {
        result.params = params;
        result.best_epoch = config.max_epochs - 1;
    }
    return result;
}

FinetuneResult finetune(const EncoderParams& initial_encoder,
                        const MlpConfig& mlp_config,
                        std::span<const PixelTimeSeries> series,
                        std::span<const int> labels, const FinetuneConfig& config) {
    require(series.size() == labels.size(), "finetune: series vs labels mismatch");
    require(mlp_config.in_dim == initial_encoder.config.out_dim,
            "mlp in_dim ", mlp_config.in_dim, " must match encoder out_dim ",
            initial_encoder.config.out_dim);
    const int n = static_cast<int>(series.size());
    const int n_classes = count_classes(labels);
    require(n_classes >= 2, "finetune: need at least 2 classes");

    std::vector<PixelTimeSeries> normalized;
    normalized.reserve(series.size());
    for (const auto& s : series) normalized.push_back(normalize(s, config.norm));

    if (config.freeze_encoder) {
        // Frozen encoder: extract features once and train the head alone.
        Eigen::MatrixXd features(n, initial_encoder.config.out_dim);
        parallel_for(n, [&](int i) {
            features.row(i) =
                encode(normalized[i], initial_encoder, config.groups).transpose();
        }, config.train.threads);
        TrainResult head = train_mlp(features, labels, mlp_config, config.train);
        FinetuneResult result;
        result.encoder = initial_encoder;
        result.mlp = std::move(head.params);
        result.trace = std::move(head.trace);
        result.best_epoch = head.best_epoch;
        result.first_batch_encoder_grad_norm = 0.0;
        return result;
    }

    EncoderParams encoder = initial_encoder;
    MlpConfig cfg = mlp_config;
    cfg.n_classes = std::max(cfg.n_classes, n_classes);
    MlpParams mlp = MlpParams::init(cfg, derive_seed(config.train.seed, 0x1417));
    AdamW optimizer(config.train.lr, config.train.weight_decay);

    ValSplit split = carve_validation(labels, cfg.n_classes,
                                      config.train.val_fraction, config.train.seed);
    std::vector<int> val_y = gather_labels(labels, split.val);

    const int threads =
        std::min(config.train.threads > 0 ? config.train.threads : worker_count(),
                 std::max(1, config.train.batch_size));

    FinetuneResult result;
    double best_val = std::numeric_limits<double>::infinity();
    bool first_batch = true;

    std::vector<int> order = split.fit;
    Rng shuffle_rng(derive_seed(config.train.seed, 0x50F1));

    for (int epoch = 0; epoch < config.train.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        long seen = 0;

        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(config.train.batch_size)) {
            const size_t end = std::min(
                order.size(), start + static_cast<size_t>(config.train.batch_size));
            const int bsz = static_cast<int>(end - start);

            std::vector<EncoderTrace> traces(bsz);
            Eigen::MatrixXd feats(bsz, encoder.config.out_dim);
            parallel_for(bsz, [&](int bi) {
                const int idx = order[start + bi];
                TokenSequence seq = tokenize(normalized[idx], encoder, config.groups);
                feats.row(bi) =
                    encode_tokens(seq, encoder, &traces[bi]).transpose();
            }, threads);

            std::vector<int> y;
            y.reserve(bsz);
            for (int bi = 0; bi < bsz; ++bi) y.push_back(labels[order[start + bi]]);

            MlpTrace mlp_trace;
            Eigen::MatrixXd logits = mlp_logits(feats, mlp, MlpMode::Train, &mlp_trace);
            Eigen::MatrixXd d_logits;
            const double loss = cross_entropy(logits, y, &d_logits);
            require(!std::isnan(loss), "finetune: NaN loss at epoch ", epoch);

            MlpParams mlp_grads = MlpParams::zeros_like(mlp);
            Eigen::MatrixXd d_feats;
            mlp_backward(mlp_trace, mlp, d_logits, mlp_grads, &d_feats);

            std::vector<EncoderParams> tgrads(threads, EncoderParams::zeros_like(encoder));
            parallel_for(bsz, [&](int bi) {
                encoder_backward(traces[bi], encoder, d_feats.row(bi).transpose(),
                                 tgrads[bi % threads]);
            }, threads);
            EncoderParams enc_grads = EncoderParams::zeros_like(encoder);
            for (int t = 0; t < threads; ++t) {
                add_tensors(enc_grads.tensors(), tgrads[t].tensors());
            }

            if (first_batch) {
                result.first_batch_encoder_grad_norm = tensors_norm(enc_grads.tensors());
                first_batch = false;
            }

            auto enc_refs = encoder.tensors();
            auto mlp_refs = mlp.tensors();
            std::vector<TensorRef> all_params;
            all_params.reserve(enc_refs.size() + mlp_refs.size());
            for (auto& r : enc_refs) all_params.push_back({"enc." + r.name, r.tensor});
            for (auto& r : mlp_refs) all_params.push_back({"mlp." + r.name, r.tensor});
            auto encg_refs = enc_grads.tensors();
            auto mlpg_refs = mlp_grads.tensors();
            std::vector<TensorRef> all_grads;
            all_grads.reserve(encg_refs.size() + mlpg_refs.size());
            for (auto& r : encg_refs) all_grads.push_back({"enc." + r.name, r.tensor});
            for (auto& r : mlpg_refs) all_grads.push_back({"mlp." + r.name, r.tensor});
            optimizer.step(all_params, all_grads);

            loss_sum += loss * bsz;
            seen += bsz;
        }

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(seen);
        if (!split.val.empty()) {
            Eigen::MatrixXd val_x(split.val.size(), encoder.config.out_dim);
            parallel_for(static_cast<int>(split.val.size()), [&](int i) {
                val_x.row(i) =
                    encode(normalized[split.val[i]], encoder, config.groups).transpose();
            }, threads);
            Eigen::MatrixXd logits = mlp_logits(val_x, mlp, MlpMode::Eval);
            row.val_loss = cross_entropy(logits, val_y);
            long correct = 0;
            for (Eigen::Index r = 0; r < logits.rows(); ++r) {
                Eigen::Index argmax = 0;
                logits.row(r).maxCoeff(&argmax);
                if (static_cast<int>(argmax) == val_y[r]) ++correct;
            }
            row.val_acc = static_cast<double>(correct) / logits.rows();
        } else {
            row.val_loss = row.train_loss;
        }
        result.trace.push_back(row);

        if (row.val_loss < best_val) {
            best_val = row.val_loss;
            result.encoder = encoder;
            result.mlp = mlp;
            result.best_epoch = epoch;
        }
    }
    if (result.best_epoch < 0) {
        result.encoder = encoder;
        result.mlp = mlp;
        result.best_epoch = config.train.max_epochs - 1;
    }
    return result;
}

}  // namespace pheno
