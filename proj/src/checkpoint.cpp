#include "phenoclass/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "phenoclass/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

namespace pheno {

void CheckpointMeta::set(const std::string& key, std::string value) {
    for (auto& [k, v] : entries) {
        if (k == key) {
            v = std::move(value);
            return;
        }
    }
    entries.emplace_back(key, std::move(value));
}

const std::string* CheckpointMeta::find(const std::string& key) const {
    for (const auto& [k, v] : entries) {
        if (k == key) return &v;
    }
    return nullptr;
}

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const TensorRef> tensors,
                     const CheckpointMeta& meta) {
    std::ostringstream header;
    header << "phenoclass-checkpoint v1\n";
    for (const auto& [k, v] : meta.entries) header << "meta " << k << ' ' << v << '\n';

    size_t offset = 0;
    for (const auto& ref : tensors) {
        require(ref.name.find(' ') == std::string::npos,
                "tensor name contains a space: ", ref.name);
        header << "param " << ref.name << ' ' << ref.tensor->rows() << ' '
               << ref.tensor->cols() << ' ' << offset << '\n';
        offset += static_cast<size_t>(ref.tensor->size());
    }
    header << "blob " << offset << '\n';

    std::string contents = header.str();
    contents.reserve(contents.size() + offset * sizeof(float));
    for (const auto& ref : tensors) {
        const Eigen::MatrixXd& m = *ref.tensor;
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const float f = static_cast<float>(m.data()[i]);
            char bytes[sizeof(float)];
            std::memcpy(bytes, &f, sizeof(float));
            contents.append(bytes, sizeof(float));
        }
    }

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "cannot open for writing: ", tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        require(out.good(), "write failed: ", tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

struct ManifestEntry {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    size_t offset = 0;
};

struct ParsedHeader {
    CheckpointMeta meta;
    std::vector<ManifestEntry> params;
    size_t blob_floats = 0;
    std::streampos blob_start;
};

ParsedHeader parse_header(std::ifstream& in, const std::filesystem::path& path) {
    ParsedHeader parsed;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), path.string(), ": empty file");
    require(line == "phenoclass-checkpoint v1", path.string(),
            ": not a phenoclass checkpoint");
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            parsed.meta.set(key, value);
        } else if (tag == "param") {
            ManifestEntry e;
            ls >> e.name >> e.rows >> e.cols >> e.offset;
            require(!ls.fail(), path.string(), ": malformed param line: ", line);
            parsed.params.push_back(std::move(e));
        } else if (tag == "blob") {
            ls >> parsed.blob_floats;
            require(!ls.fail(), path.string(), ": malformed blob line");
            parsed.blob_start = in.tellg();
            return parsed;
        } else {
            fail(path.string(), ": unexpected manifest line: ", line);
        }
    }
    fail(path.string(), ": missing blob section");
}

}  // namespace

CheckpointMeta load_checkpoint(const std::filesystem::path& path,
                               std::span<const TensorRef> tensors) {
    require(std::filesystem::exists(path), "checkpoint not found: ", path.string());
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: ", path.string());
    ParsedHeader parsed = parse_header(in, path);

    require(parsed.params.size() == tensors.size(), path.string(), ": manifest has ",
            parsed.params.size(), " parameters, expected ", tensors.size());

    std::vector<float> blob(parsed.blob_floats);
    in.read(reinterpret_cast<char*>(blob.data()),
            static_cast<std::streamsize>(parsed.blob_floats * sizeof(float)));
    require(in.gcount() ==
                static_cast<std::streamsize>(parsed.blob_floats * sizeof(float)),
            path.string(), ": truncated blob");

    for (size_t i = 0; i < tensors.size(); ++i) {
        const auto& entry = parsed.params[i];
        const auto& ref = tensors[i];
        require(entry.name == ref.name, path.string(), ": parameter ", i, " is `",
                entry.name, "`, expected `", ref.name, "`");
        require(entry.rows == ref.tensor->rows() && entry.cols == ref.tensor->cols(),
                path.string(), ": shape mismatch for ", entry.name, " (", entry.rows,
                "x", entry.cols, " vs ", ref.tensor->rows(), "x", ref.tensor->cols(),
                ")");
        require(entry.offset + static_cast<size_t>(ref.tensor->size()) <=
                    parsed.blob_floats,
                path.string(), ": blob overrun for ", entry.name);
        for (Eigen::Index j = 0; j < ref.tensor->size(); ++j) {
            ref.tensor->data()[j] = static_cast<double>(blob[entry.offset + j]);
        }
    }
    return parsed.meta;
}

CheckpointMeta peek_checkpoint_meta(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), "checkpoint not found: ", path.string());
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open: ", path.string());
    return parse_header(in, path).meta;
}

void AdamW::step(std::span<const TensorRef> params, std::span<const TensorRef> grads) {
    require(params.size() == grads.size(), "optimizer: ", params.size(),
            " params vs ", grads.size(), " grads");
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, step_count_);
    const double bc2 = 1.0 - std::pow(beta2_, step_count_);
    for (size_t i = 0; i < params.size(); ++i) {
        require(params[i].name == grads[i].name, "optimizer: tensor order mismatch (",
                params[i].name, " vs ", grads[i].name, ")");
        Eigen::MatrixXd& p = *params[i].tensor;
        const Eigen::MatrixXd& g = *grads[i].tensor;
        auto& [m, v] = moments_[params[i].name];
        if (m.size() == 0) {
            m = Eigen::MatrixXd::Zero(p.rows(), p.cols());
            v = Eigen::MatrixXd::Zero(p.rows(), p.cols());
        }
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        const Eigen::MatrixXd m_hat = m / bc1;
        const Eigen::MatrixXd v_hat = v / bc2;
        p.array() -= lr_ * m_hat.array() / (v_hat.array().sqrt() + eps_);
        p *= (1.0 - lr_ * wd_);
    }
}

void zero_tensors(std::span<const TensorRef> tensors) {
    for (const auto& ref : tensors) ref.tensor->setZero();
}

void add_tensors(std::span<const TensorRef> dst, std::span<const TensorRef> src) {
    require(dst.size() == src.size(), "tensor pack size mismatch");
    for (size_t i = 0; i < dst.size(); ++i) *dst[i].tensor += *src[i].tensor;
}

double tensors_norm(std::span<const TensorRef> tensors) {
    double sum = 0.0;
    for (const auto& ref : tensors) sum += ref.tensor->squaredNorm();
    return std::sqrt(sum);
}

}  // namespace pheno
