#pragma once

// Named parameter store with deterministic per-name initialization, the Adam
// update rule, and a versioned binary checkpoint format.

#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chartex/nn/autodiff.hpp"

namespace chartex::nn {

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

template <typename S>
class ParamStore {
  public:
    struct Entry {
        Tensor<S> tensor;
        bool trainable = true;
    };

    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    // get-or-create; initialization depends only on (seed, name), so creation
    // order cannot perturb reproducibility
    Tensor<S> he_normal(const std::string& name, Shape shape, int fan_in) {
        if (auto it = entries_.find(name); it != entries_.end()) {
            require(it->second.tensor.shape() == shape, "ShapeError",
                    "parameter '" + name + "' exists with different shape");
            return it->second.tensor;
        }
        std::mt19937_64 rng(seed_ ^ fnv1a(name));
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
        Vec<S> v(shape.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<S>(dist(rng));
        auto t = Tensor<S>::param(shape, std::move(v));
        entries_[name] = {t, true};
        return t;
    }

    Tensor<S> constant(const std::string& name, Shape shape, S value) {
        if (auto it = entries_.find(name); it != entries_.end()) {
            require(it->second.tensor.shape() == shape, "ShapeError",
                    "parameter '" + name + "' exists with different shape");
            return it->second.tensor;
        }
        auto t = Tensor<S>::param(shape, Vec<S>::Constant(shape.size(), value));
        entries_[name] = {t, true};
        return t;
    }

    // non-trainable persistent state (batch-norm running stats)
    Vec<S>& buffer(const std::string& name, int size, S init) {
        auto it = buffers_.find(name);
        if (it == buffers_.end()) it = buffers_.emplace(name, Vec<S>::Constant(size, init)).first;
        require(static_cast<int>(it->second.size()) == size, "ShapeError",
                "buffer '" + name + "' exists with different size");
        return it->second;
    }

    void zero_grads() {
        for (auto& [name, e] : entries_) e.tensor.zero_grad();
    }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::map<std::string, Vec<S>>& buffers() { return buffers_; }
    const std::map<std::string, Vec<S>>& buffers() const { return buffers_; }
    uint64_t seed() const { return seed_; }

    int64_t parameter_count() const {
        int64_t total = 0;
        for (const auto& [name, e] : entries_) total += e.tensor.shape().size();
        return total;
    }

  private:
    uint64_t seed_;
    std::map<std::string, Entry> entries_;
    std::map<std::string, Vec<S>> buffers_;
};

template <typename S>
class Adam {
  public:
    explicit Adam(S lr = S(2.5e-4), S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(ParamStore<S>& store) {
        ++t_;
        const S bc1 = S(1) - std::pow(b1_, S(t_));
        const S bc2 = S(1) - std::pow(b2_, S(t_));
        for (auto& [name, e] : store.entries()) {
            if (!e.trainable) continue;
            auto& g = e.tensor.grad();
            if (g.size() == 0) continue;
            auto& [m, v] = state_[name];
            if (m.size() != g.size()) {
                m = Vec<S>::Zero(g.size());
                v = Vec<S>::Zero(g.size());
            }
            m = b1_ * m + (S(1) - b1_) * g;
            v = b2_ * v + (S(1) - b2_) * g.square();
            e.tensor.val() -= lr_ * (m / bc1) / ((v / bc2).sqrt() + eps_);
        }
    }

    S lr() const { return lr_; }
    void set_lr(S lr) { lr_ = lr; }

    // exposed so the trainer can checkpoint and restore optimizer moments
    int step_count() const { return t_; }
    void set_step_count(int t) { t_ = t; }
    std::map<std::string, std::pair<Vec<S>, Vec<S>>>& state() { return state_; }

  private:
    S lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::map<std::string, std::pair<Vec<S>, Vec<S>>> state_;
};

// ---- checkpoint: "CXCP" magic, u32 version, u64 JSON header length, JSON
// header (tensor/buffer manifest + user metadata), float32 blobs in manifest
// order ----

inline constexpr char kCheckpointMagic[4] = {'C', 'X', 'C', 'P'};
inline constexpr uint32_t kCheckpointVersion = 1;

template <typename S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store,
                     const nlohmann::json& meta = nlohmann::json::object()) {
    nlohmann::ordered_json header;
    header["meta"] = meta;
    header["tensors"] = nlohmann::json::array();
    for (const auto& [name, e] : store.entries()) {
        const Shape& s = e.tensor.shape();
        header["tensors"].push_back({{"name", name},
                                     {"shape", {s.n, s.c, s.h, s.w}},
                                     {"trainable", e.trainable}});
    }
    header["buffers"] = nlohmann::json::array();
    for (const auto& [name, b] : store.buffers())
        header["buffers"].push_back({{"name", name}, {"size", static_cast<int>(b.size())}});
    const std::string htext = header.dump();

    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "WriteFailed", path);
    out.write(kCheckpointMagic, 4);
    const uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t hlen = htext.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(htext.data(), static_cast<std::streamsize>(hlen));

    auto write_blob = [&](const Vec<S>& v) {
        std::vector<float> f(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v(i));
        out.write(reinterpret_cast<const char*>(f.data()),
                  static_cast<std::streamsize>(f.size() * sizeof(float)));
    };
    for (const auto& [name, e] : store.entries()) write_blob(e.tensor.val());
    for (const auto& [name, b] : store.buffers()) write_blob(b);
    require(static_cast<bool>(out), "WriteFailed", path);
}

// Loads into a fresh store; returns the header metadata.
template <typename S>
nlohmann::json load_checkpoint(const std::string& path, ParamStore<S>& store) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "MissingFile", path);
    char magic[4];
    in.read(magic, 4);
    require(in && std::equal(magic, magic + 4, kCheckpointMagic), "BadCheckpoint",
            path + ": wrong magic");
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    require(version == kCheckpointVersion, "BadCheckpoint",
            path + ": unsupported version " + std::to_string(version));
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    require(in && hlen > 0 && hlen < (1ull << 31), "BadCheckpoint", path + ": header length");
    std::string htext(hlen, '\0');
    in.read(htext.data(), static_cast<std::streamsize>(hlen));
    require(static_cast<bool>(in), "BadCheckpoint", path + ": truncated header");
    const auto header = nlohmann::json::parse(htext);

    auto read_blob = [&](int size) {
        std::vector<float> f(size);
        in.read(reinterpret_cast<char*>(f.data()),
                static_cast<std::streamsize>(f.size() * sizeof(float)));
        require(static_cast<bool>(in), "BadCheckpoint", path + ": truncated blob");
        Vec<S> v(size);
        for (int i = 0; i < size; ++i) v(i) = static_cast<S>(f[i]);
        return v;
    };
    for (const auto& t : header.at("tensors")) {
        const auto sh = t.at("shape");
        Shape shape{sh.at(0), sh.at(1), sh.at(2), sh.at(3)};
        auto tensor = Tensor<S>::param(shape, read_blob(shape.size()));
        store.entries()[t.at("name")] = {tensor, t.at("trainable").template get<bool>()};
    }
    for (const auto& b : header.at("buffers"))
        store.buffers()[b.at("name")] = read_blob(b.at("size"));
    return header.at("meta");
}

}  // namespace chartex::nn
