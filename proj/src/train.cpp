// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include "qbye/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;

namespace qbye {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::runtime_error("train config: epochs must be >= 1");
    if (batch_size < 1) throw std::runtime_error("train config: batch_size must be >= 1");
    if (snr_low_db > snr_high_db)
        throw std::runtime_error("train config: snr range low must be <= high");
    if (noise_prob < 0.0 || noise_prob > 1.0)
        throw std::runtime_error("train config: noise_prob must be in [0, 1]");
    if (far_field)
        throw std::runtime_error("train config: far-field augmentation is not implemented");
}

NoisePool load_noise_pool(const std::string& dir) {
    NoisePool pool;
    if (dir.empty()) return pool;
    if (!fs::is_directory(dir)) throw std::runtime_error("noise dir not found: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".wav")
            pool.files.push_back(e.path().string());
    }
    std::sort(pool.files.begin(), pool.files.end());
    if (pool.files.empty()) throw std::runtime_error("noise dir has no wav files: " + dir);
    return pool;
}

std::pair<FeatureMatrix, int> make_training_example(const Manifest& manifest, size_t entry_idx,
                                                    const NoisePool& noise,
                                                    const TrainConfig& tcfg,
                                                    const FrontendConfig& fcfg, Rng& rng,
                                                    AugmentInfo* info) {
    const ManifestEntry& entry = manifest.entries.at(entry_idx);
    const int label = manifest.label_index(entry.label);
    AudioClip clip = load_wav(manifest.resolve_path(entry));
    clip = standardize_duration(clip, 1.0, rng);
    if (info) *info = AugmentInfo{};
    if (!noise.files.empty() && tcfg.noise_prob > 0.0 && rng.uniform() < tcfg.noise_prob) {
        const size_t pick = static_cast<size_t>(
            rng.uniform_int(0, static_cast<int64_t>(noise.files.size()) - 1));
        AudioClip noise_clip = load_wav(noise.files[pick]);
        const double snr = rng.uniform(tcfg.snr_low_db, tcfg.snr_high_db);
        clip = mix_noise_at_snr(clip, noise_clip, snr, rng);
        if (info) *info = AugmentInfo{true, snr};
    }
    return {make_features(clip, fcfg), label};
}

void adam_step(MixerParams<float>& params, const Gradients<float>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    // walk (m, grads) and (v, grads) and (params, m/v) in lockstep via index
    struct Slot {
        std::vector<float>* p;
        const std::vector<float>* g;
        std::vector<float>* m;
        std::vector<float>* v;
    };
    std::vector<std::vector<float>*> p_list, m_list, v_list;
    std::vector<const std::vector<float>*> g_list;
    visit_params(params, [&](const std::string&, int, int, std::vector<float>& t) {
        p_list.push_back(&t);
    });
    visit_params(grads, [&](const std::string&, int, int, const std::vector<float>& t) {
        g_list.push_back(&t);
    });
    visit_params(state.m, [&](const std::string&, int, int, std::vector<float>& t) {
        m_list.push_back(&t);
    });
    visit_params(state.v, [&](const std::string&, int, int, std::vector<float>& t) {
        v_list.push_back(&t);
    });
    if (p_list.size() != g_list.size() || p_list.size() != m_list.size() ||
        p_list.size() != v_list.size())
        throw std::runtime_error("adam_step: parameter/gradient tree mismatch");
    for (size_t i = 0; i < p_list.size(); ++i) {
        auto& p = *p_list[i];
        const auto& g = *g_list[i];
        auto& m = *m_list[i];
        auto& v = *v_list[i];
        if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
            throw std::runtime_error("adam_step: tensor shape mismatch");
        for (size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            const double mj = beta1 * m[j] + (1.0 - beta1) * gj;
            const double vj = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            p[j] = static_cast<float>(p[j] - lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

namespace {

// Clean deterministic pipeline used for accuracy measurements.
FeatureMatrix clean_features(const Manifest& manifest, size_t idx, const FrontendConfig& fcfg) {
    AudioClip clip = load_wav(manifest.resolve_path(manifest.entries[idx]));
    clip = standardize_duration_center(clip, 1.0);
    return make_features(clip, fcfg);
}

double accuracy_over(const Manifest& manifest, const std::vector<size_t>& indices,
                     const MixerParams<float>& params, const MixerConfig& cfg,
                     const FrontendConfig& fcfg) {
    if (indices.empty()) return 0.0;
    int correct = 0;
    for (size_t idx : indices) {
        FeatureMatrix x = clean_features(manifest, idx, fcfg);
        std::vector<float> z = encoder_forward(x, params, cfg);
        std::vector<float> logits = decoder_forward(z, params);
        int arg = 0;
        for (size_t k = 1; k < logits.size(); ++k)
            if (logits[k] > logits[static_cast<size_t>(arg)]) arg = static_cast<int>(k);
        if (arg == manifest.label_index(manifest.entries[idx].label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

} // namespace

TrainResult train(const Manifest& manifest, const TrainConfig& tcfg, const MixerConfig& mcfg,
                  const FrontendConfig& fcfg) {
    tcfg.validate();
    if (manifest.labels.size() < 2)
        throw std::runtime_error("train: need at least 2 classes, got " +
                                 std::to_string(manifest.labels.size()));
    const std::vector<size_t> train_idx = manifest.split_indices("train");
    const std::vector<size_t> valid_idx = manifest.split_indices("valid");
    if (train_idx.empty()) throw std::runtime_error("train: empty train split");

    MixerConfig cfg = mcfg;
    cfg.num_classes = static_cast<int>(manifest.labels.size());
    cfg.validate();

    const NoisePool noise = load_noise_pool(tcfg.noise_dir);
    const Rng root(tcfg.seed);
    Rng init_rng = root.child("init");
    MixerParams<float> params = init_params<float>(cfg, init_rng);
    AdamState opt{zeros_like(params), zeros_like(params), 0};

    TrainResult result;
    double best_metric = -1.0;
    int64_t best_step = 0;

    std::vector<size_t> order(train_idx);
    for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        Rng shuffle_rng = root.child("shuffle", static_cast<uint64_t>(epoch));
        order = train_idx;
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tcfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(tcfg.batch_size));
            std::vector<std::pair<MatF, int>> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                Rng ex_rng = root.child("aug", static_cast<uint64_t>(epoch),
                                        static_cast<uint64_t>(order[i]));
                batch.push_back(make_training_example(manifest, order[i], noise, tcfg, fcfg, ex_rng));
            }
            try {
                Rng drop_rng = root.child("drop", static_cast<uint64_t>(epoch),
                                          static_cast<uint64_t>(start));
                LossGrads<float> lg = loss_and_gradients(batch, params, cfg,
                                                         cfg.dropout > 0.0f ? &drop_rng : nullptr);
                adam_step(params, lg.grads, opt, tcfg.learning_rate, tcfg.adam_beta1,
                          tcfg.adam_beta2, tcfg.adam_eps);
                loss_sum += static_cast<double>(lg.loss) * static_cast<double>(batch.size());
                seen += batch.size();
            } catch (const std::exception& e) {
                throw std::runtime_error("train: aborted at optimizer step " +
                                         std::to_string(opt.step + 1) + " (epoch " +
                                         std::to_string(epoch) + "): " + e.what());
            }
        }
        const double train_loss = loss_sum / static_cast<double>(seen);

        nlohmann::json row{{"epoch", epoch}, {"train_loss", train_loss}};
        double epoch_metric;
        if (!valid_idx.empty()) {
            const double valid_acc = accuracy_over(manifest, valid_idx, params, cfg, fcfg);
            row["valid_acc"] = valid_acc;
            epoch_metric = valid_acc;
        } else {
            row["valid_acc"] = nullptr;
            epoch_metric = -train_loss; // no valid split: keep the lowest-loss epoch
        }
        result.metrics_lines.push_back(row.dump());
        result.epochs_run = epoch;

        // ties go to the later epoch so early stop retains the stopping params
        if (epoch_metric >= best_metric) {
            best_metric = epoch_metric;
            best_step = opt.step;
            result.best.params = params;
        }

        if (tcfg.stop_at_train_acc > 0.0) {
            const double train_acc = accuracy_over(manifest, train_idx, params, cfg, fcfg);
            if (train_acc >= tcfg.stop_at_train_acc) break;
        }
    }

    // accuracy of the retained checkpoint, i.e. of what callers will load
    result.final_train_acc = accuracy_over(manifest, train_idx, result.best.params, cfg, fcfg);
    result.best.model = cfg;
    result.best.frontend = fcfg;
    result.best.labels = manifest.labels;
    result.best.train_step = best_step;
    return result;
}

} // namespace qbye
