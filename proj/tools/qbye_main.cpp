// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

// qbye: open-vocabulary keyword spotting pipeline in one binary.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error,
// 3 profile/model fingerprint mismatch.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qbye/checkpoint.hpp"
#include "qbye/dataset.hpp"
#include "qbye/eval.hpp"
#include "qbye/runtime.hpp"
#include "qbye/train.hpp"

namespace {

using namespace qbye;

MixerConfig load_model_config(const std::string& path) {
    if (path.empty()) return MixerConfig{};
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open model config: " + path);
    nlohmann::json j;
    f >> j;
    return mixer_config_from_json(j);
}

Model load_model(const std::string& checkpoint_path) {
    return Model::from_checkpoint(load_checkpoint(checkpoint_path));
}

void write_lines(const std::vector<std::string>& lines, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (const auto& l : lines) f << l << "\n";
}

int cmd_info(const std::string& config_path, const std::string& checkpoint_path) {
    MixerConfig cfg;
    if (!checkpoint_path.empty()) {
        cfg = load_checkpoint(checkpoint_path).model;
    } else {
        cfg = load_model_config(config_path);
    }
    const int64_t params = count_params(cfg, false);
    const int64_t macs = count_macs(cfg);
    std::printf("params: %lld (%.2fM), macs: %lld (%.2fM)\n",
                static_cast<long long>(params), static_cast<double>(params) / 1e6,
                static_cast<long long>(macs), static_cast<double>(macs) / 1e6);
    if (cfg.num_classes > 0) {
        const int64_t with_dec = count_params(cfg, true);
        std::printf("params with decoder: %lld (%.2fM)\n", static_cast<long long>(with_dec),
                    static_cast<double>(with_dec) / 1e6);
    }
    std::printf("conventions: params = trainable encoder scalars (decoder excluded above); "
                "macs = linear-layer multiplies for one %dx%d window "
                "(layernorm/activation/pooling excluded)\n",
                cfg.feature_dim, cfg.time_dim);
    return 0;
}

int cmd_gen_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    SyntheticDataset ds = generate_synthetic_dataset(spec, out_dir);
    std::printf("wrote %d wavs (%d classes x %d) and %s\n", spec.classes * spec.per_class,
                spec.classes, spec.per_class, ds.manifest_path.c_str());
    if (!ds.noise_paths.empty())
        std::printf("wrote %zu noise wavs under %s/noise\n", ds.noise_paths.size(),
                    out_dir.c_str());
    return 0;
}

int cmd_featurize(const std::string& wav_path, const std::string& out_path, bool raw_mfcc) {
    FrontendConfig fcfg;
    AudioClip clip = load_wav(wav_path);
    const size_t original = clip.samples.size();
    if (original != kSampleRate) clip = standardize_duration_center(clip, 1.0);
    FeatureMatrix feat = compute_mfcc(clip, fcfg);
    if (!raw_mfcc) feat = apply_cmvn(feat, fcfg.cmvn_eps);
    if (original != kSampleRate)
        std::fprintf(stderr, "note: %zu samples center-standardized to 1 s\n", original);
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + out_path);
    char num[48];
    for (int r = 0; r < feat.rows; ++r) {
        for (int c = 0; c < feat.cols; ++c) {
            std::snprintf(num, sizeof(num), "%.9g", static_cast<double>(feat.at(r, c)));
            f << num << (c + 1 < feat.cols ? "," : "\n");
        }
    }
    std::printf("featurized %s: %dx%d -> %s\n", wav_path.c_str(), feat.rows, feat.cols,
                out_path.c_str());
    return 0;
}

int cmd_train(const std::string& manifest_path, const TrainConfig& tcfg, MixerConfig mcfg,
              const std::string& out_path, const std::string& metrics_path) {
    Manifest manifest = load_manifest(manifest_path);
    FrontendConfig fcfg;
    TrainResult result = train(manifest, tcfg, mcfg, fcfg);
    save_checkpoint(result.best, out_path);
    if (!metrics_path.empty()) write_lines(result.metrics_lines, metrics_path);
    std::printf("trained %d epochs, train_acc=%.4f, checkpoint -> %s\n", result.epochs_run,
                result.final_train_acc, out_path.c_str());
    return 0;
}

int cmd_embed(const std::string& checkpoint_path, const std::string& wav_path,
              const std::string& out_path) {
    Model model = load_model(checkpoint_path);
    EmbeddingSequence seq = embed_utterance(load_wav(wav_path), model);
    save_embedding_sequence(seq, model.fingerprint, out_path);
    std::printf("embedded %s: %zu windows -> %s\n", wav_path.c_str(), seq.vectors.size(),
                out_path.c_str());
    return 0;
}

int cmd_enroll(const std::string& checkpoint_path, const std::string& keyword,
               const std::vector<std::string>& wav_paths, const std::string& out_path) {
    Model model = load_model(checkpoint_path);
    std::vector<AudioClip> clips;
    for (const auto& p : wav_paths) clips.push_back(load_wav(p));
    EnrollmentProfile profile = enroll(keyword, clips, model);
    save_profile(profile, out_path);
    std::printf("enrolled \"%s\" from %zu clips -> %s\n", keyword.c_str(), clips.size(),
                out_path.c_str());
    return 0;
}

int cmd_detect(const std::string& checkpoint_path, const std::string& profile_path,
               const std::string& wav_path, double threshold) {
    Model model = load_model(checkpoint_path);
    EnrollmentProfile profile = load_profile(profile_path);
    EmbeddingSequence query = embed_utterance(load_wav(wav_path), model);
    DetectionResult det = detect(profile, query, threshold, model.fingerprint);
    std::printf("%s score=%.6f enrollment=%d offset=%d\n", det.triggered ? "TRIGGERED" : "NO",
                det.score, det.best_enrollment_index, det.best_alignment_offset);
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& spec_path, double target_fa,
             const std::string& roc_path, const std::string& report_path, int threads) {
    Model model = load_model(checkpoint_path);
    std::vector<EvalUtterance> utterances = load_eval_spec(spec_path);
    EvalReport report = run_eval(utterances, model, target_fa, threads);
    if (!roc_path.empty()) write_roc_csv(report, roc_path);
    if (!report_path.empty()) write_report_json(report, report_path);
    if (report.target_unreachable)
        std::fprintf(stderr, "warning: no threshold reaches %.3f FA/hr, reporting FRR=100\n",
                     target_fa);
    std::printf("frr_at_%.2ffa=%.4f%% over %.4f negative hours (%d pos, %d neg)\n",
                report.target_fa_per_hour, report.frr_at_target, report.negative_hours,
                report.n_pos, report.n_neg);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qbye - open-vocabulary keyword spotting (mixer encoder + cosine matching)"};
    app.require_subcommand(1);

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "Generate a deterministic tone-word dataset");
    SyntheticSpec spec;
    std::string gen_out;
    gen->add_option("--classes", spec.classes, "Number of classes")->capture_default_str();
    gen->add_option("--per-class", spec.per_class, "Clips per class")->capture_default_str();
    gen->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
    gen->add_option("--valid-frac", spec.valid_fraction, "Fraction per class held out as valid")
        ->capture_default_str();
    gen->add_option("--noise-files", spec.noise_files, "Extra noise WAVs to generate")
        ->capture_default_str();
    gen->add_option("--out-dir", gen_out, "Output directory")->required();

    // featurize
    auto* feat = app.add_subcommand("featurize", "Write the 81x81 feature matrix of a 1 s WAV");
    std::string feat_wav, feat_out;
    bool feat_raw = false;
    feat->add_option("--wav", feat_wav, "Input WAV (PCM16 mono 16 kHz, 1 s)")->required();
    feat->add_option("--out", feat_out, "Output CSV path")->required();
    feat->add_flag("--raw-mfcc", feat_raw, "Skip CMVN");

    // train
    auto* tr = app.add_subcommand("train", "Train the word classifier");
    std::string tr_manifest, tr_out, tr_metrics, tr_model_config;
    TrainConfig tcfg;
    int tr_blocks = -1;
    std::string tr_activation, tr_input_mode;
    double tr_dropout = -1.0;
    tr->add_option("--manifest", tr_manifest, "Training manifest (JSONL)")->required();
    tr->add_option("--out", tr_out, "Checkpoint output path")->required();
    tr->add_option("--metrics-out", tr_metrics, "Per-epoch metrics JSONL path");
    tr->add_option("--model-config", tr_model_config, "Model config JSON (defaults when omitted)");
    tr->add_option("--epochs", tcfg.epochs, "Training epochs")->capture_default_str();
    tr->add_option("--batch-size", tcfg.batch_size, "Batch size")->capture_default_str();
    tr->add_option("--lr", tcfg.learning_rate, "Adam learning rate")->capture_default_str();
    tr->add_option("--seed", tcfg.seed, "Random seed")->capture_default_str();
    tr->add_option("--noise-dir", tcfg.noise_dir, "Directory of noise WAVs");
    tr->add_option("--noise-prob", tcfg.noise_prob, "Noise augmentation probability")
        ->capture_default_str();
    tr->add_option("--snr-low", tcfg.snr_low_db, "Lowest augmentation SNR (dB)")
        ->capture_default_str();
    tr->add_option("--snr-high", tcfg.snr_high_db, "Highest augmentation SNR (dB)")
        ->capture_default_str();
    tr->add_option("--stop-train-acc", tcfg.stop_at_train_acc,
                   "Stop early once clean train accuracy reaches this (0 = off)")
        ->capture_default_str();
    tr->add_option("--blocks", tr_blocks, "Override number of mixing blocks");
    tr->add_option("--activation", tr_activation, "Override activation");
    tr->add_option("--dropout", tr_dropout, "Override dropout");
    tr->add_option("--input-mode", tr_input_mode, "Override input mode");

    // info
    auto* info = app.add_subcommand("info", "Report parameter and MAC counts");
    std::string info_config, info_ckpt;
    info->add_option("--config", info_config, "Model config JSON");
    info->add_option("--checkpoint", info_ckpt, "Checkpoint path");

    // embed
    auto* emb = app.add_subcommand("embed", "Embed an utterance into window embeddings");
    std::string emb_ckpt, emb_wav, emb_out;
    emb->add_option("--checkpoint", emb_ckpt, "Checkpoint path")->required();
    emb->add_option("--wav", emb_wav, "Input WAV")->required();
    emb->add_option("--out", emb_out, "Output JSON path")->required();

    // enroll
    auto* enr = app.add_subcommand("enroll", "Build a keyword profile from example clips");
    std::string enr_ckpt, enr_keyword, enr_out;
    std::vector<std::string> enr_wavs;
    enr->add_option("--checkpoint", enr_ckpt, "Checkpoint path")->required();
    enr->add_option("--keyword", enr_keyword, "Keyword id")->required();
    enr->add_option("--out", enr_out, "Profile output path")->required();
    enr->add_option("wavs", enr_wavs, "Enrollment WAVs")->required()->expected(-1);

    // detect
    auto* det = app.add_subcommand("detect", "Score a query WAV against a profile");
    std::string det_ckpt, det_profile, det_wav;
    double det_threshold = 0.5;
    det->add_option("--checkpoint", det_ckpt, "Checkpoint path")->required();
    det->add_option("--profile", det_profile, "Profile path")->required();
    det->add_option("--wav", det_wav, "Query WAV")->required();
    det->add_option("--threshold", det_threshold, "Trigger threshold (cosine distance)")
        ->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "Sweep the ROC and report FRR at a target FA rate");
    std::string ev_ckpt, ev_spec, ev_roc, ev_report;
    double ev_target = 0.3;
    int ev_threads = 1;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path")->required();
    ev->add_option("--spec", ev_spec, "Eval dataset JSONL")->required();
    ev->add_option("--target-fa", ev_target, "Target false accepts per hour")
        ->capture_default_str();
    ev->add_option("--roc-out", ev_roc, "ROC CSV output path");
    ev->add_option("--report-out", ev_report, "JSON report output path");
    ev->add_option("--threads", ev_threads, "Scoring threads")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_synthetic(spec, gen_out);
        if (feat->parsed()) return cmd_featurize(feat_wav, feat_out, feat_raw);
        if (tr->parsed()) {
            MixerConfig mcfg = load_model_config(tr_model_config);
            if (tr_blocks >= 0) mcfg.num_blocks = tr_blocks;
            if (!tr_activation.empty()) mcfg.activation = activation_from_name(tr_activation);
            if (tr_dropout >= 0.0) mcfg.dropout = static_cast<float>(tr_dropout);
            if (!tr_input_mode.empty()) mcfg.input_mode = input_mode_from_name(tr_input_mode);
            return cmd_train(tr_manifest, tcfg, mcfg, tr_out, tr_metrics);
        }
        if (info->parsed()) {
            if (info_config.empty() && info_ckpt.empty())
                throw CLI::RequiredError("info: --config or --checkpoint");
            return cmd_info(info_config, info_ckpt);
        }
        if (emb->parsed()) return cmd_embed(emb_ckpt, emb_wav, emb_out);
        if (enr->parsed()) return cmd_enroll(enr_ckpt, enr_keyword, enr_wavs, enr_out);
        if (det->parsed()) return cmd_detect(det_ckpt, det_profile, det_wav, det_threshold);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_spec, ev_target, ev_roc, ev_report,
                                          ev_threads);
    } catch (const CLI::RequiredError& e) {
        std::cerr << e.what() << std::endl;
        return 2;
    } catch (const FingerprintMismatchError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 2;
}
