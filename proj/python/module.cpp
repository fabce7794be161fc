// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qbye/checkpoint.hpp"
#include "qbye/dataset.hpp"
#include "qbye/eval.hpp"
#include "qbye/runtime.hpp"
#include "qbye/train.hpp"

namespace py = pybind11;
using namespace qbye;

namespace {

AudioClip clip_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> samples) {
    if (samples.ndim() != 1) throw std::runtime_error("samples must be a 1-D float array");
    AudioClip clip;
    clip.samples.assign(samples.data(), samples.data() + samples.size());
    return clip;
}

py::array_t<float> mat_to_array(const MatF& m) {
    py::array_t<float> out({m.rows, m.cols});
    std::memcpy(out.mutable_data(), m.data.data(), m.data.size() * sizeof(float));
    return out;
}

py::array_t<float> sequence_to_array(const EmbeddingSequence& seq) {
    const int n = static_cast<int>(seq.vectors.size());
    const int d = n > 0 ? static_cast<int>(seq.vectors[0].size()) : 0;
    py::array_t<float> out({n, d});
    for (int i = 0; i < n; ++i)
        std::memcpy(out.mutable_data(i, 0), seq.vectors[static_cast<size_t>(i)].data(),
                    static_cast<size_t>(d) * sizeof(float));
    return out;
}

EmbeddingSequence sequence_from_array(
    py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 2) throw std::runtime_error("embedding sequence must be a 2-D array");
    EmbeddingSequence seq;
    const auto n = arr.shape(0), d = arr.shape(1);
    for (py::ssize_t i = 0; i < n; ++i) {
        Embedding e(static_cast<size_t>(d));
        std::memcpy(e.data(), arr.data(i, 0), static_cast<size_t>(d) * sizeof(float));
        seq.vectors.push_back(std::move(e));
        seq.window_offsets_ms.push_back(static_cast<double>(i) * 100.0);
    }
    return seq;
}

MixerConfig config_from_dict(const py::dict& d) {
    nlohmann::json j = nlohmann::json::object();
    for (auto item : d) {
        const std::string key = py::str(item.first);
        if (key == "activation" || key == "input_mode") {
            j[key] = py::cast<std::string>(item.second);
        } else if (key == "dropout") {
            j[key] = py::cast<double>(item.second);
        } else {
            j[key] = py::cast<int64_t>(item.second);
        }
    }
    return mixer_config_from_json(j);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Query-by-example keyword spotting: MFCC frontend, MLP-mixer encoder, "
              "cosine-distance matching and FRR/FA evaluation.";

    py::register_exception<FingerprintMismatchError>(m, "FingerprintMismatchError");

    m.def("load_wav", [](const std::string& path) {
        AudioClip clip = load_wav(path);
        py::array_t<float> out(static_cast<py::ssize_t>(clip.samples.size()));
        std::memcpy(out.mutable_data(), clip.samples.data(), clip.samples.size() * sizeof(float));
        return out;
    }, py::arg("path"), "Read a PCM16 mono 16 kHz WAV as float32 samples in [-1, 1].");

    m.def("save_wav", [](const std::string& path, py::array_t<float> samples) {
        save_wav(path, clip_from_array(samples));
    }, py::arg("path"), py::arg("samples"));

    m.def("mfcc", [](py::array_t<float> samples) {
        FrontendConfig cfg;
        return mat_to_array(compute_mfcc(clip_from_array(samples), cfg));
    }, py::arg("samples"), "81x81 MFCC matrix of a 1 s clip (no CMVN).");

    m.def("features", [](py::array_t<float> samples) {
        FrontendConfig cfg;
        return mat_to_array(make_features(clip_from_array(samples), cfg));
    }, py::arg("samples"), "81x81 CMVN-normalized MFCC matrix of a 1 s clip.");

    m.def("cmvn", [](py::array_t<float, py::array::c_style | py::array::forcecast> feat,
                     double eps) {
        if (feat.ndim() != 2) throw std::runtime_error("feature matrix must be 2-D");
        MatF f(static_cast<int>(feat.shape(0)), static_cast<int>(feat.shape(1)));
        std::memcpy(f.data.data(), feat.data(), f.data.size() * sizeof(float));
        return mat_to_array(apply_cmvn(f, eps));
    }, py::arg("features"), py::arg("eps") = 1e-8);

    m.def("count_params", [](const py::dict& cfg, bool include_decoder) {
        return count_params(config_from_dict(cfg), include_decoder);
    }, py::arg("config") = py::dict(), py::arg("include_decoder") = false);

    m.def("count_macs", [](const py::dict& cfg) { return count_macs(config_from_dict(cfg)); },
          py::arg("config") = py::dict());

    m.def("cosine_distance", [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
                                py::array_t<float, py::array::c_style | py::array::forcecast> b) {
        std::vector<float> va(a.data(), a.data() + a.size());
        std::vector<float> vb(b.data(), b.data() + b.size());
        return cosine_distance(va, vb);
    }, py::arg("a"), py::arg("b"));

    m.def("match_score", [](py::array_t<float> enrollment, py::array_t<float> query) {
        MatchResult r = match_score(sequence_from_array(enrollment), sequence_from_array(query));
        return py::make_tuple(r.distance, r.offset);
    }, py::arg("enrollment"), py::arg("query"),
       "Minimum cosine distance over window-aligned alignments -> (distance, offset).");

    m.def("sweep_roc", [](const std::vector<double>& pos, const std::vector<double>& neg,
                          double negative_hours) {
        py::list out;
        for (const RocPoint& p : sweep_roc(pos, neg, negative_hours))
            out.append(py::make_tuple(p.threshold, p.fa_per_hour, p.frr_percent));
        return out;
    }, py::arg("pos_scores"), py::arg("neg_scores"), py::arg("negative_hours"),
       "Exact ROC sweep -> list of (threshold, fa_per_hour, frr_percent).");

    m.def("frr_at_fa", [](const std::vector<py::tuple>& roc, double target) {
        std::vector<RocPoint> points;
        for (const auto& t : roc)
            points.push_back({py::cast<double>(t[0]), py::cast<double>(t[1]),
                              py::cast<double>(t[2])});
        bool unreachable = false;
        const double frr = frr_at_fa(points, target, &unreachable);
        return py::make_tuple(frr, unreachable);
    }, py::arg("roc"), py::arg("target_fa_per_hour"));

    py::class_<Model>(m, "Model")
        .def_static("load", [](const std::string& path) {
            return Model::from_checkpoint(load_checkpoint(path));
        }, py::arg("checkpoint_path"))
        .def_property_readonly("fingerprint", [](const Model& m_) { return m_.fingerprint; })
        .def_property_readonly("num_blocks", [](const Model& m_) { return m_.config.num_blocks; })
        .def_property_readonly("embedding_dim",
                               [](const Model& m_) { return m_.config.feature_dim; })
        .def("embed", [](const Model& model, py::array_t<float> samples) {
            return sequence_to_array(embed_utterance(clip_from_array(samples), model));
        }, py::arg("samples"), "Embed an utterance -> (n_windows, 81) float32 array.")
        .def("params_count", [](const Model& model, bool include_decoder) {
            return count_params(model.config, include_decoder);
        }, py::arg("include_decoder") = false)
        .def("macs_count", [](const Model& model) { return count_macs(model.config); });

    py::class_<EnrollmentProfile>(m, "Profile")
        .def_property_readonly("keyword_id",
                               [](const EnrollmentProfile& p) { return p.keyword_id; })
        .def_property_readonly("num_enrollments",
                               [](const EnrollmentProfile& p) { return p.enrollments.size(); })
        .def_static("load", &load_profile, py::arg("path"))
        .def("save", &save_profile, py::arg("path"));

    m.def("enroll", [](const Model& model, const std::string& keyword,
                       const std::vector<py::array_t<float>>& clips) {
        std::vector<AudioClip> audio;
        for (const auto& c : clips) audio.push_back(clip_from_array(c));
        return enroll(keyword, audio, model);
    }, py::arg("model"), py::arg("keyword"), py::arg("clips"));

    m.def("detect", [](const Model& model, const EnrollmentProfile& profile,
                       py::array_t<float> samples, double threshold) {
        EmbeddingSequence query = embed_utterance(clip_from_array(samples), model);
        DetectionResult det = detect(profile, query, threshold, model.fingerprint);
        py::dict out;
        out["score"] = det.score;
        out["triggered"] = det.triggered;
        out["best_enrollment_index"] = det.best_enrollment_index;
        out["best_alignment_offset"] = det.best_alignment_offset;
        return out;
    }, py::arg("model"), py::arg("profile"), py::arg("samples"), py::arg("threshold"));

    m.def("generate_synthetic_dataset",
          [](const std::string& out_dir, int classes, int per_class, uint64_t seed,
             double valid_fraction, int noise_files) {
              SyntheticSpec spec{classes, per_class, seed, valid_fraction, noise_files};
              return generate_synthetic_dataset(spec, out_dir).manifest_path;
          },
          py::arg("out_dir"), py::arg("classes") = 10, py::arg("per_class") = 20,
          py::arg("seed") = 0, py::arg("valid_fraction") = 0.2, py::arg("noise_files") = 0);

    m.def("train", [](const std::string& manifest_path, const std::string& checkpoint_out,
                      int epochs, int batch_size, double learning_rate, uint64_t seed,
                      const std::string& noise_dir, double noise_prob, double stop_at_train_acc,
                      int num_blocks) {
        Manifest manifest = load_manifest(manifest_path);
        TrainConfig tcfg;
        tcfg.epochs = epochs;
        tcfg.batch_size = batch_size;
        tcfg.learning_rate = learning_rate;
        tcfg.seed = seed;
        tcfg.noise_dir = noise_dir;
        tcfg.noise_prob = noise_prob;
        tcfg.stop_at_train_acc = stop_at_train_acc;
        MixerConfig mcfg;
        if (num_blocks > 0) mcfg.num_blocks = num_blocks;
        TrainResult result = train(manifest, tcfg, mcfg, FrontendConfig{});
        save_checkpoint(result.best, checkpoint_out);
        py::dict out;
        out["epochs_run"] = result.epochs_run;
        out["train_acc"] = result.final_train_acc;
        out["checkpoint"] = checkpoint_out;
        return out;
    }, py::arg("manifest_path"), py::arg("checkpoint_out"), py::arg("epochs") = 30,
       py::arg("batch_size") = 16, py::arg("learning_rate") = 1e-3, py::arg("seed") = 0,
       py::arg("noise_dir") = std::string(), py::arg("noise_prob") = 1.0,
       py::arg("stop_at_train_acc") = 0.0, py::arg("num_blocks") = -1);
}
