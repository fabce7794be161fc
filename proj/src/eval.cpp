// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#include "qbye/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace fs = std::filesystem;

namespace qbye {

std::vector<EvalUtterance> load_eval_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open eval spec: " + path);
    const std::string base = fs::path(path).parent_path().string();
    std::vector<EvalUtterance> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("eval spec " + path + " line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        EvalUtterance u;
        if (!j.contains("audio_path") || !j.contains("speaker") || !j.contains("role"))
            throw std::runtime_error("eval spec " + path + " line " + std::to_string(line_no) +
                                     ": need audio_path, speaker, role");
        u.audio_path = j.at("audio_path");
        u.speaker = j.at("speaker");
        u.role = j.at("role");
        if (j.contains("keyword") && !j.at("keyword").is_null()) u.keyword = j.at("keyword");
        if (u.role != "enroll" && u.role != "query" && u.role != "negative")
            throw std::runtime_error("eval spec " + path + " line " + std::to_string(line_no) +
                                     ": role must be enroll, query or negative");
        if ((u.role == "enroll" || u.role == "query") && u.keyword.empty())
            throw std::runtime_error("eval spec " + path + " line " + std::to_string(line_no) +
                                     ": enroll/query rows need a keyword");
        if (!fs::path(u.audio_path).is_absolute() && !base.empty())
            u.audio_path = (fs::path(base) / u.audio_path).string();
        out.push_back(std::move(u));
    }
    if (out.empty()) throw std::runtime_error("empty eval spec: " + path);
    return out;
}

namespace {

void run_chunked(size_t n, int threads, const std::function<void(size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const size_t workers = std::min<size_t>(static_cast<size_t>(threads), n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace

std::vector<ScoredUtterance> score_set(const ProfileSet& profiles,
                                       const std::vector<EvalUtterance>& utterances,
                                       const Model& model, Polarity polarity, int threads) {
    if (profiles.profiles.empty()) throw std::runtime_error("score_set: no profiles");
    std::vector<ScoredUtterance> rows;
    if (polarity == Polarity::kPositive) {
        rows.resize(utterances.size());
        run_chunked(utterances.size(), threads, [&](size_t i) {
            const EvalUtterance& u = utterances[i];
            const std::string key = u.speaker + "/" + u.keyword;
            auto it = std::find(profiles.keys.begin(), profiles.keys.end(), key);
            if (it == profiles.keys.end())
                throw std::runtime_error("score_set: no profile for query " + key);
            const auto& profile = profiles.profiles[static_cast<size_t>(it - profiles.keys.begin())];
            AudioClip clip = load_wav(u.audio_path);
            EmbeddingSequence seq = embed_utterance(clip, model);
            DetectionResult det = detect(profile, seq, 0.0, model.fingerprint);
            rows[i] = {key + "#" + std::to_string(i), det.score, clip.duration_s()};
        });
    } else {
        rows.resize(utterances.size() * profiles.profiles.size());
        run_chunked(utterances.size(), threads, [&](size_t i) {
            const EvalUtterance& u = utterances[i];
            AudioClip clip = load_wav(u.audio_path);
            EmbeddingSequence seq = embed_utterance(clip, model);
            for (size_t p = 0; p < profiles.profiles.size(); ++p) {
                DetectionResult det = detect(profiles.profiles[p], seq, 0.0, model.fingerprint);
                rows[i * profiles.profiles.size() + p] = {
                    "neg#" + std::to_string(i) + "@" + profiles.keys[p], det.score,
                    clip.duration_s()};
            }
        });
    }
    return rows;
}

std::vector<RocPoint> sweep_roc(const std::vector<double>& pos_scores,
                                const std::vector<double>& neg_scores, double negative_hours) {
    if (pos_scores.empty() || neg_scores.empty())
        throw std::runtime_error("sweep_roc: need both positive and negative scores");
    if (negative_hours <= 0.0) throw std::runtime_error("sweep_roc: zero negative hours");

    std::set<double> candidates(pos_scores.begin(), pos_scores.end());
    candidates.insert(neg_scores.begin(), neg_scores.end());
    candidates.insert(*candidates.rbegin() + 1.0); // one above the max: FRR 0 end

    std::vector<RocPoint> roc;
    roc.reserve(candidates.size());
    for (double tau : candidates) {
        size_t fa = 0;
        for (double s : neg_scores)
            if (s < tau) ++fa;
        size_t fr = 0;
        for (double s : pos_scores)
            if (s >= tau) ++fr;
        roc.push_back({tau, static_cast<double>(fa) / negative_hours,
                       100.0 * static_cast<double>(fr) / static_cast<double>(pos_scores.size())});
    }
    return roc;
}

double frr_at_fa(const std::vector<RocPoint>& roc, double target_fa_per_hour, bool* unreachable) {
    if (roc.empty()) throw std::runtime_error("frr_at_fa: empty roc");
    bool found = false;
    double frr = 100.0;
    for (const RocPoint& p : roc) { // roc sorted ascending by threshold
        if (p.fa_per_hour <= target_fa_per_hour) {
            frr = p.frr_percent;
            found = true;
        }
    }
    if (unreachable) *unreachable = !found;
    return found ? frr : 100.0;
}

void write_roc_csv(const EvalReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write roc csv: " + path);
    f << "threshold,fa_per_hour,frr_percent\n";
    char line[128];
    for (const RocPoint& p : report.roc) {
        std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f\n", p.threshold, p.fa_per_hour,
                      p.frr_percent);
        f << line;
    }
    if (!f) throw std::runtime_error("short write to roc csv: " + path);
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j{
        {"frr_at_target", report.frr_at_target},
        {"target", report.target_fa_per_hour},
        {"negative_hours", report.negative_hours},
        {"n_pos", report.n_pos},
        {"n_neg", report.n_neg},
    };
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write report: " + path);
    f << j.dump(2) << "\n";
}

EvalReport run_eval(const std::vector<EvalUtterance>& utterances, const Model& model,
                    double target_fa_per_hour, int threads) {
    // group enrollment clips by (speaker, keyword)
    std::map<std::string, std::vector<AudioClip>> enroll_clips;
    std::vector<EvalUtterance> queries, negatives;
    for (const EvalUtterance& u : utterances) {
        if (u.role == "enroll") {
            enroll_clips[u.speaker + "/" + u.keyword].push_back(load_wav(u.audio_path));
        } else if (u.role == "query") {
            queries.push_back(u);
        } else {
            negatives.push_back(u);
        }
    }
    if (enroll_clips.empty()) throw std::runtime_error("run_eval: no enroll rows");
    if (queries.empty()) throw std::runtime_error("run_eval: no query rows");
    if (negatives.empty()) throw std::runtime_error("run_eval: no negative rows");

    ProfileSet profiles;
    for (const auto& [key, clips] : enroll_clips) {
        profiles.keys.push_back(key);
        profiles.profiles.push_back(enroll(key, clips, model));
    }

    const auto pos_rows = score_set(profiles, queries, model, Polarity::kPositive, threads);
    const auto neg_rows = score_set(profiles, negatives, model, Polarity::kNegative, threads);

    std::vector<double> pos_scores, neg_scores;
    double neg_seconds = 0.0;
    for (const auto& r : pos_rows) pos_scores.push_back(r.score);
    for (const auto& r : neg_rows) {
        neg_scores.push_back(r.score);
        neg_seconds += r.duration_s;
    }

    EvalReport report;
    report.target_fa_per_hour = target_fa_per_hour;
    report.negative_hours = neg_seconds / 3600.0;
    report.n_pos = static_cast<int>(pos_rows.size());
    report.n_neg = static_cast<int>(neg_rows.size());
    report.roc = sweep_roc(pos_scores, neg_scores, report.negative_hours);
    report.frr_at_target = frr_at_fa(report.roc, target_fa_per_hour, &report.target_unreachable);
    return report;
}

} // namespace qbye
