// Copyright 2026 qbye-mixer contributors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "qbye/runtime.hpp"

namespace qbye {

struct ScoredUtterance {
    std::string utterance_id;
    double score = 2.0;    // minimum match distance
    double duration_s = 0; // audio length behind the score
};

struct RocPoint {
    double threshold = 0;
    double fa_per_hour = 0;
    double frr_percent = 0;
};

struct EvalReport {
    std::vector<RocPoint> roc; // sorted by threshold
    double frr_at_target = 100.0;
    double target_fa_per_hour = 0.3;
    double negative_hours = 0.0;
    int n_pos = 0;
    int n_neg = 0;
    bool target_unreachable = false; // no threshold had FA/hr <= target
};

// Eval dataset: JSONL rows {audio_path, speaker, keyword|null, role} with
// role one of enroll | query | negative.
struct EvalUtterance {
    std::string audio_path; // resolved against the spec file location
    std::string speaker;
    std::string keyword; // empty for negatives
    std::string role;
};

std::vector<EvalUtterance> load_eval_spec(const std::string& path);

enum class Polarity { kPositive, kNegative };

struct ProfileSet {
    std::vector<EnrollmentProfile> profiles;
    std::vector<std::string> keys; // "speaker/keyword" per profile
};

// Positive: each query scored against its own speaker-keyword profile.
// Negative: each utterance scored against every profile (one row per pair,
// utterance duration counted once per pairing).
std::vector<ScoredUtterance> score_set(const ProfileSet& profiles,
                                       const std::vector<EvalUtterance>& utterances,
                                       const Model& model, Polarity polarity, int threads = 1);

// Exact sweep over every distinct observed score (plus one above the max):
// FA/hr = #{neg < t} / negative_hours, FRR% = 100 * #{pos >= t} / #pos.
std::vector<RocPoint> sweep_roc(const std::vector<double>& pos_scores,
                                const std::vector<double>& neg_scores, double negative_hours);

// FRR at the largest threshold whose FA/hr stays within target; 100 with the
// warning flag set when no threshold qualifies.
double frr_at_fa(const std::vector<RocPoint>& roc, double target_fa_per_hour,
                 bool* unreachable = nullptr);

void write_roc_csv(const EvalReport& report, const std::string& path);
void write_report_json(const EvalReport& report, const std::string& path);

// Full protocol: build profiles from enroll rows, score queries and
// negatives, sweep. Enrollment grouping is by (speaker, keyword).
EvalReport run_eval(const std::vector<EvalUtterance>& utterances, const Model& model,
                    double target_fa_per_hour, int threads = 1);

} // namespace qbye
