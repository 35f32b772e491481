#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "sgp/proposer.hpp"
#include "sgp/scenegen.hpp"

namespace sgp {

// IoU thresholds 0.50 .. 0.95 in steps of 0.05.
std::vector<double> iou_thresholds();

struct RecallResult {
    double recall = 0.0;
    int matched = 0;
    int n_gt = 0;
    bool empty_gt = false;  // recall defined 1.0, excluded from aggregates
};

// Greedy one-to-one matching: top-K proposals in score order, each matched to
// the unmatched ground truth with highest IoU when that IoU clears the
// threshold. Proposals must arrive sorted by descending score.
RecallResult match_and_recall(const std::vector<Annotation>& gts,
                              const std::vector<Proposal>& proposals, int k, double threshold);

// Mean of match_and_recall over the 10 IoU thresholds.
double average_recall(const std::vector<Annotation>& gts,
                      const std::vector<Proposal>& proposals, int k);

struct SparsityHistogram {
    std::array<int, 10> counts{};  // object/image size ratio, bins [0,0.1)..[0.9,1.0]
    int nonzero_bins = 0;
};

SparsityHistogram scale_sparsity_histogram(const std::vector<Annotation>& gts, double image_w,
                                           double image_h);

struct MethodCell {
    double micro_recall = 0.0;  // pooled over all ground truths
    double macro_recall = 0.0;  // mean of per-image recalls
};

struct EvalReport {
    std::vector<int> ks{10, 100, 1000};
    std::vector<double> thresholds = iou_thresholds();
    // method -> (k index, threshold index) recall cells, plus AR@K.
    std::map<std::string, std::vector<std::vector<MethodCell>>> recall;
    std::map<std::string, std::vector<double>> ar_micro;
    std::map<std::string, std::vector<double>> ar_macro;
    std::map<std::string, std::string> config_echo;
    int n_images = 0;
    int n_images_excluded = 0;  // zero ground truths
    long long n_gt_total = 0;
    std::vector<SparsityHistogram> sparsity;

    std::string to_json() const;
    std::string to_csv() const;
};

// Per-image proposals keyed by image_id, one map per method.
EvalReport evaluate(const std::vector<Scene>& scenes,
                    const std::map<std::string, std::map<std::string, std::vector<Proposal>>>&
                        proposals_by_method,
                    const std::vector<int>& ks = {10, 100, 1000});

// CSV table plus one SVG recall-vs-IoU plot per K under out_prefix.
std::vector<std::string> emit_curves(const EvalReport& report, const std::string& out_prefix);

}  // namespace sgp
