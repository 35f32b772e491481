#include "sgp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sgp/dataset_io.hpp"
#include "sgp/error.hpp"

namespace sgp {

std::vector<double> iou_thresholds() {
    std::vector<double> out;
    for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
    return out;
}

RecallResult match_and_recall(const std::vector<Annotation>& gts,
                              const std::vector<Proposal>& proposals, int k, double threshold) {
    if (k < 1) throw Error("match_and_recall: K must be >= 1");
    RecallResult r;
    r.n_gt = static_cast<int>(gts.size());
    if (gts.empty()) {
        r.recall = 1.0;
        r.empty_gt = true;
        return r;
    }
    std::vector<bool> taken(gts.size(), false);
    std::size_t limit = std::min(proposals.size(), static_cast<std::size_t>(k));
    for (std::size_t pi = 0; pi < limit; ++pi) {
        double best_iou = 0.0;
        int best = -1;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (taken[gi]) continue;
            double v = iou(proposals[pi].bbox, gts[gi].bbox);
            if (v > best_iou) {
                best_iou = v;
                best = static_cast<int>(gi);
            }
        }
        if (best >= 0 && best_iou >= threshold) {
            taken[static_cast<std::size_t>(best)] = true;
            ++r.matched;
        }
    }
    r.recall = static_cast<double>(r.matched) / static_cast<double>(r.n_gt);
    return r;
}

double average_recall(const std::vector<Annotation>& gts,
                      const std::vector<Proposal>& proposals, int k) {
    double total = 0.0;
    auto thresholds = iou_thresholds();
    for (double t : thresholds) total += match_and_recall(gts, proposals, k, t).recall;
    return total / static_cast<double>(thresholds.size());
}

SparsityHistogram scale_sparsity_histogram(const std::vector<Annotation>& gts, double image_w,
                                           double image_h) {
    if (!(image_w > 0.0 && image_h > 0.0))
        throw Error("scale_sparsity_histogram: image dimensions must be positive");
    SparsityHistogram h;
    double image_max = std::max(image_w, image_h);
    for (const Annotation& a : gts) {
        double ratio = std::max(a.bbox.w, a.bbox.h) / image_max;
        // Half-open bins [0.1*i, 0.1*(i+1)); ratio 1.0 stays in the last bin.
        int bin = std::clamp(static_cast<int>(std::floor(ratio * 10.0)), 0, 9);
        ++h.counts[static_cast<std::size_t>(bin)];
    }
    for (int c : h.counts)
        if (c > 0) ++h.nonzero_bins;
    return h;
}

EvalReport evaluate(const std::vector<Scene>& scenes,
                    const std::map<std::string, std::map<std::string, std::vector<Proposal>>>&
                        proposals_by_method,
                    const std::vector<int>& ks) {
    EvalReport report;
    report.ks = ks;
    report.n_images = static_cast<int>(scenes.size());
    for (const Scene& s : scenes) {
        report.n_gt_total += static_cast<long long>(s.annotations.size());
        if (s.annotations.empty()) ++report.n_images_excluded;
        report.sparsity.push_back(
            scale_sparsity_histogram(s.annotations, s.viewport.w, s.viewport.h));
    }

    for (const auto& [method, per_image] : proposals_by_method) {
        std::vector<std::vector<MethodCell>> cells(
            ks.size(), std::vector<MethodCell>(report.thresholds.size()));
        for (std::size_t ki = 0; ki < ks.size(); ++ki) {
            for (std::size_t ti = 0; ti < report.thresholds.size(); ++ti) {
                long long matched = 0, total_gt = 0;
                double macro_sum = 0.0;
                int macro_n = 0;
                for (const Scene& scene : scenes) {
                    if (scene.annotations.empty()) continue;
                    static const std::vector<Proposal> kNone;
                    auto it = per_image.find(scene.image_id);
                    const auto& props = it == per_image.end() ? kNone : it->second;
                    RecallResult r = match_and_recall(scene.annotations, props, ks[ki],
                                                      report.thresholds[ti]);
                    matched += r.matched;
                    total_gt += r.n_gt;
                    macro_sum += r.recall;
                    ++macro_n;
                }
                MethodCell& cell = cells[ki][ti];
                cell.micro_recall =
                    total_gt > 0 ? static_cast<double>(matched) / static_cast<double>(total_gt)
                                 : 0.0;
                cell.macro_recall = macro_n > 0 ? macro_sum / macro_n : 0.0;
            }
        }
        std::vector<double> ar_micro(ks.size(), 0.0), ar_macro(ks.size(), 0.0);
        for (std::size_t ki = 0; ki < ks.size(); ++ki) {
            for (std::size_t ti = 0; ti < report.thresholds.size(); ++ti) {
                ar_micro[ki] += cells[ki][ti].micro_recall;
                ar_macro[ki] += cells[ki][ti].macro_recall;
            }
            ar_micro[ki] /= static_cast<double>(report.thresholds.size());
            ar_macro[ki] /= static_cast<double>(report.thresholds.size());
        }
        report.recall[method] = std::move(cells);
        report.ar_micro[method] = std::move(ar_micro);
        report.ar_macro[method] = std::move(ar_macro);
    }
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["ks"] = ks;
    j["iou_thresholds"] = thresholds;
    j["n_images"] = n_images;
    j["n_images_excluded_empty_gt"] = n_images_excluded;
    j["n_gt_total"] = n_gt_total;
    j["config"] = config_echo;
    for (const auto& [method, cells] : recall) {
        nlohmann::json m;
        for (std::size_t ki = 0; ki < ks.size(); ++ki) {
            nlohmann::json row_micro = nlohmann::json::array();
            nlohmann::json row_macro = nlohmann::json::array();
            for (const MethodCell& c : cells[ki]) {
                row_micro.push_back(c.micro_recall);
                row_macro.push_back(c.macro_recall);
            }
            std::string key = "K" + std::to_string(ks[ki]);
            m["recall_micro"][key] = row_micro;
            m["recall_macro"][key] = row_macro;
            m["ar_micro"][key] = ar_micro.at(method)[ki];
            m["ar_macro"][key] = ar_macro.at(method)[ki];
        }
        j["methods"][method] = m;
    }
    nlohmann::json hist = nlohmann::json::array();
    for (const SparsityHistogram& h : sparsity)
        hist.push_back({{"counts", h.counts}, {"nonzero_bins", h.nonzero_bins}});
    j["scale_sparsity"] = hist;
    return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
    std::string out = "method,K,iou_threshold,recall,n_gt\n";
    char line[160];
    for (const auto& [method, cells] : recall)
        for (std::size_t ki = 0; ki < ks.size(); ++ki)
            for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
                std::snprintf(line, sizeof(line), "%s,%d,%.2f,%.6f,%lld\n", method.c_str(),
                              ks[ki], thresholds[ti], cells[ki][ti].micro_recall, n_gt_total);
                out += line;
            }
    return out;
}

namespace {

const char* kLineColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string render_svg(const EvalReport& report, std::size_t ki) {
    const double w = 480, h = 360, ml = 50, mr = 16, mt = 28, mb = 40;
    const double pw = w - ml - mr, ph = h - mt - mb;
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
    svg << "<rect width='100%' height='100%' fill='white'/>\n";
    svg << "<text x='" << w / 2 << "' y='18' text-anchor='middle' font-size='13'>Recall vs IoU"
        << " threshold, " << report.ks[ki] << " proposals</text>\n";
    for (int i = 0; i <= 5; ++i) {
        double fy = mt + ph * (1.0 - i / 5.0);
        svg << "<line x1='" << ml << "' y1='" << fy << "' x2='" << w - mr << "' y2='" << fy
            << "' stroke='#ddd'/>\n";
        svg << "<text x='" << ml - 6 << "' y='" << fy + 4
            << "' text-anchor='end' font-size='10'>" << i / 5.0 << "</text>\n";
    }
    for (std::size_t ti = 0; ti < report.thresholds.size(); ++ti) {
        double fx = ml + pw * static_cast<double>(ti) /
                             static_cast<double>(report.thresholds.size() - 1);
        svg << "<text x='" << fx << "' y='" << h - mb + 16
            << "' text-anchor='middle' font-size='10'>" << report.thresholds[ti] << "</text>\n";
    }
    int color = 0;
    double legend_y = mt + 12;
    for (const auto& [method, cells] : report.recall) {
        const char* stroke = kLineColors[color % 6];
        std::ostringstream pts;
        for (std::size_t ti = 0; ti < report.thresholds.size(); ++ti) {
            double fx = ml + pw * static_cast<double>(ti) /
                                 static_cast<double>(report.thresholds.size() - 1);
            double fy = mt + ph * (1.0 - cells[ki][ti].micro_recall);
            pts << (ti ? " " : "") << fx << "," << fy;
        }
        svg << "<polyline points='" << pts.str() << "' fill='none' stroke='" << stroke
            << "' stroke-width='2'/>\n";
        svg << "<text x='" << w - mr - 4 << "' y='" << legend_y << "' text-anchor='end' "
            << "font-size='11' fill='" << stroke << "'>" << method << "</text>\n";
        legend_y += 14;
        ++color;
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace

std::vector<std::string> emit_curves(const EvalReport& report, const std::string& out_prefix) {
    std::vector<std::string> written;
    std::string csv_path = out_prefix + "_curves.csv";
    write_text_file_atomic(csv_path, report.to_csv());
    written.push_back(csv_path);
    for (std::size_t ki = 0; ki < report.ks.size(); ++ki) {
        std::string path = out_prefix + "_recall_k" + std::to_string(report.ks[ki]) + ".svg";
        write_text_file_atomic(path, render_svg(report, ki));
        written.push_back(path);
    }
    return written;
}

}  // namespace sgp
