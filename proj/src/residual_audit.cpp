#include "biasaudit/residual_audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "biasaudit/errors.hpp"

namespace biasaudit {

std::string GroupKey::name() const {
    std::string out;
    for (const auto& [dim, label] : parts) {
        if (!out.empty()) out += ',';
        out += to_string(dim);
        out += '=';
        out += to_string(label);
    }
    return out;
}

std::vector<double> ResidualSet::values() const {
    std::vector<double> v;
    v.reserve(entries.size());
    for (const auto& e : entries) v.push_back(e.residual);
    return v;
}

ResidualMap compute_residuals(const Dataset& dataset, const PredictionSet& predictions,
                              const SplitAssignment* split, std::optional<Partition> partition) {
    if (partition && !split) throw ValidationError("a split is required to select a partition");
    ResidualMap out;
    for (const auto& r : dataset.records()) {
        if (partition) {
            auto it = split->partition_of.find(r.id);
            if (it == split->partition_of.end() || it->second != *partition) continue;
        }
        auto p = predictions.y_hat.find(r.id);
        if (p == predictions.y_hat.end()) throw ValidationError("missing prediction for '" + r.id + "'");
        out[r.id] = static_cast<double>(r.global_score) - p->second;
    }
    return out;
}

GroupedResiduals group_residuals(const ResidualMap& residuals, const Dataset& dataset,
                                 std::span<const Dimension> dimensions) {
    if (dimensions.empty()) throw ValidationError("at least one grouping dimension is required");
    std::set<Dimension> unique(dimensions.begin(), dimensions.end());
    if (unique.size() != dimensions.size()) throw ValidationError("grouping dimensions repeat");

    // Every label combination in M-before-F order along each dimension.
    std::vector<GroupKey> keys{GroupKey{}};
    for (Dimension dim : dimensions) {
        std::vector<GroupKey> next;
        for (const auto& k : keys) {
            for (GroupLabel label : {GroupLabel::M, GroupLabel::F}) {
                GroupKey g = k;
                g.parts.emplace_back(dim, label);
                next.push_back(std::move(g));
            }
        }
        keys = std::move(next);
    }
    std::vector<ResidualSet> sets;
    for (auto& k : keys) sets.push_back(ResidualSet{k, {}});

    GroupedResiduals out;
    for (const auto& r : dataset.records()) {
        auto it = residuals.find(r.id);
        if (it == residuals.end()) continue;
        std::size_t index = 0;
        bool unspecified = false;
        for (Dimension dim : dimensions) {
            const GroupLabel label = r.label(dim);
            if (label == GroupLabel::Unspecified) {
                unspecified = true;
                break;
            }
            index = index * 2 + (label == GroupLabel::M ? 0 : 1);
        }
        if (unspecified) {
            ++out.excluded_unspecified;
            continue;
        }
        sets[index].entries.push_back({r.id, r.global_score, it->second});
    }
    for (auto& s : sets) {
        if (s.entries.empty()) out.empty_groups.push_back(s.group);
        else out.groups.push_back(std::move(s));
    }
    return out;
}

PairwiseComparison compare_two(const ResidualSet& first, const ResidualSet& second, bool pooled_variance) {
    const auto a = first.values();
    const auto b = second.values();
    PairwiseComparison out;
    out.first = first.group;
    out.second = second.group;
    out.test = pooled_variance ? pooled_t_test(a, b) : welch_t_test(a, b);
    out.mean_difference = mean(a) - mean(b);
    return out;
}

ScoreHistograms score_conditional_histograms(const ResidualSet& residuals, std::size_t bins) {
    if (bins < 2) throw ValidationError("histograms need at least two bins");
    ScoreHistograms out;
    const double width = 2.0 * kHistogramLimit / static_cast<double>(bins);
    for (auto& h : out) {
        h.edges.resize(bins + 1);
        for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = -kHistogramLimit + width * static_cast<double>(i);
        h.edges[bins] = kHistogramLimit;
        h.counts.assign(bins, 0);
    }
    for (const auto& e : residuals.entries) {
        if (e.score < kMinScore || e.score > kMaxScore) continue;
        Histogram& h = out[static_cast<std::size_t>(e.score - kMinScore)];
        std::size_t index;
        if (e.residual < -kHistogramLimit) {
            index = 0;
            ++h.clipped;
        } else if (e.residual > kHistogramLimit) {
            index = bins - 1;
            ++h.clipped;
        } else {
            const double pos = std::floor((e.residual + kHistogramLimit) / width);
            index = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, pos)));
        }
        ++h.counts[index];
    }
    return out;
}

ResidualReport compare_all(const GroupedResiduals& grouped, const CompareOptions& options) {
    ResidualReport report;
    report.holm_pairwise = options.holm_pairwise;
    report.pooled_variance = options.pooled_variance;
    report.excluded_unspecified = grouped.excluded_unspecified;
    report.empty_groups = grouped.empty_groups;
    if (!grouped.groups.empty()) {
        for (const auto& [dim, label] : grouped.groups.front().group.parts) report.dimensions.push_back(dim);
    }

    std::vector<const ResidualSet*> included;
    for (const auto& g : grouped.groups) {
        const auto values = g.values();
        GroupStats st;
        st.group = g.group;
        st.n = g.n();
        st.mean = mean(values);
        st.sd = g.n() >= 2 ? std::sqrt(variance(values)) : std::numeric_limits<double>::quiet_NaN();
        report.groups.push_back(st);
        if (g.n() >= 2) included.push_back(&g);
        else report.excluded_groups.push_back(g.group);
        if (options.histogram_bins > 0)
            report.histograms[g.group.name()] = score_conditional_histograms(g, options.histogram_bins);
    }

    if (included.size() < 2) {
        report.anova = TestResult::make_degenerate("fewer than two groups with two or more values");
        return report;
    }
    std::vector<std::vector<double>> samples;
    for (const auto* g : included) samples.push_back(g->values());
    report.anova = one_way_anova(samples);

    for (std::size_t i = 0; i < included.size(); ++i)
        for (std::size_t j = i + 1; j < included.size(); ++j)
            report.pairwise.push_back(compare_two(*included[i], *included[j], options.pooled_variance));

    if (options.holm_pairwise) {
        std::vector<double> raw;
        std::vector<std::size_t> where;
        for (std::size_t k = 0; k < report.pairwise.size(); ++k) {
            if (report.pairwise[k].test.degenerate) continue;
            raw.push_back(report.pairwise[k].test.p_value);
            where.push_back(k);
        }
        const auto adjusted = holm_bonferroni(raw);
        for (std::size_t k = 0; k < where.size(); ++k) report.pairwise[where[k]].holm_p = adjusted[k];
    }
    return report;
}

}  // namespace biasaudit
