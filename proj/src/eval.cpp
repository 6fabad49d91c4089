#include "hdm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "hdm/errors.hpp"

namespace hdm {

double rte(const RigidTransform& est, const RigidTransform& gt) {
    return (gt.t - est.t).norm();
}

double rre(const RigidTransform& est, const RigidTransform& gt) {
    // Geodesic angle of R_err = R_hat' R. cos = (tr - 1) / 2; the sine comes
    // from the skew part, and atan2 of the pair avoids the acos precision
    // cliff near 0 and 180 degrees.
    const Mat3 E = est.R.transpose() * gt.R;
    const double cos_t = std::clamp((E.trace() - 1.0) / 2.0, -1.0, 1.0);
    const Vec3 axis(E(2, 1) - E(1, 2), E(0, 2) - E(2, 0), E(1, 0) - E(0, 1));
    return std::atan2(0.5 * axis.norm(), cos_t) * 180.0 / M_PI;
}

std::vector<bool> classify_inliers(const CorrespondenceSet& corr, const RigidTransform& gt,
                                   double eps_d) {
    std::vector<bool> flags(corr.source.size());
    for (std::size_t i = 0; i < corr.source.size(); ++i)
        flags[i] = (corr.virtual_targets[i] - gt(corr.source[i])).norm() < eps_d;
    return flags;
}

namespace {

void aggregate(BenchmarkReport& report, const EvalThresholds& thresholds) {
    double rte_sum = 0.0, rre_sum = 0.0, ms_sum = 0.0;
    std::size_t successes = 0;
    for (auto& pr : report.pairs) {
        pr.success = !pr.failed && pr.rte_m < thresholds.eps_trans && pr.rre_deg < thresholds.eps_rot;
        if (pr.success) {
            rte_sum += pr.rte_m;
            rre_sum += pr.rre_deg;
            ++successes;
        }
        ms_sum += pr.ms;
    }
    report.recall = static_cast<double>(successes) / static_cast<double>(report.pairs.size());
    report.ms_mean = ms_sum / static_cast<double>(report.pairs.size());
    if (successes > 0) {
        report.rte_mean = rte_sum / static_cast<double>(successes);
        report.rre_mean = rre_sum / static_cast<double>(successes);
        double rte_var = 0.0, rre_var = 0.0;
        for (const auto& pr : report.pairs)
            if (pr.success) {
                rte_var += (pr.rte_m - report.rte_mean) * (pr.rte_m - report.rte_mean);
                rre_var += (pr.rre_deg - report.rre_mean) * (pr.rre_deg - report.rre_mean);
            }
        report.rte_std = std::sqrt(rte_var / static_cast<double>(successes));
        report.rre_std = std::sqrt(rre_var / static_cast<double>(successes));
    }
}

}  // namespace

BenchmarkReport benchmark(const PairProvider& provider, std::size_t n_pairs,
                          const PipelineConfig& cfg, const EvalThresholds& thresholds,
                          const PipelineParams& params) {
    if (n_pairs == 0) throw EmptyDataset("benchmark: no pairs");
    BenchmarkReport report;
    report.pairs.reserve(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const BenchmarkPair pair = provider(i);
        PairResult pr;
        pr.pair_id = i;
        const auto start = std::chrono::steady_clock::now();
        try {
            const PipelineResult res = run_pipeline(pair.src, pair.tgt, cfg, params, &pair.gt);
            pr.transform = res.transform;
            pr.rte_m = rte(res.transform, pair.gt);
            pr.rre_deg = rre(res.transform, pair.gt);
            for (const auto& stage : res.stages)
                if (stage.name == "coarse" && stage.rte_m) pr.coarse_rte_m = *stage.rte_m;
        } catch (const Error&) {
            pr.failed = true;
            pr.rte_m = pr.rre_deg = std::numeric_limits<double>::infinity();
        }
        pr.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                    .count();
        report.pairs.push_back(std::move(pr));
    }
    aggregate(report, thresholds);
    return report;
}

namespace {

RecallCurve curve_over(const BenchmarkReport& report, const std::vector<double>& grid,
                       const std::function<bool(const PairResult&, double)>& ok) {
    RecallCurve curve;
    curve.thresholds = grid;
    for (double th : grid) {
        std::size_t n = 0;
        for (const auto& pr : report.pairs)
            if (!pr.failed && ok(pr, th)) ++n;
        curve.recall.push_back(static_cast<double>(n) / static_cast<double>(report.pairs.size()));
    }
    return curve;
}

}  // namespace

RecallCurve recall_vs_rte(const BenchmarkReport& report, const EvalThresholds& base,
                          const std::vector<double>& grid) {
    return curve_over(report, grid, [&](const PairResult& pr, double th) {
        return pr.rte_m < th && pr.rre_deg < base.eps_rot;
    });
}

RecallCurve recall_vs_rre(const BenchmarkReport& report, const EvalThresholds& base,
                          const std::vector<double>& grid) {
    return curve_over(report, grid, [&](const PairResult& pr, double th) {
        return pr.rte_m < base.eps_trans && pr.rre_deg < th;
    });
}

std::vector<AblationRow> ablation_suite(const PairProvider& provider, std::size_t n_pairs,
                                        const PipelineConfig& base_cfg,
                                        const EvalThresholds& thresholds,
                                        const PipelineParams& params) {
    std::vector<std::pair<std::string, PipelineConfig>> variants;
    variants.emplace_back("full", base_cfg);
    {
        PipelineConfig c = base_cfg;
        c.sparse_to_denser = false;
        variants.emplace_back("wo_std", c);
    }
    {
        PipelineConfig c = base_cfg;
        c.feature_consistency = false;
        variants.emplace_back("wo_fs", c);
    }
    {
        PipelineConfig c = base_cfg;  // single-soft: w/o {DM, STD, fs}
        c.double_soft = false;
        c.sparse_to_denser = false;
        c.feature_consistency = false;
        variants.emplace_back("wo_dm_std_fs", c);
    }
    {
        PipelineConfig c = base_cfg;
        c.mask = false;
        variants.emplace_back("wo_mask", c);
    }

    std::vector<AblationRow> rows;
    for (const auto& [name, cfg] : variants)
        rows.push_back({name, benchmark(provider, n_pairs, cfg, thresholds, params)});
    return rows;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string per_pair_csv(const BenchmarkReport& report) {
    std::ostringstream os;
    os << "pair_id,rte_m,rre_deg,success,ms\n";
    for (const auto& pr : report.pairs)
        os << pr.pair_id << ',' << (pr.failed ? "inf" : fmt(pr.rte_m)) << ','
           << (pr.failed ? "inf" : fmt(pr.rre_deg)) << ',' << (pr.success ? 1 : 0) << ','
           << fmt(pr.ms) << '\n';
    return os.str();
}

std::string curve_csv(const RecallCurve& curve) {
    std::ostringstream os;
    os << "threshold,recall\n";
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
        os << fmt(curve.thresholds[i]) << ',' << fmt(curve.recall[i]) << '\n';
    return os.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "variant,rte_mean,rte_std,rre_mean,rre_std,recall,ms_mean\n";
    for (const auto& row : rows)
        os << row.variant << ',' << fmt(row.report.rte_mean) << ',' << fmt(row.report.rte_std)
           << ',' << fmt(row.report.rre_mean) << ',' << fmt(row.report.rre_std) << ','
           << fmt(row.report.recall) << ',' << fmt(row.report.ms_mean) << '\n';
    return os.str();
}

}  // namespace hdm
