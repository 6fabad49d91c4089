// Command-line front end: synthetic data generation, single-pair
// registration, benchmarking, ablations, matcher training, and metric-only
// evaluation of precomputed poses.
//
// Exit codes: 0 success, 1 usage error, 2 data/runtime error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hdm/errors.hpp"
#include "hdm/eval.hpp"
#include "hdm/fine.hpp"
#include "hdm/io.hpp"
#include "hdm/learned.hpp"
#include "hdm/synth.hpp"
#include "hdm/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string mode = "deterministic";
    bool no_double_soft = false;
    bool no_std = false;  // sparse-to-denser
    bool no_fs = false;   // feature consistency
    bool no_mask = false;
};

hdm::RunConfig resolve_config(const GlobalOpts& g) {
    hdm::RunConfig rc;
    if (!g.config_path.empty()) rc = hdm::load_run_config(g.config_path);
    if (g.seed_set) rc.pipeline.seed = g.seed;
    if (g.mode == "learned")
        rc.pipeline.mode = hdm::Mode::Learned;
    else if (g.mode == "deterministic")
        rc.pipeline.mode = hdm::Mode::Deterministic;
    else
        throw CLI::ValidationError("--mode must be deterministic or learned");
    if (g.no_double_soft) rc.pipeline.double_soft = false;
    if (g.no_std) rc.pipeline.sparse_to_denser = false;
    if (g.no_fs) rc.pipeline.feature_consistency = false;
    if (g.no_mask) rc.pipeline.mask = false;
    rc.pipeline.validate();
    return rc;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw hdm::MalformedFile("cannot open for writing: " + path);
    out << text;
}

hdm::PairProvider synth_provider(const hdm::ScenePairSpec& base) {
    return [base](std::size_t i) {
        hdm::ScenePairSpec s = base;
        s.seed = base.seed + i;
        const hdm::ScenePair p = hdm::generate_pair(s);
        return hdm::BenchmarkPair{p.src, p.tgt, p.gt};
    };
}

hdm::PairProvider dataset_provider(const std::vector<hdm::DatasetPair>& pairs) {
    return [&pairs](std::size_t i) {
        const hdm::DatasetPair& d = pairs.at(i);
        return hdm::BenchmarkPair{hdm::read_cloud_auto(d.src_path),
                                  hdm::read_cloud_auto(d.tgt_path), d.gt};
    };
}

struct LoadedParams {
    hdm::ModelParams matcher;
    bool have_matcher = false;
};

// Learned mode runs the handcrafted pyramid as its frozen detector, so only
// the matcher tensors are loaded from disk.
hdm::PipelineParams pipeline_params(LoadedParams& store, const hdm::RunConfig& rc) {
    hdm::PipelineParams pp;
    if (rc.pipeline.mode != hdm::Mode::Learned) return pp;
    if (rc.params_path.empty())
        throw hdm::MalformedFile("learned mode requires paths.params in the config");
    store.matcher = hdm::load_params(rc.params_path);
    store.have_matcher = true;
    pp.matcher = &store.matcher;
    return pp;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical double-soft-matching point cloud registration"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "run configuration file");
    app.add_option("--seed", g.seed, "override pipeline seed")
        ->each([&g](const std::string&) { g.seed_set = true; });
    app.add_option("--mode", g.mode, "deterministic|learned");
    app.add_flag("--no-double-soft", g.no_double_soft, "single soft matching");
    app.add_flag("--no-std", g.no_std, "disable sparse-to-denser pooling");
    app.add_flag("--no-fs", g.no_fs, "disable feature consistency similarity");
    app.add_flag("--no-mask", g.no_mask, "disable the fine-layer confidence mask");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic pair");
    std::string synth_out = ".";
    hdm::ScenePairSpec scene;
    int synth_count = 1;
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--count", synth_count, "number of pairs");
    synth->add_option("--boxes", scene.boxes, "box count");
    synth->add_option("--planes", scene.planes, "plane count");
    synth->add_option("--scatter", scene.scatter_points, "scatter point count");
    synth->add_option("--overlap", scene.overlap, "overlap fraction (0,1]");
    synth->add_option("--noise", scene.noise_sigma_m, "noise sigma, meters");
    synth->add_option("--rot-range", scene.rotation_range_deg, "max |rotation|, degrees");
    synth->add_option("--trans-range", scene.translation_range_m, "max |translation|, meters");

    // register
    auto* reg = app.add_subcommand("register", "register one pair, JSON to stdout");
    std::string reg_src, reg_tgt, reg_gt_pose, reg_out_dir;
    reg->add_option("src", reg_src, "source cloud")->required();
    reg->add_option("tgt", reg_tgt, "target cloud")->required();
    reg->add_option("--gt-pose", reg_gt_pose, "pose file with the ground truth on line 1");
    reg->add_option("--out", reg_out_dir, "directory for correspondence/pose dumps");

    // benchmark
    auto* bench = app.add_subcommand("benchmark", "run a pair list or synthetic set");
    std::string bench_pairs_file, bench_out = ".";
    std::size_t bench_n = 20;
    bench->add_option("--pairs", bench_pairs_file, "pair list file (otherwise synthetic)");
    bench->add_option("--count", bench_n, "synthetic pair count");
    bench->add_option("--out", bench_out, "output directory");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "ablation table over matching variants");
    std::string ablate_pairs_file, ablate_out = ".";
    std::size_t ablate_n = 10;
    ablate->add_option("--pairs", ablate_pairs_file, "pair list file (otherwise synthetic)");
    ablate->add_option("--count", ablate_n, "synthetic pair count");
    ablate->add_option("--out", ablate_out, "output directory");

    // train
    auto* train = app.add_subcommand("train", "train the matcher on synthetic pairs");
    std::string train_out = ".";
    int train_epochs = 30, train_pairs = 32;
    train->add_option("--out", train_out, "output directory");
    train->add_option("--epochs", train_epochs, "epoch count");
    train->add_option("--pairs", train_pairs, "training pair count");

    // eval-only
    auto* ev = app.add_subcommand("eval-only", "metrics for precomputed poses");
    std::string ev_est, ev_gt;
    ev->add_option("est", ev_est, "estimated pose file")->required();
    ev->add_option("gt", ev_gt, "ground-truth pose file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        hdm::RunConfig rc = resolve_config(g);
        LoadedParams store;

        if (*synth) {
            scene.seed = rc.pipeline.seed;
            fs::create_directories(synth_out);
            std::vector<hdm::DatasetPair> listing;
            for (int i = 0; i < synth_count; ++i) {
                hdm::ScenePairSpec s = scene;
                s.seed = scene.seed + static_cast<std::uint64_t>(i);
                const hdm::ScenePair p = hdm::generate_pair(s);
                const std::string src_path = synth_out + "/pair" + std::to_string(i) + "_src.bin";
                const std::string tgt_path = synth_out + "/pair" + std::to_string(i) + "_tgt.bin";
                hdm::write_kitti_bin(p.src, src_path);
                hdm::write_kitti_bin(p.tgt, tgt_path);
                listing.push_back({src_path, tgt_path, p.gt});
            }
            hdm::write_pair_list(listing, synth_out + "/pairs.txt");
            std::cout << "wrote " << synth_count << " pair(s) to " << synth_out << "\n";
        } else if (*reg) {
            const hdm::PointCloud src = hdm::read_cloud_auto(reg_src);
            const hdm::PointCloud tgt = hdm::read_cloud_auto(reg_tgt);
            const hdm::PipelineParams pp = pipeline_params(store, rc);
            hdm::RigidTransform gt;
            bool have_gt = false;
            if (!reg_gt_pose.empty()) {
                const auto poses = hdm::read_pose_file(reg_gt_pose);
                if (poses.empty()) throw hdm::MalformedFile("empty pose file: " + reg_gt_pose);
                gt = poses.front();
                have_gt = true;
            }
            const hdm::PipelineResult res =
                hdm::run_pipeline(src, tgt, rc.pipeline, pp, have_gt ? &gt : nullptr);

            json j;
            j["transform"]["rotation"] = json::array();
            for (int r = 0; r < 3; ++r)
                j["transform"]["rotation"].push_back(
                    {res.transform.R(r, 0), res.transform.R(r, 1), res.transform.R(r, 2)});
            j["transform"]["translation"] = {res.transform.t.x(), res.transform.t.y(),
                                             res.transform.t.z()};
            j["stages"] = json::array();
            for (const auto& st : res.stages) {
                json sj{{"name", st.name}, {"ms", st.ms}};
                if (st.rte_m) sj["rte_m"] = *st.rte_m;
                if (st.rre_deg) sj["rre_deg"] = *st.rre_deg;
                j["stages"].push_back(sj);
            }
            if (have_gt) {
                const double e_t = hdm::rte(res.transform, gt);
                const double e_r = hdm::rre(res.transform, gt);
                j["rte_m"] = e_t;
                j["rre_deg"] = e_r;
                j["success"] = e_t < rc.thresholds.eps_trans && e_r < rc.thresholds.eps_rot;
            }
            std::cout << j.dump(2) << "\n";

            if (!reg_out_dir.empty()) {
                fs::create_directories(reg_out_dir);
                hdm::write_pose_file({res.transform}, reg_out_dir + "/estimated_pose.txt");
                std::vector<bool> inliers(res.coarse_correspondences.source.size(), false);
                if (have_gt)
                    inliers = hdm::classify_inliers(res.coarse_correspondences, gt,
                                                    rc.thresholds.eps_d);
                write_text(reg_out_dir + "/correspondences.csv",
                           hdm::correspondence_csv(res.coarse_correspondences, inliers));
            }
        } else if (*bench) {
            const hdm::PipelineParams pp = pipeline_params(store, rc);
            std::vector<hdm::DatasetPair> listing;
            hdm::PairProvider provider;
            std::size_t n = bench_n;
            if (!bench_pairs_file.empty()) {
                listing = hdm::read_pair_list(bench_pairs_file);
                provider = dataset_provider(listing);
                n = listing.size();
            } else {
                scene.seed = rc.pipeline.seed;
                provider = synth_provider(scene);
            }
            const hdm::BenchmarkReport report =
                hdm::benchmark(provider, n, rc.pipeline, rc.thresholds, pp);
            fs::create_directories(bench_out);
            write_text(bench_out + "/per_pair.csv", hdm::per_pair_csv(report));
            const std::vector<double> rte_grid = {0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0};
            const std::vector<double> rre_grid = {0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 15.0};
            write_text(bench_out + "/recall_vs_rte.csv",
                       hdm::curve_csv(hdm::recall_vs_rte(report, rc.thresholds, rte_grid)));
            write_text(bench_out + "/recall_vs_rre.csv",
                       hdm::curve_csv(hdm::recall_vs_rre(report, rc.thresholds, rre_grid)));
            std::printf("pairs %zu recall %.3f rte_mean %.3f rre_mean %.3f ms_mean %.1f\n", n,
                        report.recall, report.rte_mean, report.rre_mean, report.ms_mean);
        } else if (*ablate) {
            const hdm::PipelineParams pp = pipeline_params(store, rc);
            std::vector<hdm::DatasetPair> listing;
            hdm::PairProvider provider;
            std::size_t n = ablate_n;
            if (!ablate_pairs_file.empty()) {
                listing = hdm::read_pair_list(ablate_pairs_file);
                provider = dataset_provider(listing);
                n = listing.size();
            } else {
                scene.seed = rc.pipeline.seed;
                provider = synth_provider(scene);
            }
            const auto rows = hdm::ablation_suite(provider, n, rc.pipeline, rc.thresholds, pp);
            fs::create_directories(ablate_out);
            write_text(ablate_out + "/ablation.csv", hdm::ablation_csv(rows));
            for (const auto& row : rows)
                std::printf("%-14s recall %.3f rte_mean %.3f rre_mean %.3f\n",
                            row.variant.c_str(), row.report.recall, row.report.rte_mean,
                            row.report.rre_mean);
        } else if (*train) {
            hdm::PipelineConfig cfg = hdm::PipelineConfig::toy();
            cfg.seed = rc.pipeline.seed;
            hdm::TrainConfig tcfg;
            tcfg.epochs = train_epochs;
            tcfg.n_pairs = train_pairs;
            tcfg.seed = rc.pipeline.seed;
            tcfg.verbose = true;
            hdm::ModelParams matcher = hdm::init_matcher_params(cfg, cfg.seed);
            const hdm::TrainReport report = hdm::train_matcher(cfg, tcfg, matcher);
            fs::create_directories(train_out);
            hdm::save_params(matcher, train_out + "/matcher.hdmn");
            write_text(train_out + "/loss_curve.csv", hdm::loss_curve_csv(report));
            std::printf("initial %.6f final %.6f\n", report.initial_loss, report.final_loss);
        } else if (*ev) {
            const auto est = hdm::read_pose_file(ev_est);
            const auto gts = hdm::read_pose_file(ev_gt);
            if (est.size() != gts.size())
                throw hdm::MalformedFile("pose files differ in length");
            if (est.empty()) throw hdm::EmptyDataset("no poses to evaluate");
            std::size_t successes = 0;
            std::printf("pair_id,rte_m,rre_deg,success\n");
            for (std::size_t i = 0; i < est.size(); ++i) {
                const double e_t = hdm::rte(est[i], gts[i]);
                const double e_r = hdm::rre(est[i], gts[i]);
                const bool ok = e_t < rc.thresholds.eps_trans && e_r < rc.thresholds.eps_rot;
                successes += ok ? 1 : 0;
                std::printf("%zu,%.6f,%.6f,%d\n", i, e_t, e_r, ok ? 1 : 0);
            }
            std::fprintf(stderr, "recall %.3f\n",
                         static_cast<double>(successes) / static_cast<double>(est.size()));
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const hdm::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
