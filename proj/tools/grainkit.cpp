#include "grainkit/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace grainkit;

namespace {

void add_backend_flags(CLI::App* cmd, BackendOptions& b, bool labels_flag) {
    cmd->add_option("--backend", b.backend, "Prediction backend")
        ->check(CLI::IsMember({"oracle", "http", "replay"}))
        ->capture_default_str();
    if (labels_flag) cmd->add_option("--labels", b.labels, "Ground-truth labels PNG (oracle backend)");
    cmd->add_option("--replay-dir", b.replay_dir, "Recorded responses (replay backend)");
    cmd->add_option("--record", b.record_dir, "Record live responses into this directory");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Grain segmentation toolkit"};
    app.require_subcommand(1);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic micrograph with ground truth");
    gen_cmd->add_option("--config", gen.config, "JSON config (synth section)");
    gen_cmd->add_option("--out", gen.out, "Dataset root")->required();
    gen_cmd->add_option("--seed", gen.seed, "Generator seed");

    SegmentOptions seg;
    auto* seg_cmd = app.add_subcommand("segment", "Segment an image into grain masks");
    seg_cmd->add_option("image", seg.image, "Input image PNG")->required();
    add_backend_flags(seg_cmd, seg.backend, true);
    seg_cmd->add_option("--prompt-mode", seg.prompt_mode)->check(CLI::IsMember({"grid", "iterative"}))->capture_default_str();
    seg_cmd->add_option("--nms-score", seg.nms_score)->check(CLI::IsMember({"pred-iou", "edge-align"}))->capture_default_str();
    seg_cmd->add_option("--config", seg.config, "JSON config");
    seg_cmd->add_option("--out", seg.out, "Output directory")->required();
    seg_cmd->add_option("--workers", seg.workers, "Concurrent predict calls")->check(CLI::PositiveNumber)->capture_default_str();
    seg_cmd->add_option("--seed", seg.seed, "Corruption seed");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score masks against ground truth");
    eval_cmd->add_option("labels", ev.labels, "Ground-truth labels PNG")->required();
    eval_cmd->add_option("masks", ev.masks, "masks.json from segment")->required();
    eval_cmd->add_option("--out", ev.out, "Output directory")->required();
    eval_cmd->add_option("--bins", ev.bins, "Histogram bins")->check(CLI::PositiveNumber)->capture_default_str();

    TriageCmdOptions tri;
    auto* tri_cmd = app.add_subcommand("triage", "Attribute missed grains to failure categories");
    tri_cmd->add_option("labels", tri.labels, "Ground-truth labels PNG")->required();
    tri_cmd->add_option("run_dir", tri.run_dir, "Output directory of a segment run")->required();
    tri_cmd->add_option("--image", tri.image, "Image PNG (default: from the run manifest)");
    tri_cmd->add_option("--thresholds", tri.thresholds, "start:stop:step")->capture_default_str();
    add_backend_flags(tri_cmd, tri.backend, false);
    tri_cmd->add_option("--config", tri.config, "JSON config (default: the run's config)");
    tri_cmd->add_option("--out", tri.out, "Output directory")->required();
    tri_cmd->add_option("--points", tri.n_random_points, "Random prompts per grain")->check(CLI::PositiveNumber)->capture_default_str();
    tri_cmd->add_option("--workers", tri.workers)->check(CLI::PositiveNumber)->capture_default_str();
    tri_cmd->add_option("--seed", tri.seed, "Seed for point sampling and the oracle");

    CompareOptions cmp;
    auto* cmp_cmd = app.add_subcommand("compare", "Paired bootstrap comparison of two eval reports");
    cmp_cmd->add_option("report_a", cmp.report_a, "report.json of method A")->required();
    cmp_cmd->add_option("report_b", cmp.report_b, "report.json of method B")->required();
    cmp_cmd->add_option("--name-a", cmp.name_a);
    cmp_cmd->add_option("--name-b", cmp.name_b);
    cmp_cmd->add_option("--resamples", cmp.resamples)->check(CLI::PositiveNumber)->capture_default_str();
    cmp_cmd->add_option("--seed", cmp.seed)->capture_default_str();
    cmp_cmd->add_option("--out", cmp.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (*gen_cmd) {
            std::cout << cmd_gen(gen).string() << "\n";
        } else if (*seg_cmd) {
            const auto r = cmd_segment(seg);
            std::cout << r.masks.size() << " masks from " << r.prompts_used.size() << " prompts\n";
            if (r.partial) {
                std::cerr << "error: backend failed, partial result written: " << r.error << "\n";
                return kExitBackend;
            }
        } else if (*eval_cmd) {
            const auto report = cmd_eval(ev);
            std::cout << "mIoU " << report["miou"].get<double>() << "\n";
        } else if (*tri_cmd) {
            const auto report = cmd_triage(tri);
            for (size_t t = 0; t < report.thresholds.size(); ++t)
                std::printf("t=%.3f captured=%.4f recoverable=%.4f\n", report.thresholds[t],
                            report.fraction(t, TriageCategory::Captured), report.recoverable_fraction(t));
        } else if (*cmp_cmd) {
            const auto out = cmd_compare(cmp);
            std::cout << out.dump() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}
