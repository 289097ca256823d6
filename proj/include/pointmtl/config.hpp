#pragma once

#include <filesystem>
#include <string>

#include "pointmtl/evaluation.hpp"
#include "pointmtl/trainer.hpp"

namespace pointmtl {

struct EvalOptions {
    double probe_l2 = 1e-3;
    int64_t ahc_clusters = 0;  // 0 = use the true category count
    double partseg_fraction = 0.05;
    std::vector<int64_t> probe_widths = {256, 512, 128};
    int64_t probe_iters = 400;
};

// Everything that affects results lives in the config file; command-line flags
// only pick the subcommand, paths, masks, and seeds.
struct RunConfig {
    TrainConfig train;
    std::filesystem::path dataset_root = ".";
    std::filesystem::path manifest = "manifest.tsv";
    std::filesystem::path out_dir = "runs/out";
    EvalOptions eval;
};

// Strict parser: unknown keys anywhere are rejected. An optional "preset" key
// ("paper" or "desk") seeds the defaults before the remaining keys override
// them.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Fully resolved configuration, including every default; feeding the output
// back through the parser reproduces the run.
std::string dump_run_config(const RunConfig& cfg);

TaskMask parse_task_mask(const std::string& spec);

}  // namespace pointmtl
